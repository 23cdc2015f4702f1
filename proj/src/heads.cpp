#include "ovvis/heads.hpp"

#include <cmath>
#include <set>

namespace ovvis {

void TextEmbeddings::validate() const {
  if (embeddings.rank() != 2 || embeddings.dim(0) == 0) {
    throw ShapeError("text embeddings must be K x C' with K >= 1, got " +
                     shape_str(embeddings.shape()));
  }
  const size_t K = embeddings.dim(0), C = embeddings.dim(1);
  if (category_names.size() != K || novel_flags.size() != K) {
    throw ConfigError("text embeddings: names/flags do not match K=" + std::to_string(K));
  }
  std::set<std::string> unique(category_names.begin(), category_names.end());
  if (unique.size() != K) throw ConfigError("text embeddings: duplicate category names");
  for (size_t r = 0; r < K; ++r) {
    double s = 0.0;
    for (size_t j = 0; j < C; ++j) s += embeddings.at(r, j) * embeddings.at(r, j);
    if (std::abs(std::sqrt(s) - 1.0) > 1e-6) {
      throw NumericError("text embedding row " + std::to_string(r) + " is not unit-norm");
    }
  }
}

void register_heads_params(ParamStore& store, const HeadsConfig& cfg, uint64_t seed) {
  const size_t C = cfg.channels;
  auto mlp3 = [&](const std::string& prefix, size_t out_dim) {
    store.add(prefix + "l1.w", init_xavier(prefix + "l1.w", seed, {C, C}, C, C));
    store.add(prefix + "l1.b", Tensor::zeros({C}));
    store.add(prefix + "l2.w", init_xavier(prefix + "l2.w", seed, {C, C}, C, C));
    store.add(prefix + "l2.b", Tensor::zeros({C}));
    store.add(prefix + "l3.w", init_xavier(prefix + "l3.w", seed, {C, out_dim}, C, out_dim));
    store.add(prefix + "l3.b", Tensor::zeros({out_dim}));
  };
  mlp3("ins_head.", 1);
  mlp3("mask_head.", C);
}

namespace {

Tensor run_mlp3(Tape& t, const Tensor& x, const ParamStore& p,
                const std::string& prefix, Activation act) {
  Tensor h1 = apply_activation(t, linear(t, x, p.at(prefix + "l1.w"), p.at(prefix + "l1.b")), act);
  Tensor h2 = apply_activation(t, linear(t, h1, p.at(prefix + "l2.w"), p.at(prefix + "l2.b")), act);
  return linear(t, h2, p.at(prefix + "l3.w"), p.at(prefix + "l3.b"));
}

}  // namespace

ClassScores classify(Tape& t, const ClassEmbeddings& e_cls,
                     const TextEmbeddings& e_text, const HeadsConfig& cfg) {
  const Tensor& ec = e_cls.embeddings;
  const Tensor& et = e_text.embeddings;
  if (ec.rank() != 2 || et.rank() != 2 || ec.dim(1) != et.dim(1)) {
    throw ShapeError("classify: embedding dim mismatch " + shape_str(ec.shape()) +
                     " vs " + shape_str(et.shape()));
  }
  Tensor q = cfg.normalize_cls_embeddings ? t.l2_normalize(ec) : ec;
  Tensor logits = t.matmul(q, t.transpose(et));
  if (cfg.logit_scale != 1.0) logits = t.scale(logits, cfg.logit_scale);
  return ClassScores{t.softmax(logits)};
}

InstanceScores instance_head(Tape& t, const Tensor& q_clip, const ParamStore& params,
                             const HeadsConfig& cfg) {
  if (q_clip.rank() != 2 || q_clip.dim(1) != cfg.channels) {
    throw ShapeError("instance_head: expected N x " + std::to_string(cfg.channels) +
                     ", got " + shape_str(q_clip.shape()));
  }
  Tensor logits = run_mlp3(t, q_clip, params, "ins_head.", cfg.activation);
  return InstanceScores{t.sigmoid(logits)};
}

MaskPrediction mask_head(Tape& t, const Tensor& q_clip, const Tensor& e_pixel,
                         const ParamStore& params, const HeadsConfig& cfg) {
  if (q_clip.rank() != 2 || q_clip.dim(1) != cfg.channels) {
    throw ShapeError("mask_head: expected N x " + std::to_string(cfg.channels) +
                     ", got " + shape_str(q_clip.shape()));
  }
  if (e_pixel.rank() != 4 || e_pixel.dim(0) != cfg.channels) {
    throw ShapeError("mask_head: pixel embeddings must be C x T x h x w, got " +
                     shape_str(e_pixel.shape()));
  }
  const size_t N = q_clip.dim(0);
  const size_t C = e_pixel.dim(0), T = e_pixel.dim(1);
  const size_t h = e_pixel.dim(2), w = e_pixel.dim(3);
  Tensor e_mask = run_mlp3(t, q_clip, params, "mask_head.", cfg.activation);
  Tensor flat_pixels = t.reshape(e_pixel, {C, T * h * w});
  Tensor logits = t.matmul(e_mask, flat_pixels);
  MaskPrediction out;
  out.mask_embeddings = e_mask;
  out.masks = t.reshape(t.sigmoid(logits), {N, T, h, w});
  return out;
}

Detection detection_score(const std::vector<double>& cls_row, double ins_score) {
  Detection d;
  if (cls_row.empty()) return d;
  d.category = 0;
  double best = cls_row[0];
  for (size_t k = 1; k < cls_row.size(); ++k) {
    if (cls_row[k] > best) {
      best = cls_row[k];
      d.category = static_cast<int>(k);
    }
  }
  d.score = ins_score * best;
  return d;
}

}  // namespace ovvis
