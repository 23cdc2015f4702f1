#include "ovvis/embedding_alignment.hpp"

#include <cmath>

namespace ovvis {

void ClipImageEmbeddings::validate_rows() const {
  if (embeddings.rank() != 2) {
    throw ShapeError("image embeddings must be T x C', got " +
                     shape_str(embeddings.shape()));
  }
  const size_t T = embeddings.dim(0), C = embeddings.dim(1);
  for (size_t r = 0; r < T; ++r) {
    double s = 0.0;
    for (size_t j = 0; j < C; ++j) s += embeddings.at(r, j) * embeddings.at(r, j);
    const double n = std::sqrt(s);
    if (n != 0.0 && std::abs(n - 1.0) > 1e-6) {
      throw NumericError("image embedding row " + std::to_string(r) +
                         " is not unit-norm (norm=" + std::to_string(n) + ")");
    }
  }
}

void register_alignment_params(ParamStore& store, const AlignmentConfig& cfg,
                               uint64_t seed) {
  const size_t C = cfg.channels, Cp = cfg.embed_dim;
  store.add("uea.mlp1.w", init_xavier("uea.mlp1.w", seed, {C, C}, C, C));
  store.add("uea.mlp1.b", Tensor::zeros({C}));
  store.add("uea.mlp2.w", init_xavier("uea.mlp2.w", seed, {C, Cp}, C, Cp));
  store.add("uea.mlp2.b", Tensor::zeros({Cp}));
  // Identity start for the square key/value projections: the attention
  // begins uniform and the value path begins as a pass-through, so margin
  // growth is mostly isotropic scale instead of having to unlearn a random
  // map. That keeps the learned alignment meaningful off the training
  // categories.
  Tensor eye({Cp, Cp});
  for (size_t i = 0; i < Cp; ++i) eye.at(i, i) = 1.0;
  store.add("uea.wk", eye.clone());
  store.add("uea.wv", eye.clone());
}

Tensor project_queries(Tape& t, const Tensor& q_clip, const ParamStore& params,
                       const AlignmentConfig& cfg) {
  if (q_clip.rank() != 2 || q_clip.dim(1) != cfg.channels) {
    throw ShapeError("project_queries: expected N x " + std::to_string(cfg.channels) +
                     ", got " + shape_str(q_clip.shape()));
  }
  Tensor hidden = apply_activation(
      t, linear(t, q_clip, params.at("uea.mlp1.w"), params.at("uea.mlp1.b")),
      cfg.activation);
  return linear(t, hidden, params.at("uea.mlp2.w"), params.at("uea.mlp2.b"));
}

ClassEmbeddings align(Tape& t, const Tensor& q_projected,
                      const ClipImageEmbeddings& image, const ParamStore& params,
                      const AlignmentConfig& cfg, int clip_index,
                      Tensor* attn_weights_out) {
  const Tensor& e_img = image.embeddings;
  if (e_img.rank() != 2 || e_img.dim(0) == 0) {
    throw ShapeError("align: empty clip (no frame embeddings)");
  }
  if (q_projected.rank() != 2 || q_projected.dim(1) != cfg.embed_dim ||
      e_img.dim(1) != cfg.embed_dim) {
    throw ShapeError("align: dimension mismatch " + shape_str(q_projected.shape()) +
                     " vs " + shape_str(e_img.shape()));
  }
  Tensor k = t.matmul(e_img, params.at("uea.wk"));
  Tensor v = t.matmul(e_img, params.at("uea.wv"));
  AttentionResult a = scaled_dot_attention(t, q_projected, k, v, cfg.heads);
  if (attn_weights_out) *attn_weights_out = a.weights;
  ClassEmbeddings out;
  out.embeddings = a.out;
  out.clip_index = clip_index;
  return out;
}

}  // namespace ovvis
