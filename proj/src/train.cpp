#include "ovvis/train.hpp"

#include <cmath>
#include <cstdio>

#include "ovvis/assignment.hpp"
#include "ovvis/rng.hpp"

namespace ovvis {

namespace {

struct AdamState {
  std::map<std::string, std::vector<double>> m, v;
};

void adam_step(ParamStore& params, AdamState& state, size_t step_index, double lr,
               double weight_decay) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  const double t = static_cast<double>(step_index + 1);
  const double bc1 = 1.0 - std::pow(kBeta1, t);
  const double bc2 = 1.0 - std::pow(kBeta2, t);
  for (auto& [name, p] : params.entries()) {
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) {
      m.assign(p.numel(), 0.0);
      v.assign(p.numel(), 0.0);
    }
    Tensor grad = p.grad();
    for (size_t i = 0; i < p.numel(); ++i) {
      const double g = grad.at(i);
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g;
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.at(i) -= lr * (mhat / (std::sqrt(vhat) + kEps) + weight_decay * p.at(i));
    }
  }
}

std::vector<int> sample_clip_frames(Rng& rng, size_t total, size_t clip_len) {
  std::vector<int> picks;
  while (picks.size() < clip_len) {
    const int f = rng.uniform_int(0, static_cast<int>(total) - 1);
    if (std::find(picks.begin(), picks.end(), f) == picks.end()) picks.push_back(f);
  }
  std::sort(picks.begin(), picks.end());
  return picks;
}

}  // namespace

TrainResult train_model(Model& model, const Dataset& data, const TrainConfig& cfg,
                        std::ostream* log) {
  if (data.videos.empty()) throw ConfigError("train: dataset has no videos");
  const size_t base = data.cfg.num_base();

  // Training vocabulary: base categories only.
  TextEmbeddings vocab;
  vocab.embeddings = Tensor({base, data.cfg.embed_dim});
  for (size_t k = 0; k < base; ++k) {
    for (size_t c = 0; c < data.cfg.embed_dim; ++c) {
      vocab.embeddings.at(k, c) = data.prototypes.at(k, c);
    }
    vocab.category_names.push_back(data.category_names[k]);
    vocab.novel_flags.push_back(false);
  }
  vocab.validate();

  // Frame embeddings are a pure function of each video; compute once.
  std::vector<ClipImageEmbeddings> image_cache;
  image_cache.reserve(data.videos.size());
  for (const auto& v : data.videos) {
    image_cache.push_back(clip_image_provider(v, data.prototypes, data.cfg));
  }

  const LossWeights weights = cfg.loss_weights();
  Rng rng(mix_seed(cfg.seed, fnv1a("train_loop")));
  AdamState adam;
  TrainResult result;
  result.losses.reserve(cfg.steps);

  if (log) {
    (*log) << "step,loss,lr\n";
  }
  for (size_t step = 0; step < cfg.steps; ++step) {
    double lr = cfg.lr;
    const double frac =
        cfg.steps == 0 ? 0.0 : static_cast<double>(step) / static_cast<double>(cfg.steps);
    if (frac >= 0.9) lr *= 0.1;
    if (frac >= 0.95) lr *= 0.1;

    Tape tape;
    std::vector<Tensor> batch_losses;
    for (size_t b = 0; b < cfg.batch; ++b) {
      const size_t vi =
          static_cast<size_t>(rng.uniform_int(0, static_cast<int>(data.videos.size()) - 1));
      const SyntheticVideo& video = data.videos[vi];
      const std::vector<int> frames =
          sample_clip_frames(rng, video.num_frames(), cfg.clip_len);
      VideoClip clip = make_clip(video, frames, static_cast<int>(step));

      ClipImageEmbeddings img;
      img.source = image_cache[vi].source;
      img.embeddings = Tensor({frames.size(), data.cfg.embed_dim});
      for (size_t f = 0; f < frames.size(); ++f) {
        for (size_t c = 0; c < data.cfg.embed_dim; ++c) {
          img.embeddings.at(f, c) =
              image_cache[vi].embeddings.at(static_cast<size_t>(frames[f]), c);
        }
      }
      GroundTruthClip gt = clip_ground_truth(video, frames, kStemStride, base);

      try {
        ClipPrediction pred = model.forward(tape, clip, img, vocab);
        TrainingLoss tl = training_loss(tape, pred.s_ins, pred.s_cls, pred.masks, gt,
                                        weights, model.config().all_class_bce);
        batch_losses.push_back(tl.loss);
      } catch (const NumericError& e) {
        throw NumericError("training diverged at step " + std::to_string(step) + ": " +
                           e.what());
      }
    }
    Tensor loss = tape.scale(tape.reduce_sum(tape.concat(batch_losses)),
                             1.0 / static_cast<double>(cfg.batch));
    const double loss_value = loss.at(0);
    if (!std::isfinite(loss_value)) {
      throw NumericError("training diverged at step " + std::to_string(step));
    }
    model.params().zero_grads();
    tape.backward(loss);
    adam_step(model.params(), adam, step, lr, cfg.weight_decay);
    result.losses.push_back(loss_value);
    if (log) {
      char line[96];
      std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g\n", step, loss_value, lr);
      (*log) << line;
    }
  }
  return result;
}

}  // namespace ovvis
