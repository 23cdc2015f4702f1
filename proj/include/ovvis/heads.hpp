#pragma once
// Prediction heads: open-vocabulary classification against text prototypes,
// a three-layer objectness head, and the mask head that dots mask embeddings
// with per-pixel embeddings.

#include "ovvis/embedding_alignment.hpp"
#include "ovvis/nn.hpp"
#include "ovvis/params.hpp"

namespace ovvis {

struct TextEmbeddings {
  Tensor embeddings;  // K x C', unit rows
  std::vector<std::string> category_names;
  std::vector<bool> novel_flags;

  void validate() const;
};

struct ClassScores {
  Tensor scores;  // N x K, rows sum to 1
};

struct InstanceScores {
  Tensor scores;  // N x 1, in (0, 1)
};

struct MaskPrediction {
  Tensor masks;            // N x T x h x w, soft values in (0, 1)
  Tensor mask_embeddings;  // N x C
};

struct HeadsConfig {
  size_t channels = 64;  // C
  double logit_scale = 1.0;
  bool normalize_cls_embeddings = false;
  Activation activation = Activation::kRelu;
};

void register_heads_params(ParamStore& store, const HeadsConfig& cfg, uint64_t seed);

// S_cls = softmax over K of E_cls . E_text^T (optionally with L2-normalized
// class embeddings and a logit scale; both default to the plain dot product).
ClassScores classify(Tape& t, const ClassEmbeddings& e_cls,
                     const TextEmbeddings& e_text, const HeadsConfig& cfg);

InstanceScores instance_head(Tape& t, const Tensor& q_clip, const ParamStore& params,
                             const HeadsConfig& cfg);

// E_mask = MLP3(q); mask[n,t,y,x] = sigmoid(sum_c E_mask[n,c] * E_pixel[c,t,y,x]).
MaskPrediction mask_head(Tape& t, const Tensor& q_clip, const Tensor& e_pixel,
                         const ParamStore& params, const HeadsConfig& cfg);

// Detection score used at inference: objectness times the best class
// probability; the class is the argmax.
struct Detection {
  int category = -1;
  double score = 0.0;
};
Detection detection_score(const std::vector<double>& cls_row, double ins_score);

// Evaluation-time binarization threshold for soft masks.
constexpr double kMaskBinarizeThreshold = 0.5;

}  // namespace ovvis
