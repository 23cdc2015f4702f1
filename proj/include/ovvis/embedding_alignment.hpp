#pragma once
// Unified embedding alignment: instance queries are projected into the
// vision-language embedding dimension by a two-layer MLP, then cross-attend
// into the per-frame image embeddings (separate key and value projections).
// The attention output alone is the class embedding; there is no residual.

#include <optional>

#include "ovvis/nn.hpp"
#include "ovvis/params.hpp"

namespace ovvis {

struct ClipImageEmbeddings {
  Tensor embeddings;   // T x C'
  std::string source;  // provider tag

  // Provider contract: every row has unit norm within 1e-6; all-zero rows
  // (empty frames) are allowed and flagged by the provider.
  void validate_rows() const;
};

struct ClassEmbeddings {
  Tensor embeddings;  // N x C'
  int clip_index = 0;
};

struct AlignmentConfig {
  size_t channels = 64;    // C of the query space
  size_t embed_dim = 16;   // C' of the vision-language space
  size_t heads = 1;
  Activation activation = Activation::kRelu;
};

void register_alignment_params(ParamStore& store, const AlignmentConfig& cfg,
                               uint64_t seed);

// Two MLP layers mapping N x C queries to N x C'.
Tensor project_queries(Tape& t, const Tensor& q_clip, const ParamStore& params,
                       const AlignmentConfig& cfg);

// E_cls = softmax(Q.K^T / sqrt(C')).V over the frame axis. Attention weights
// are exposed through attn_weights_out when a sink is provided.
ClassEmbeddings align(Tape& t, const Tensor& q_projected,
                      const ClipImageEmbeddings& image, const ParamStore& params,
                      const AlignmentConfig& cfg, int clip_index = 0,
                      Tensor* attn_weights_out = nullptr);

}  // namespace ovvis
