#pragma once
// Video-level instance query generation: a two-conv strided stem with a
// linear per-pixel projection stands in for backbone + pixel decoder, and a
// transformer decoder turns learnable initial queries into clip queries.

#include "ovvis/nn.hpp"
#include "ovvis/params.hpp"
#include "ovvis/posenc.hpp"
#include "ovvis/tensor.hpp"

namespace ovvis {

struct VideoClip {
  Tensor frames;  // T x Cin x H x W
  int clip_index = 0;
  std::vector<int> frame_indices;  // global frame ids
};

struct EncodedClip {
  Tensor features;          // C x T x H' x W'
  Tensor pixel_embeddings;  // C x T x H' x W'
  size_t stride = 0;
};

struct InstanceQuerySet {
  Tensor queries;  // N x C
  int clip_index = 0;
};

struct QueryGeneratorConfig {
  size_t in_channels = 16;
  size_t stem_channels = 16;
  size_t channels = 64;    // C, must be divisible by 4 for the encoding
  size_t num_queries = 20; // N
  size_t layers = 3;       // L
  size_t heads = 1;
  Activation activation = Activation::kRelu;
};

// Two stride-2 3x3 convs; total spatial stride 4.
constexpr size_t kStemStride = 4;

void register_query_generator_params(ParamStore& store,
                                     const QueryGeneratorConfig& cfg,
                                     uint64_t seed);

EncodedClip encode(Tape& t, const VideoClip& clip, const ParamStore& params,
                   const QueryGeneratorConfig& cfg);

// L decoder layers of cross-attention over the flattened spatio-temporal
// tokens (positional encoding added to keys only), self-attention and a
// feed-forward block, each with residual + layer norm. The learnable initial
// queries double as the additive query embedding at every layer, so the
// whole stack is permutation-equivariant in the query axis. L=0 returns
// init_queries unchanged.
InstanceQuerySet decode(Tape& t, const EncodedClip& encoded,
                        const PositionalEncoding& pos, const Tensor& init_queries,
                        const ParamStore& params, const QueryGeneratorConfig& cfg,
                        int clip_index = 0);

}  // namespace ovvis
