#pragma once
// Non-parametric sinusoidal positional encodings: a 2-D spatial encoding,
// a 1-D temporal encoding over the frame index, and their broadcast sum.
// All outputs are plain (non-tracked) tensors and deterministic functions
// of their dimensions.

#include "ovvis/tensor.hpp"

namespace ovvis {

struct PositionalEncoding {
  Tensor spatial;   // C x 1 x H x W
  Tensor temporal;  // C x T x 1 x 1
  Tensor combined;  // C x T x H x W
};

// First C/2 channels encode normalized y, last C/2 normalized x. Within each
// half, even channels are sine and odd cosine at geometric frequencies
// 10000^(2i/(C/2)); positions are normalized to (0, 2pi]. C must be
// divisible by 4.
Tensor spatial_encoding(size_t channels, size_t height, size_t width);

// 1-D encoding over the raw frame index with the same scheme spread over all
// C channels (divisors 10000^(2i/C)); frame 0 maps to [0, 1, 0, 1, ...].
// C must be even.
Tensor temporal_encoding(size_t channels, size_t frames);

// combined[c,t,h,w] = spatial[c,0,h,w] + temporal[c,t,0,0], exactly.
Tensor combine(const Tensor& spatial, const Tensor& temporal);

PositionalEncoding make_positional_encoding(size_t channels, size_t frames,
                                            size_t height, size_t width);

}  // namespace ovvis
