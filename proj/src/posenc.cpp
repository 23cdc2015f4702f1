#include "ovvis/posenc.hpp"

#include <cmath>

namespace ovvis {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

Tensor spatial_encoding(size_t channels, size_t height, size_t width) {
  if (channels == 0 || channels % 4 != 0) {
    throw ConfigError("spatial_encoding: channels must be divisible by 4, got " +
                      std::to_string(channels));
  }
  if (height == 0 || width == 0) {
    throw ConfigError("spatial_encoding: empty grid");
  }
  const size_t half = channels / 2;
  Tensor out({channels, 1, height, width});
  for (size_t c = 0; c < channels; ++c) {
    const bool is_y = c < half;
    const size_t j = is_y ? c : c - half;  // index within the half
    const size_t pair = j / 2;
    const double divisor =
        std::pow(10000.0, (2.0 * static_cast<double>(pair)) / static_cast<double>(half));
    for (size_t h = 0; h < height; ++h) {
      const double py = kTwoPi * static_cast<double>(h + 1) / static_cast<double>(height);
      for (size_t w = 0; w < width; ++w) {
        const double px = kTwoPi * static_cast<double>(w + 1) / static_cast<double>(width);
        const double p = is_y ? py : px;
        const double v = (j % 2 == 0) ? std::sin(p / divisor) : std::cos(p / divisor);
        out.at((c * height + h) * width + w) = v;
      }
    }
  }
  return out;
}

Tensor temporal_encoding(size_t channels, size_t frames) {
  if (channels == 0 || channels % 2 != 0) {
    throw ConfigError("temporal_encoding: channels must be even, got " +
                      std::to_string(channels));
  }
  if (frames == 0) throw ConfigError("temporal_encoding: zero frames");
  Tensor out({channels, frames, 1, 1});
  for (size_t c = 0; c < channels; ++c) {
    const size_t pair = c / 2;
    const double divisor =
        std::pow(10000.0, (2.0 * static_cast<double>(pair)) / static_cast<double>(channels));
    for (size_t t = 0; t < frames; ++t) {
      const double p = static_cast<double>(t) / divisor;
      out.at(c * frames + t) = (c % 2 == 0) ? std::sin(p) : std::cos(p);
    }
  }
  return out;
}

Tensor combine(const Tensor& spatial, const Tensor& temporal) {
  if (spatial.rank() != 4 || temporal.rank() != 4 || spatial.dim(1) != 1 ||
      temporal.dim(2) != 1 || temporal.dim(3) != 1) {
    throw ShapeError("combine: expected C x 1 x H x W and C x T x 1 x 1, got " +
                     shape_str(spatial.shape()) + " and " + shape_str(temporal.shape()));
  }
  if (spatial.dim(0) != temporal.dim(0)) {
    throw ShapeError("combine: channel mismatch " + shape_str(spatial.shape()) +
                     " vs " + shape_str(temporal.shape()));
  }
  const size_t C = spatial.dim(0), T = temporal.dim(1);
  const size_t H = spatial.dim(2), W = spatial.dim(3);
  Tensor out({C, T, H, W});
  for (size_t c = 0; c < C; ++c)
    for (size_t t = 0; t < T; ++t) {
      const double tv = temporal.at(c * T + t);
      const double* sp = spatial.data() + c * H * W;
      double* dst = out.data() + ((c * T + t) * H) * W;
      for (size_t i = 0; i < H * W; ++i) dst[i] = sp[i] + tv;
    }
  return out;
}

PositionalEncoding make_positional_encoding(size_t channels, size_t frames,
                                            size_t height, size_t width) {
  PositionalEncoding pe;
  pe.spatial = spatial_encoding(channels, height, width);
  pe.temporal = temporal_encoding(channels, frames);
  pe.combined = combine(pe.spatial, pe.temporal);
  return pe;
}

}  // namespace ovvis
