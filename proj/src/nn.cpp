#include "ovvis/nn.hpp"

#include <cmath>

namespace ovvis {

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "gelu") return Activation::kGelu;
  throw ConfigError("unknown activation: " + s);
}

std::string to_string(Activation a) {
  return a == Activation::kRelu ? "relu" : "gelu";
}

AttentionResult scaled_dot_attention(Tape& t, const Tensor& q, const Tensor& k,
                                     const Tensor& v, size_t heads) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) ||
      k.dim(0) != v.dim(0)) {
    throw ShapeError("attention: incompatible shapes " + shape_str(q.shape()) + ", " +
                     shape_str(k.shape()) + ", " + shape_str(v.shape()));
  }
  if (k.dim(0) == 0) throw ShapeError("attention: no keys");
  if (heads == 0 || q.dim(1) % heads != 0 || v.dim(1) % heads != 0) {
    throw ConfigError("attention: head count " + std::to_string(heads) +
                      " must divide feature dims");
  }
  const size_t dh = q.dim(1) / heads;
  const size_t dvh = v.dim(1) / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs, wts;
  outs.reserve(heads);
  wts.reserve(heads);
  for (size_t h = 0; h < heads; ++h) {
    Tensor qh = heads == 1 ? q : t.slice_cols(q, h * dh, dh);
    Tensor kh = heads == 1 ? k : t.slice_cols(k, h * dh, dh);
    Tensor vh = heads == 1 ? v : t.slice_cols(v, h * dvh, dvh);
    Tensor scores = t.scale(t.matmul(qh, t.transpose(kh)), inv_sqrt);
    Tensor w = t.softmax(scores);
    outs.push_back(t.matmul(w, vh));
    wts.push_back(w);
  }
  AttentionResult r;
  r.out = heads == 1 ? outs[0] : t.concat(outs, 1);
  r.weights = heads == 1 ? wts[0] : t.concat(wts, 0);
  return r;
}

}  // namespace ovvis
