#pragma once
// Small shared building blocks: linear layers, MLPs and scaled dot-product
// attention. Weights use the [in x out] layout so y = x.W + b.

#include "ovvis/tensor.hpp"

namespace ovvis {

enum class Activation { kRelu, kGelu };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

inline Tensor apply_activation(Tape& t, const Tensor& x, Activation a) {
  return a == Activation::kRelu ? t.relu(x) : t.gelu(x);
}

inline Tensor linear(Tape& t, const Tensor& x, const Tensor& w, const Tensor& b) {
  return t.add(t.matmul(x, w), b);
}

struct AttentionResult {
  Tensor out;      // n x dv
  Tensor weights;  // (heads*n) x m, rows sum to 1
};

// softmax(Q.K^T / sqrt(d_head)).V per head, heads concatenated along the
// feature axis. No output projection here; callers add one when they want it.
AttentionResult scaled_dot_attention(Tape& t, const Tensor& q, const Tensor& k,
                                     const Tensor& v, size_t heads = 1);

}  // namespace ovvis
