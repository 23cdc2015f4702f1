#include "ovvis/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "ovvis/rng.hpp"

namespace ovvis {

namespace {

constexpr double kBceClamp = 1e-12;

void ensure_finite(const std::vector<double>& v, const char* op) {
  for (size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw NumericError(std::string(op) + ": non-finite output at flat index " +
                         std::to_string(i));
    }
  }
}

enum class BinKind { kSame, kScalar, kRowVec };

// Binary ops accept identical shapes, a single-element right operand, or a
// rank-1 right operand matching the left trailing axis.
BinKind binary_kind(const std::vector<size_t>& a, const std::vector<size_t>& b,
                    const char* op) {
  if (a == b) return BinKind::kSame;
  if (shape_numel(b) == 1) return BinKind::kScalar;
  if (b.size() == 1 && !a.empty() && b[0] == a.back()) return BinKind::kRowVec;
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) +
                   " and " + shape_str(b));
}

std::vector<size_t> strides_of(const std::vector<size_t>& shape) {
  std::vector<size_t> st(shape.size(), 1);
  for (size_t i = shape.size(); i-- > 1;) st[i - 1] = st[i] * shape[i];
  return st;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

size_t shape_numel(const std::vector<size_t>& shape) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<size_t> shape)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<double>>(shape_numel(shape_), 0.0)) {}

Tensor::Tensor(std::vector<size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<double>>(std::move(values))) {
  if (data_->size() != shape_numel(shape_)) {
    throw ShapeError("tensor: " + std::to_string(data_->size()) +
                     " values for shape " + shape_str(shape_));
  }
}

Tensor Tensor::full(std::vector<size_t> shape, double v) {
  Tensor t(std::move(shape));
  std::fill(t.data_->begin(), t.data_->end(), v);
  return t;
}

Tensor& Tensor::set_requires_grad(bool rg) {
  requires_grad_ = rg;
  if (rg) {
    if (!grad_) grad_ = std::make_shared<std::vector<double>>(numel(), 0.0);
  } else {
    grad_.reset();
  }
  return *this;
}

Tensor Tensor::grad() const {
  if (!grad_) throw std::logic_error("tensor has no gradient buffer");
  Tensor g;
  g.shape_ = shape_;
  g.data_ = grad_;
  return g;
}

void Tensor::zero_grad() {
  if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
}

Tensor Tensor::detach() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = data_;
  return t;
}

Tensor Tensor::clone() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = std::make_shared<std::vector<double>>(*data_);
  return t;
}

bool Tensor::all_finite() const {
  for (double v : *data_)
    if (!std::isfinite(v)) return false;
  return true;
}

// ---------------------------------------------------------------- tape core

int Tape::resolve_input(const Tensor& t) {
  if (t.tape_ == this && t.node_ >= 0) return t.node_;
  if (t.tape_ != nullptr && t.tape_ != this && t.node_ >= 0 && t.requires_grad_) {
    throw std::logic_error("tensor is an intermediate of a different tape");
  }
  if (!t.requires_grad_ || !recording_) return -1;
  const void* key = t.grad_.get();
  auto it = leaf_ids_.find(key);
  if (it != leaf_ids_.end()) return it->second;
  int id = static_cast<int>(nodes_.size());
  Node n;
  n.op = "leaf";
  n.out_numel = t.numel();
  n.leaf_sink = t.grad_;
  nodes_.push_back(std::move(n));
  leaf_ids_.emplace(key, id);
  return id;
}

std::vector<double>* Tape::grad_dest(int id) {
  if (id < 0) return nullptr;
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.leaf_sink) return n.leaf_sink.get();
  if (!n.grad_live) {
    n.grad.assign(n.out_numel, 0.0);
    n.grad_live = true;
  }
  return &n.grad;
}

Tensor Tape::finish(
    const char* op, std::vector<size_t> shape, std::vector<double> values,
    const std::vector<const Tensor*>& inputs,
    const std::function<std::function<void(Tape&, const std::vector<double>&)>(
        const std::vector<int>&)>& bind_backprop) {
  ensure_finite(values, op);
  Tensor out(std::move(shape), std::move(values));
  if (!recording_) return out;
  std::vector<int> ids(inputs.size(), -1);
  bool tracked = false;
  for (size_t i = 0; i < inputs.size(); ++i) {
    ids[i] = resolve_input(*inputs[i]);
    tracked = tracked || ids[i] >= 0;
  }
  if (!tracked) return out;
  Node n;
  n.op = op;
  n.out_numel = out.numel();
  n.backprop = bind_backprop(ids);
  nodes_.push_back(std::move(n));
  out.tape_ = this;
  out.node_ = static_cast<int>(nodes_.size()) - 1;
  out.requires_grad_ = true;
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " +
                     shape_str(loss.shape()));
  }
  if (!recording_) throw std::logic_error("backward on a non-recording tape");
  if (loss.tape_ != this || loss.node_ < 0) return;  // no tracked dependency
  (*grad_dest(loss.node_))[0] += 1.0;
  for (int id = loss.node_; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.leaf_sink || !n.grad_live || !n.backprop) continue;
    n.backprop(*this, n.grad);
  }
}

// ------------------------------------------------------------------ matmul

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  const size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  {
    const double* A = a.data();
    const double* B = b.data();
    for (size_t i = 0; i < m; ++i) {
      double* ci = out.data() + i * n;
      const double* ai = A + i * k;
      for (size_t l = 0; l < k; ++l) {
        const double av = ai[l];
        const double* bl = B + l * n;
        for (size_t j = 0; j < n; ++j) ci[j] += av * bl[j];
      }
    }
  }
  auto pa = a.data_, pb = b.data_;
  return finish("matmul", {m, n}, std::move(out), {&a, &b}, [=](const std::vector<int>& ids) {
    return [=](Tape& t, const std::vector<double>& g) {
      if (auto* ga = t.grad_dest(ids[0])) {
        // dA = g . B^T
        for (size_t i = 0; i < m; ++i)
          for (size_t l = 0; l < k; ++l) {
            double acc = 0.0;
            const double* gi = g.data() + i * n;
            const double* bl = pb->data() + l * n;
            for (size_t j = 0; j < n; ++j) acc += gi[j] * bl[j];
            (*ga)[i * k + l] += acc;
          }
      }
      if (auto* gb = t.grad_dest(ids[1])) {
        // dB = A^T . g
        for (size_t i = 0; i < m; ++i) {
          const double* ai = pa->data() + i * k;
          const double* gi = g.data() + i * n;
          for (size_t l = 0; l < k; ++l) {
            const double av = ai[l];
            double* bl = gb->data() + l * n;
            for (size_t j = 0; j < n; ++j) bl[j] += av * gi[j];
          }
        }
      }
    };
  });
}

// ------------------------------------------------------------------ conv2d

Tensor Tape::conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
                    size_t stride, size_t pad) {
  if (x.rank() != 4 || w.rank() != 4 || bias.rank() != 1 ||
      x.dim(1) != w.dim(1) || bias.dim(0) != w.dim(0)) {
    throw ShapeError("conv2d: incompatible shapes " + shape_str(x.shape()) +
                     ", " + shape_str(w.shape()) + ", " + shape_str(bias.shape()));
  }
  const size_t B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const size_t Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (H + 2 * pad < kh || W + 2 * pad < kw) {
    throw ShapeError("conv2d: kernel larger than padded input");
  }
  const size_t OH = (H + 2 * pad - kh) / stride + 1;
  const size_t OW = (W + 2 * pad - kw) / stride + 1;
  std::vector<double> out(B * Co * OH * OW, 0.0);
  const double* X = x.data();
  const double* K = w.data();
  const double* Bv = bias.data();
  for (size_t b = 0; b < B; ++b)
    for (size_t co = 0; co < Co; ++co)
      for (size_t oy = 0; oy < OH; ++oy)
        for (size_t ox = 0; ox < OW; ++ox) {
          double acc = Bv[co];
          for (size_t ci = 0; ci < Ci; ++ci)
            for (size_t ky = 0; ky < kh; ++ky) {
              const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
              if (iy < 0 || iy >= static_cast<long>(H)) continue;
              for (size_t kx = 0; kx < kw; ++kx) {
                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (ix < 0 || ix >= static_cast<long>(W)) continue;
                acc += X[((b * Ci + ci) * H + iy) * W + ix] *
                       K[((co * Ci + ci) * kh + ky) * kw + kx];
              }
            }
          out[((b * Co + co) * OH + oy) * OW + ox] = acc;
        }
  auto px = x.data_, pw = w.data_;
  return finish("conv2d", {B, Co, OH, OW}, std::move(out), {&x, &w, &bias},
                [=](const std::vector<int>& ids) {
    return [=](Tape& t, const std::vector<double>& g) {
      auto* gx = t.grad_dest(ids[0]);
      auto* gw = t.grad_dest(ids[1]);
      auto* gb = t.grad_dest(ids[2]);
      for (size_t b = 0; b < B; ++b)
        for (size_t co = 0; co < Co; ++co)
          for (size_t oy = 0; oy < OH; ++oy)
            for (size_t ox = 0; ox < OW; ++ox) {
              const double go = g[((b * Co + co) * OH + oy) * OW + ox];
              if (gb) (*gb)[co] += go;
              if (!gx && !gw) continue;
              for (size_t ci = 0; ci < Ci; ++ci)
                for (size_t ky = 0; ky < kh; ++ky) {
                  const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                  if (iy < 0 || iy >= static_cast<long>(H)) continue;
                  for (size_t kx = 0; kx < kw; ++kx) {
                    const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                    if (ix < 0 || ix >= static_cast<long>(W)) continue;
                    const size_t xi = ((b * Ci + ci) * H + iy) * W + ix;
                    const size_t wi = ((co * Ci + ci) * kh + ky) * kw + kx;
                    if (gx) (*gx)[xi] += go * (*pw)[wi];
                    if (gw) (*gw)[wi] += go * (*px)[xi];
                  }
                }
            }
    };
  });
}

// ------------------------------------------------------ elementwise binary

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  const BinKind kind = binary_kind(a.shape(), b.shape(), "add");
  const size_t n = a.numel();
  const size_t last = a.shape().empty() ? 1 : a.shape().back();
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) {
    const double bv = kind == BinKind::kSame    ? b.at(i)
                      : kind == BinKind::kScalar ? b.at(0)
                                                 : b.at(i % last);
    out[i] = a.at(i) + bv;
  }
  return finish("add", a.shape(), std::move(out), {&a, &b}, [=](const std::vector<int>& ids) {
    return [=](Tape& t, const std::vector<double>& g) {
      if (auto* ga = t.grad_dest(ids[0]))
        for (size_t i = 0; i < n; ++i) (*ga)[i] += g[i];
      if (auto* gb = t.grad_dest(ids[1])) {
        if (kind == BinKind::kSame)
          for (size_t i = 0; i < n; ++i) (*gb)[i] += g[i];
        else if (kind == BinKind::kScalar)
          for (size_t i = 0; i < n; ++i) (*gb)[0] += g[i];
        else
          for (size_t i = 0; i < n; ++i) (*gb)[i % last] += g[i];
      }
    };
  });
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  const BinKind kind = binary_kind(a.shape(), b.shape(), "sub");
  const size_t n = a.numel();
  const size_t last = a.shape().empty() ? 1 : a.shape().back();
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) {
    const double bv = kind == BinKind::kSame    ? b.at(i)
                      : kind == BinKind::kScalar ? b.at(0)
                                                 : b.at(i % last);
    out[i] = a.at(i) - bv;
  }
  return finish("sub", a.shape(), std::move(out), {&a, &b}, [=](const std::vector<int>& ids) {
    return [=](Tape& t, const std::vector<double>& g) {
      if (auto* ga = t.grad_dest(ids[0]))
        for (size_t i = 0; i < n; ++i) (*ga)[i] += g[i];
      if (auto* gb = t.grad_dest(ids[1])) {
        if (kind == BinKind::kSame)
          for (size_t i = 0; i < n; ++i) (*gb)[i] -= g[i];
        else if (kind == BinKind::kScalar)
          for (size_t i = 0; i < n; ++i) (*gb)[0] -= g[i];
        else
          for (size_t i = 0; i < n; ++i) (*gb)[i % last] -= g[i];
      }
    };
  });
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  const BinKind kind = binary_kind(a.shape(), b.shape(), "mul");
  const size_t n = a.numel();
  const size_t last = a.shape().empty() ? 1 : a.shape().back();
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) {
    const double bv = kind == BinKind::kSame    ? b.at(i)
                      : kind == BinKind::kScalar ? b.at(0)
                                                 : b.at(i % last);
    out[i] = a.at(i) * bv;
  }
  auto pa = a.data_, pb = b.data_;
  return finish("mul", a.shape(), std::move(out), {&a, &b}, [=](const std::vector<int>& ids) {
    return [=](Tape& t, const std::vector<double>& g) {
      if (auto* ga = t.grad_dest(ids[0])) {
        for (size_t i = 0; i < n; ++i) {
          const double bv = kind == BinKind::kSame    ? (*pb)[i]
                            : kind == BinKind::kScalar ? (*pb)[0]
                                                       : (*pb)[i % last];
          (*ga)[i] += g[i] * bv;
        }
      }
      if (auto* gb = t.grad_dest(ids[1])) {
        if (kind == BinKind::kSame)
          for (size_t i = 0; i < n; ++i) (*gb)[i] += g[i] * (*pa)[i];
        else if (kind == BinKind::kScalar)
          for (size_t i = 0; i < n; ++i) (*gb)[0] += g[i] * (*pa)[i];
        else
          for (size_t i = 0; i < n; ++i) (*gb)[i % last] += g[i] * (*pa)[i];
      }
    };
  });
}

Tensor Tape::div(const Tensor& a, const Tensor& b) {
  const BinKind kind = binary_kind(a.shape(), b.shape(), "div");
  const size_t n = a.numel();
  const size_t last = a.shape().empty() ? 1 : a.shape().back();
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) {
    const double bv = kind == BinKind::kSame    ? b.at(i)
                      : kind == BinKind::kScalar ? b.at(0)
                                                 : b.at(i % last);
    out[i] = a.at(i) / bv;
  }
  auto pa = a.data_, pb = b.data_;
  return finish("div", a.shape(), std::move(out), {&a, &b}, [=](const std::vector<int>& ids) {
    return [=](Tape& t, const std::vector<double>& g) {
      auto bval = [&](size_t i) {
        return kind == BinKind::kSame    ? (*pb)[i]
               : kind == BinKind::kScalar ? (*pb)[0]
                                          : (*pb)[i % last];
      };
      if (auto* ga = t.grad_dest(ids[0]))
        for (size_t i = 0; i < n; ++i) (*ga)[i] += g[i] / bval(i);
      if (auto* gb = t.grad_dest(ids[1])) {
        for (size_t i = 0; i < n; ++i) {
          const double bv = bval(i);
          const double contrib = -g[i] * (*pa)[i] / (bv * bv);
          if (kind == BinKind::kSame)
            (*gb)[i] += contrib;
          else if (kind == BinKind::kScalar)
            (*gb)[0] += contrib;
          else
            (*gb)[i % last] += contrib;
        }
      }
    };
  });
}

// ---------------------------------------------------------------- unary ops

Tensor Tape::scale(const Tensor& a, double c) {
  const size_t n = a.numel();
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = a.at(i) * c;
  return finish("scale", a.shape(), std::move(out), {&a}, [=](const std::vector<int>& ids) {
    return [=](Tape& t, const std::vector<double>& g) {
      if (auto* ga = t.grad_dest(ids[0]))
        for (size_t i = 0; i < n; ++i) (*ga)[i] += g[i] * c;
    };
  });
}

Tensor Tape::add_scalar(const Tensor& a, double c) {
  const size_t n = a.numel();
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = a.at(i) + c;
  return finish("add_scalar", a.shape(), std::move(out), {&a}, [=](const std::vector<int>& ids) {
    return [=](Tape& t, const std::vector<double>& g) {
      if (auto* ga = t.grad_dest(ids[0]))
        for (size_t i = 0; i < n; ++i) (*ga)[i] += g[i];
    };
  });
}

Tensor Tape::relu(const Tensor& a) {
  const size_t n = a.numel();
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = a.at(i) > 0.0 ? a.at(i) : 0.0;
  auto pa = a.data_;
  return finish("relu", a.shape(), std::move(out), {&a}, [=](const std::vector<int>& ids) {
    return [=](Tape& t, const std::vector<double>& g) {
      if (auto* ga = t.grad_dest(ids[0]))
        for (size_t i = 0; i < n; ++i)
          if ((*pa)[i] > 0.0) (*ga)[i] += g[i];
    };
  });
}

Tensor Tape::gelu(const Tensor& a) {
  const size_t n = a.numel();
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) {
    const double x = a.at(i);
    out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  auto pa = a.data_;
  return finish("gelu", a.shape(), std::move(out), {&a}, [=](const std::vector<int>& ids) {
    return [=](Tape& t, const std::vector<double>& g) {
      if (auto* ga = t.grad_dest(ids[0]))
        for (size_t i = 0; i < n; ++i) {
          const double x = (*pa)[i];
          const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
          const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
          (*ga)[i] += g[i] * (cdf + x * pdf);
        }
    };
  });
}

Tensor Tape::sigmoid(const Tensor& a) {
  const size_t n = a.numel();
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = stable_sigmoid(a.at(i));
  auto saved = std::make_shared<std::vector<double>>(out);
  return finish("sigmoid", a.shape(), std::move(out), {&a}, [=](const std::vector<int>& ids) {
    return [=](Tape& t, const std::vector<double>& g) {
      if (auto* ga = t.grad_dest(ids[0]))
        for (size_t i = 0; i < n; ++i) {
          const double y = (*saved)[i];
          (*ga)[i] += g[i] * y * (1.0 - y);
        }
    };
  });
}

Tensor Tape::softmax(const Tensor& a) {
  if (a.rank() == 0 || a.numel() == 0) {
    throw ShapeError("softmax: empty tensor");
  }
  const size_t d = a.shape().back();
  const size_t rows = a.numel() / d;
  std::vector<double> out(a.numel());
  for (size_t r = 0; r < rows; ++r) {
    const double* x = a.data() + r * d;
    double* y = out.data() + r * d;
    double mx = x[0];
    for (size_t j = 1; j < d; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (size_t j = 0; j < d; ++j) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    }
    for (size_t j = 0; j < d; ++j) y[j] /= sum;
  }
  auto saved = std::make_shared<std::vector<double>>(out);
  return finish("softmax", a.shape(), std::move(out), {&a}, [=](const std::vector<int>& ids) {
    return [=](Tape& t, const std::vector<double>& g) {
      if (auto* ga = t.grad_dest(ids[0]))
        for (size_t r = 0; r < rows; ++r) {
          const double* y = saved->data() + r * d;
          const double* gr = g.data() + r * d;
          double dot = 0.0;
          for (size_t j = 0; j < d; ++j) dot += gr[j] * y[j];
          double* dst = ga->data() + r * d;
          for (size_t j = 0; j < d; ++j) dst[j] += y[j] * (gr[j] - dot);
        }
    };
  });
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        double eps) {
  if (x.rank() == 0 || gamma.rank() != 1 || beta.rank() != 1 ||
      gamma.dim(0) != x.shape().back() || beta.dim(0) != x.shape().back()) {
    throw ShapeError("layer_norm: incompatible shapes " + shape_str(x.shape()) +
                     ", " + shape_str(gamma.shape()) + ", " + shape_str(beta.shape()));
  }
  const size_t d = x.shape().back();
  const size_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * d;
    double mean = 0.0;
    for (size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (size_t j = 0; j < d; ++j) {
      const double xh = (xr[j] - mean) * is;
      (*xhat)[r * d + j] = xh;
      out[r * d + j] = gamma.at(j) * xh + beta.at(j);
    }
  }
  auto pg = gamma.data_;
  return finish("layer_norm", x.shape(), std::move(out), {&x, &gamma, &beta},
                [=](const std::vector<int>& ids) {
    return [=](Tape& t, const std::vector<double>& g) {
      auto* gx = t.grad_dest(ids[0]);
      auto* gg = t.grad_dest(ids[1]);
      auto* gb = t.grad_dest(ids[2]);
      for (size_t r = 0; r < rows; ++r) {
        const double* gr = g.data() + r * d;
        const double* xh = xhat->data() + r * d;
        if (gg || gb) {
          for (size_t j = 0; j < d; ++j) {
            if (gg) (*gg)[j] += gr[j] * xh[j];
            if (gb) (*gb)[j] += gr[j];
          }
        }
        if (gx) {
          double mean_dxh = 0.0, mean_dxh_xh = 0.0;
          for (size_t j = 0; j < d; ++j) {
            const double dxh = gr[j] * (*pg)[j];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh[j];
          }
          mean_dxh /= static_cast<double>(d);
          mean_dxh_xh /= static_cast<double>(d);
          const double is = (*inv_std)[r];
          double* dst = gx->data() + r * d;
          for (size_t j = 0; j < d; ++j) {
            const double dxh = gr[j] * (*pg)[j];
            dst[j] += is * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
          }
        }
      }
    };
  });
}

// ------------------------------------------------------------- view/shape

Tensor Tape::transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: rank-2 required, got " + shape_str(a.shape()));
  const size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(a.numel());
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < c; ++j) out[j * r + i] = a.at(i, j);
  return finish("transpose", {c, r}, std::move(out), {&a}, [=](const std::vector<int>& ids) {
    return [=](Tape& t, const std::vector<double>& g) {
      if (auto* ga = t.grad_dest(ids[0]))
        for (size_t i = 0; i < r; ++i)
          for (size_t j = 0; j < c; ++j) (*ga)[i * c + j] += g[j * r + i];
    };
  });
}

Tensor Tape::permute(const Tensor& a, const std::vector<size_t>& perm) {
  if (perm.size() != a.rank()) {
    throw ShapeError("permute: order size mismatch for shape " + shape_str(a.shape()));
  }
  std::vector<bool> seen(perm.size(), false);
  for (size_t p : perm) {
    if (p >= perm.size() || seen[p]) throw ShapeError("permute: invalid axis order");
    seen[p] = true;
  }
  const size_t rank = a.rank();
  std::vector<size_t> out_shape(rank);
  for (size_t i = 0; i < rank; ++i) out_shape[i] = a.dim(perm[i]);
  const auto in_strides = strides_of(a.shape());
  const auto out_strides = strides_of(out_shape);
  const size_t n = a.numel();
  // Flat mapping out_index -> in_index, shared by forward and backward.
  auto map = std::make_shared<std::vector<size_t>>(n);
  std::vector<size_t> idx(rank, 0);
  for (size_t o = 0; o < n; ++o) {
    size_t in = 0;
    for (size_t i = 0; i < rank; ++i) in += idx[i] * in_strides[perm[i]];
    (*map)[o] = in;
    for (size_t i = rank; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  std::vector<double> out(n);
  for (size_t o = 0; o < n; ++o) out[o] = a.at((*map)[o]);
  (void)out_strides;
  return finish("permute", std::move(out_shape), std::move(out), {&a},
                [=](const std::vector<int>& ids) {
    return [=](Tape& t, const std::vector<double>& g) {
      if (auto* ga = t.grad_dest(ids[0]))
        for (size_t o = 0; o < n; ++o) (*ga)[(*map)[o]] += g[o];
    };
  });
}

Tensor Tape::reshape(const Tensor& a, std::vector<size_t> shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                     shape_str(shape));
  }
  std::vector<double> out(a.values());
  const size_t n = a.numel();
  return finish("reshape", std::move(shape), std::move(out), {&a},
                [=](const std::vector<int>& ids) {
    return [=](Tape& t, const std::vector<double>& g) {
      if (auto* ga = t.grad_dest(ids[0]))
        for (size_t i = 0; i < n; ++i) (*ga)[i] += g[i];
    };
  });
}

Tensor Tape::reduce_sum(const Tensor& a) {
  double s = 0.0;
  const size_t n = a.numel();
  for (size_t i = 0; i < n; ++i) s += a.at(i);
  return finish("reduce_sum", {1}, {s}, {&a}, [=](const std::vector<int>& ids) {
    return [=](Tape& t, const std::vector<double>& g) {
      if (auto* ga = t.grad_dest(ids[0]))
        for (size_t i = 0; i < n; ++i) (*ga)[i] += g[0];
    };
  });
}

Tensor Tape::reduce_mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("reduce_mean: empty tensor");
  double s = 0.0;
  const size_t n = a.numel();
  for (size_t i = 0; i < n; ++i) s += a.at(i);
  s /= static_cast<double>(n);
  return finish("reduce_mean", {1}, {s}, {&a}, [=](const std::vector<int>& ids) {
    return [=](Tape& t, const std::vector<double>& g) {
      if (auto* ga = t.grad_dest(ids[0])) {
        const double gm = g[0] / static_cast<double>(n);
        for (size_t i = 0; i < n; ++i) (*ga)[i] += gm;
      }
    };
  });
}

Tensor Tape::concat(const std::vector<Tensor>& parts, size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const size_t rank = parts[0].rank();
  if (axis >= rank) throw ShapeError("concat: axis out of range");
  std::vector<size_t> out_shape = parts[0].shape();
  for (size_t p = 1; p < parts.size(); ++p) {
    if (parts[p].rank() != rank) throw ShapeError("concat: rank mismatch");
    for (size_t i = 0; i < rank; ++i) {
      if (i == axis) continue;
      if (parts[p].dim(i) != out_shape[i]) {
        throw ShapeError("concat: shape mismatch " + shape_str(parts[p].shape()) +
                         " vs " + shape_str(parts[0].shape()));
      }
    }
    out_shape[axis] += parts[p].dim(axis);
  }
  size_t outer = 1, inner = 1;
  for (size_t i = 0; i < axis; ++i) outer *= out_shape[i];
  for (size_t i = axis + 1; i < rank; ++i) inner *= out_shape[i];
  std::vector<double> out(shape_numel(out_shape));
  const size_t out_block = out_shape[axis] * inner;
  size_t offset = 0;  // in units of inner, within a block
  struct Piece { size_t offset, axis_dim; };
  auto pieces = std::make_shared<std::vector<Piece>>();
  for (const Tensor& p : parts) {
    const size_t block = p.dim(axis) * inner;
    for (size_t o = 0; o < outer; ++o) {
      std::copy(p.data() + o * block, p.data() + (o + 1) * block,
                out.data() + o * out_block + offset);
    }
    pieces->push_back({offset, p.dim(axis)});
    offset += block;
  }
  std::vector<const Tensor*> ins;
  ins.reserve(parts.size());
  for (const Tensor& p : parts) ins.push_back(&p);
  return finish("concat", std::move(out_shape), std::move(out), ins,
                [=](const std::vector<int>& ids) {
    return [=](Tape& t, const std::vector<double>& g) {
      for (size_t p = 0; p < ids.size(); ++p) {
        auto* gp = t.grad_dest(ids[p]);
        if (!gp) continue;
        const size_t block = (*pieces)[p].axis_dim * inner;
        for (size_t o = 0; o < outer; ++o) {
          const double* src = g.data() + o * out_block + (*pieces)[p].offset;
          double* dst = gp->data() + o * block;
          for (size_t i = 0; i < block; ++i) dst[i] += src[i];
        }
      }
    };
  });
}

Tensor Tape::l2_normalize(const Tensor& a, double eps) {
  if (a.rank() == 0 || a.numel() == 0) throw ShapeError("l2_normalize: empty tensor");
  const size_t d = a.shape().back();
  const size_t rows = a.numel() / d;
  std::vector<double> out(a.numel());
  auto norms = std::make_shared<std::vector<double>>(rows);
  for (size_t r = 0; r < rows; ++r) {
    const double* x = a.data() + r * d;
    double s = 0.0;
    for (size_t j = 0; j < d; ++j) s += x[j] * x[j];
    const double nn = std::max(std::sqrt(s), eps);
    (*norms)[r] = nn;
    for (size_t j = 0; j < d; ++j) out[r * d + j] = x[j] / nn;
  }
  auto saved = std::make_shared<std::vector<double>>(out);
  return finish("l2_normalize", a.shape(), std::move(out), {&a},
                [=](const std::vector<int>& ids) {
    return [=](Tape& t, const std::vector<double>& g) {
      if (auto* ga = t.grad_dest(ids[0]))
        for (size_t r = 0; r < rows; ++r) {
          const double nn = (*norms)[r];
          const double* y = saved->data() + r * d;
          const double* gr = g.data() + r * d;
          double* dst = ga->data() + r * d;
          if (nn <= eps) {
            for (size_t j = 0; j < d; ++j) dst[j] += gr[j] / eps;
            continue;
          }
          double dot = 0.0;
          for (size_t j = 0; j < d; ++j) dot += gr[j] * y[j];
          for (size_t j = 0; j < d; ++j) dst[j] += (gr[j] - y[j] * dot) / nn;
        }
    };
  });
}

Tensor Tape::slice_index(const Tensor& a, size_t index) {
  if (a.rank() == 0 || index >= a.dim(0)) {
    throw ShapeError("slice_index: index " + std::to_string(index) +
                     " out of range for shape " + shape_str(a.shape()));
  }
  std::vector<size_t> out_shape(a.shape().begin() + 1, a.shape().end());
  if (out_shape.empty()) out_shape = {1};
  const size_t block = a.numel() / a.dim(0);
  std::vector<double> out(a.data() + index * block, a.data() + (index + 1) * block);
  return finish("slice_index", std::move(out_shape), std::move(out), {&a},
                [=](const std::vector<int>& ids) {
    return [=](Tape& t, const std::vector<double>& g) {
      if (auto* ga = t.grad_dest(ids[0]))
        for (size_t i = 0; i < block; ++i) (*ga)[index * block + i] += g[i];
    };
  });
}

Tensor Tape::slice_cols(const Tensor& a, size_t start, size_t len) {
  if (a.rank() != 2 || start + len > a.dim(1)) {
    throw ShapeError("slice_cols: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") out of shape " +
                     shape_str(a.shape()));
  }
  const size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<double> out(rows * len);
  for (size_t r = 0; r < rows; ++r)
    for (size_t j = 0; j < len; ++j) out[r * len + j] = a.at(r, start + j);
  return finish("slice_cols", {rows, len}, std::move(out), {&a},
                [=](const std::vector<int>& ids) {
    return [=](Tape& t, const std::vector<double>& g) {
      if (auto* ga = t.grad_dest(ids[0]))
        for (size_t r = 0; r < rows; ++r)
          for (size_t j = 0; j < len; ++j)
            (*ga)[r * cols + start + j] += g[r * len + j];
    };
  });
}

Tensor Tape::bce_mean(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("bce_mean: shape mismatch " + shape_str(pred.shape()) +
                     " vs " + shape_str(target.shape()));
  }
  const size_t n = pred.numel();
  if (n == 0) throw ShapeError("bce_mean: empty tensor");
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double p = std::clamp(pred.at(i), kBceClamp, 1.0 - kBceClamp);
    const double t = target.at(i);
    acc -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  acc /= static_cast<double>(n);
  auto pp = pred.data_;
  auto pt = target.data_;
  // Gradient flows to predictions only; targets are labels.
  return finish("bce_mean", {1}, {acc}, {&pred}, [=](const std::vector<int>& ids) {
    return [=](Tape& t, const std::vector<double>& g) {
      if (auto* gp = t.grad_dest(ids[0])) {
        const double gm = g[0] / static_cast<double>(n);
        for (size_t i = 0; i < n; ++i) {
          const double p = std::clamp((*pp)[i], kBceClamp, 1.0 - kBceClamp);
          const double tv = (*pt)[i];
          (*gp)[i] += gm * (p - tv) / (p * (1.0 - p));
        }
      }
    };
  });
}

// ---------------------------------------------------------------- gradcheck

double grad_check(const TensorFn& f, const Tensor& x, double eps) {
  // Probe the output size, then fix a deterministic projection so vector
  // outputs reduce to one scalar.
  Tensor probe_in = x.clone();
  size_t out_numel;
  {
    Tape probe(false);
    Tensor y = f(probe, probe_in);
    out_numel = y.numel();
  }
  Tensor r({out_numel});
  if (out_numel == 1) {
    r.at(0) = 1.0;
  } else {
    Rng rng(mix_seed(0x67726164u, out_numel));
    for (size_t i = 0; i < out_numel; ++i) {
      const double m = rng.uniform(0.25, 1.0);
      r.at(i) = rng.uniform() < 0.5 ? -m : m;
    }
  }
  auto project = [&](const Tensor& y) {
    double s = 0.0;
    for (size_t i = 0; i < y.numel(); ++i) s += y.at(i) * r.at(i);
    return s;
  };

  Tensor input = x.clone();
  input.set_requires_grad(true);
  std::vector<double> analytic;
  {
    Tape tape;
    Tensor y = f(tape, input);
    if (y.numel() != out_numel) throw ShapeError("grad_check: output size changed");
    Tensor flat = tape.reshape(y, {out_numel});
    Tensor weighted = tape.mul(flat, r);
    Tensor loss = tape.reduce_sum(weighted);
    tape.backward(loss);
    analytic = input.grad().values();
  }

  double max_err = 0.0;
  Tensor xp = x.clone();
  for (size_t i = 0; i < x.numel(); ++i) {
    const double orig = xp.at(i);
    xp.at(i) = orig + eps;
    Tape tp(false);
    const double fp = project(f(tp, xp));
    xp.at(i) = orig - eps;
    Tape tm(false);
    const double fm = project(f(tm, xp));
    xp.at(i) = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic[i];
    if (!std::isfinite(a) || !std::isfinite(numeric)) {
      throw NumericError("grad_check: non-finite gradient estimate at element " +
                         std::to_string(i));
    }
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    max_err = std::max(max_err, std::abs(a - numeric) / denom);
  }
  return max_err;
}

}  // namespace ovvis
