#pragma once
// Dense row-major f64 tensors plus a tape-based reverse-mode autodiff
// engine covering exactly the op set the pipeline needs.
//
// Usage model: parameters are Tensors with requires_grad set (which
// allocates a persistent grad buffer). Ops are members of Tape; a tape is
// built per forward pass and discarded afterwards. backward(loss)
// accumulates into every reachable leaf's grad buffer, additively across
// uses and across calls (the optimizer zeroes grads).
//
// Broadcasting on binary ops is limited to two cases: the right operand is
// a single-element scalar, or a rank-1 vector matching the left operand's
// trailing axis. Everything else is a ShapeError.
//
// Every op checks its output for NaN/Inf and throws NumericError instead of
// propagating silently.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "ovvis/common.hpp"

namespace ovvis {

class Tape;

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<size_t> shape);
  Tensor(std::vector<size_t> shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor zeros(std::vector<size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<size_t> shape, double v);

  const std::vector<size_t>& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  size_t dim(size_t i) const { return shape_.at(i); }
  size_t numel() const { return data_ ? data_->size() : 0; }
  bool defined() const { return static_cast<bool>(data_); }

  double* data() { return data_->data(); }
  const double* data() const { return data_->data(); }
  std::vector<double>& values() { return *data_; }
  const std::vector<double>& values() const { return *data_; }

  double& at(size_t flat) { return (*data_)[flat]; }
  double at(size_t flat) const { return (*data_)[flat]; }
  double& at(size_t r, size_t c) { return (*data_)[r * shape_[1] + c]; }
  double at(size_t r, size_t c) const { return (*data_)[r * shape_[1] + c]; }

  bool requires_grad() const { return requires_grad_; }
  // Marks the tensor as a leaf; allocates (or drops) the grad buffer.
  Tensor& set_requires_grad(bool rg);
  bool has_grad_buffer() const { return static_cast<bool>(grad_); }
  // Grad values viewed as a tensor sharing the underlying buffer.
  Tensor grad() const;
  void zero_grad();

  // Same data buffer, detached from any tape and gradient tracking.
  Tensor detach() const;
  // Deep copy, detached.
  Tensor clone() const;

  // True when all elements are finite.
  bool all_finite() const;

 private:
  std::vector<size_t> shape_;
  std::shared_ptr<std::vector<double>> data_;
  std::shared_ptr<std::vector<double>> grad_;  // leaves only
  bool requires_grad_ = false;
  Tape* tape_ = nullptr;  // producing tape for intermediates
  int node_ = -1;

  friend class Tape;
};

size_t shape_numel(const std::vector<size_t>& shape);

class Tape {
 public:
  // A non-recording tape computes forward values only; backward() on it is
  // an error and leaves are treated as constants.
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  size_t node_count() const { return nodes_.size(); }

  // ---- primitive ops ----
  Tensor matmul(const Tensor& a, const Tensor& b);
  // x: B x Cin x H x W, w: Cout x Cin x kh x kw, bias: {Cout}.
  Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
                size_t stride, size_t pad);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor div(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double c);
  Tensor add_scalar(const Tensor& a, double c);
  Tensor relu(const Tensor& a);
  Tensor gelu(const Tensor& a);
  Tensor sigmoid(const Tensor& a);
  // Softmax over the trailing axis, max-subtracted for stability.
  Tensor softmax(const Tensor& a);
  // Normalizes the trailing axis; gamma/beta have that axis's extent.
  Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    double eps = 1e-5);
  Tensor transpose(const Tensor& a);  // rank-2
  Tensor permute(const Tensor& a, const std::vector<size_t>& perm);
  Tensor reshape(const Tensor& a, std::vector<size_t> shape);
  Tensor reduce_sum(const Tensor& a);   // -> {1}
  Tensor reduce_mean(const Tensor& a);  // -> {1}
  Tensor concat(const std::vector<Tensor>& parts, size_t axis = 0);
  // Divides each trailing-axis row by max(||row||, eps).
  Tensor l2_normalize(const Tensor& a, double eps = 1e-12);
  // a[index, ...]; rank-1 input yields {1}.
  Tensor slice_index(const Tensor& a, size_t index);
  Tensor slice_cols(const Tensor& a, size_t start, size_t len);  // rank-2
  // Mean binary cross-entropy; target is treated as a constant. Predictions
  // are clamped to [1e-12, 1-1e-12] inside the log.
  Tensor bce_mean(const Tensor& pred, const Tensor& target);

  // Populates grad buffers of every requires_grad leaf reachable from loss.
  void backward(const Tensor& loss);

 private:
  struct Node {
    const char* op;
    size_t out_numel = 0;
    std::vector<double> grad;
    bool grad_live = false;
    std::shared_ptr<std::vector<double>> leaf_sink;
    std::function<void(Tape&, const std::vector<double>&)> backprop;
  };

  int resolve_input(const Tensor& t);
  std::vector<double>* grad_dest(int id);
  Tensor finish(const char* op, std::vector<size_t> shape,
                std::vector<double> values,
                const std::vector<const Tensor*>& inputs,
                const std::function<std::function<void(Tape&, const std::vector<double>&)>(
                    const std::vector<int>&)>& bind_backprop);

  bool recording_;
  std::vector<Node> nodes_;
  std::unordered_map<const void*, int> leaf_ids_;
};

// Max relative error between analytic and central-difference gradients of f
// at x. Non-scalar outputs are reduced with a fixed pseudo-random weighting
// so one backward pass covers the whole Jacobian. NaN in either estimate
// throws NumericError naming the element.
using TensorFn = std::function<Tensor(Tape&, const Tensor&)>;
double grad_check(const TensorFn& f, const Tensor& x, double eps = 1e-5);

}  // namespace ovvis
