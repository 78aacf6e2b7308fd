#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace a4g {

using Shape = std::vector<int64_t>;

/// Thrown when an operation would produce or has produced NaN/Inf values.
struct NonFiniteError : std::runtime_error {
  explicit NonFiniteError(const std::string& what) : std::runtime_error(what) {}
};

class Tape;

/// Dense row-major tensor of 64-bit reals. Values are immutable after
/// construction; copies share storage. A tensor may be attached to a Tape,
/// in which case operations on it are recorded for reverse-mode autodiff.
class Tensor {
 public:
  Tensor();  // rank-0 zero
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double v);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int axis) const { return shape_.at(static_cast<size_t>(axis)); }
  int64_t size() const { return static_cast<int64_t>(data_->size()); }
  const std::vector<double>& values() const& { return *data_; }
  // Copies out of temporaries so `f().values()` cannot dangle in range-for.
  std::vector<double> values() && { return *data_; }

  /// Scalar extraction; requires size() == 1.
  double value() const;

  bool tracked() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

  /// Copy of this tensor without tape attachment.
  Tensor detached() const;

 private:
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  Tape* tape_ = nullptr;
  int node_ = -1;
  friend class Tape;
};

int64_t shape_size(const Shape& shape);
bool same_shape(const Shape& a, const Shape& b);
std::string shape_str(const Shape& shape);

/// Reverse-mode gradient tape. Single-threaded; explicitly created per
/// training step and consumed by backward().
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers `value` as a differentiable leaf and returns the tracked copy.
  Tensor leaf(const Tensor& value);

  /// Runs the backward pass from a scalar loss. Consumes the tape: no
  /// further recording or backward calls are allowed afterwards.
  void backward(const Tensor& loss);

  /// Gradient of the loss with respect to a tracked tensor. Valid after
  /// backward(); zero tensor if the loss does not depend on it.
  Tensor grad(const Tensor& t) const;

  bool consumed() const { return consumed_; }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }

  // Recording interface used by op implementations.
  using BackwardFn = std::function<void(const std::vector<double>& out_grad, Tape& tape)>;
  Tensor emit(Tensor value, std::vector<int> parents, BackwardFn fn);
  std::vector<double>& grad_buffer(int node);

 private:
  struct Node {
    int64_t size = 0;
    Shape shape;
    std::vector<int> parents;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  std::vector<char> touched_;
  bool consumed_ = false;
  bool in_backward_ = false;
};

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double c);
Tensor sub(const Tensor& a, double c);
Tensor sub(double c, const Tensor& a);
Tensor mul(const Tensor& a, double c);
Tensor div(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);

// ---- reductions ----
Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, const std::vector<int>& axes);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, const std::vector<int>& axes);
Tensor max_reduce(const Tensor& a, const std::vector<int>& axes);  // forward-only
Tensor l2norm(const Tensor& a);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// ---- normalization / attention ----
Tensor layernorm(const Tensor& a, const Tensor& scale, const Tensor& shift, double eps);
Tensor softmax_rows(const Tensor& a);
Tensor softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v);

// ---- structural (all lossless rearrangements, differentiable) ----
Tensor reshape(const Tensor& a, Shape shape);
Tensor gather_flat(const Tensor& a, std::vector<int64_t> index, Shape out_shape);
Tensor gather_rows(const Tensor& a, const std::vector<int64_t>& rows);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, int64_t start, int64_t len);
Tensor concat_cols(std::span<const Tensor> parts);

// ---- row-broadcast helpers for [n,d] matrices with [d] vectors ----
Tensor add_rowwise(const Tensor& mat, const Tensor& vec);
Tensor mul_rowwise(const Tensor& mat, const Tensor& vec);

}  // namespace a4g
