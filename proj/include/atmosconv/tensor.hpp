// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace atmosconv {

using Array = Eigen::ArrayXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatMap = Eigen::Map<RowMat>;
using ConstRowMatMap = Eigen::Map<const RowMat>;

using Shape = std::vector<int>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Storage node behind a Tensor handle. Values are a flat row-major buffer;
/// the gradient buffer is allocated (zeroed) on first use.
struct TensorNode {
  Shape shape;
  Array values;
  Array grad;
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != values.size()) grad = Array::Zero(values.size());
  }
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_array(Shape shape, Array values, bool requires_grad = false);
  static Tensor from_data(Shape shape, const std::vector<double>& values,
                          bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t size() const { return node_->values.size(); }
  int dim(int i) const { return node_->shape.at(static_cast<std::size_t>(i)); }
  int ndim() const { return static_cast<int>(node_->shape.size()); }

  /// Handle semantics follow shared_ptr: a const Tensor still exposes mutable
  /// storage. Backward closures rely on this, as they hold const captures.
  Array& values() const { return node_->values; }

  /// Gradient buffer; allocated as zeros on first access.
  Array& grad() const {
    node_->ensure_grad();
    return node_->grad;
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) const { node_->requires_grad = flag; }
  void zero_grad() const {
    if (node_->grad.size() > 0) node_->grad.setZero();
  }

  /// Copy of the values with no grad tracking.
  Tensor detach() const { return from_array(node_->shape, node_->values, false); }

  /// Identity test: two handles on the same storage.
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  TensorNode* node() const { return node_.get(); }

 private:
  std::shared_ptr<TensorNode> node_;
};

/// Records backward closures pushed by forward ops. One backward sweep per
/// tape: running backward() twice throws, as the buffers a second sweep would
/// need are gone once the records release their captures.
class Tape {
 public:
  void record(std::function<void()> fn) { records_.push_back(std::move(fn)); }

  /// Reverse sweep from `loss` (must be scalar): seeds d(loss)/d(loss) = 1,
  /// runs the records last-to-first, then marks the tape consumed.
  void backward(Tensor& loss);

  bool consumed() const { return consumed_; }
  std::size_t size() const { return records_.size(); }

  /// When set, relu backward additionally zeroes entries whose incoming
  /// gradient is negative (guided backprop). Plain training leaves it false.
  bool guided_relu = false;

 private:
  std::vector<std::function<void()>> records_;
  bool consumed_ = false;
};

/// Tape currently receiving records on this thread; null means no recording.
Tape* active_tape();

/// Makes `tape` the active tape for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

/// Suspends recording for the scope's lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* prev_;
};

}  // namespace atmosconv
