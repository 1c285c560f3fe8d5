// SPDX-License-Identifier: Apache-2.0
#include "atmosconv/tensor.hpp"

#include <sstream>

namespace atmosconv {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return from_array(std::move(shape), Array(), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::int64_t n = numel(shape);
  return from_array(std::move(shape), Array::Constant(n, value), requires_grad);
}

Tensor Tensor::from_array(Shape shape, Array values, bool requires_grad) {
  const std::int64_t n = numel(shape);
  if (values.size() == 0 && n > 0) values = Array::Zero(n);
  if (values.size() != n) {
    throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape));
  }
  Tensor t;
  t.node_ = std::make_shared<TensorNode>();
  t.node_->shape = std::move(shape);
  t.node_->values = std::move(values);
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from_data(Shape shape, const std::vector<double>& values, bool requires_grad) {
  Array a(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) a[static_cast<Eigen::Index>(i)] = values[i];
  return from_array(std::move(shape), std::move(a), requires_grad);
}

void Tape::backward(Tensor& loss) {
  if (consumed_) throw std::logic_error("tape already consumed by a previous backward()");
  if (loss.size() != 1) {
    throw std::invalid_argument("backward() needs a scalar loss, got shape " +
                                shape_str(loss.shape()));
  }
  loss.grad()[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
  records_.clear();
  consumed_ = true;
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

NoGradScope::NoGradScope() : prev_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = prev_; }

}  // namespace atmosconv
