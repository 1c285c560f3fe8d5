// SPDX-License-Identifier: Apache-2.0
#include "atmosconv/filter_algebra.hpp"

#include <cmath>

#include "atmosconv/ops.hpp"

namespace atmosconv {
namespace {

void check_finite(const Tensor& w, const char* op) {
  if (!w.values().isFinite().all()) {
    throw std::domain_error(std::string(op) + ": kernel has non-finite weights");
  }
}

}  // namespace

std::pair<Tensor, Tensor> split_parts(const FilterKernel& w) {
  check_finite(w.weights, "split_parts");
  Tensor plus = Tensor::from_array(w.weights.shape(), w.weights.values().max(0.0));
  Tensor minus = Tensor::from_array(w.weights.shape(), (-w.weights.values()).max(0.0));
  return {plus, minus};
}

double positive_weight_ratio(const FilterKernel& w, bool* degenerate) {
  check_finite(w.weights, "positive_weight_ratio");
  const double sp = w.weights.values().max(0.0).sum();
  const double sn = (-w.weights.values()).max(0.0).sum();
  if (degenerate) *degenerate = (sp + sn == 0.0);
  if (sp + sn == 0.0) return 0.0;
  return (sp - sn) / (sp + sn);
}

Decomposition decompose(const FilterKernel& w) {
  check_finite(w.weights, "decompose");
  Array v = w.weights.values();
  const bool flip = (-v).max(0.0).sum() > v.max(0.0).sum();
  if (flip) v = -v;
  const double sp = v.max(0.0).sum();
  const double sn = (-v).max(0.0).sum();
  if (sp + sn == 0.0) throw std::invalid_argument("decompose: all-zero kernel");

  Decomposition d;
  d.sign_flip = flip;
  const Array plus = v.max(0.0);
  const Array minus = (-v).max(0.0);
  d.avg_filter = FilterKernel{Tensor::from_array(w.weights.shape(), plus / sp), w.eps};
  d.avg_coeff = sp - sn;
  if (sn == 0.0) {
    // Single-sign input: pure averaging, nothing to difference.
    d.diff_coeff = 0.0;
    d.diff_filter = FilterKernel{Tensor::zeros(w.weights.shape()), w.eps};
  } else {
    d.diff_coeff = sn;
    d.diff_filter = FilterKernel{Tensor::from_array(w.weights.shape(), plus / sp - minus / sn),
                                 w.eps};
  }
  return d;
}

Tensor normalize_rows(const Tensor& w, int rows, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("normalize_rows: eps must be positive");
  Tensor pos = relu(w);
  Tensor neg = relu(scale(w, -1.0));
  Tensor sp = row_sums(pos, rows);
  Tensor sn = row_sums(neg, rows);
  return sub(row_div(pos, sp, rows, eps), row_div(neg, sn, rows, eps));
}

FilterKernel normalize_filter(const FilterKernel& w, double eps) {
  check_finite(w.weights, "normalize_filter");
  return FilterKernel{normalize_rows(w.weights, 1, eps), eps};
}

Tensor soft_reg_rows(const Tensor& w, int rows) {
  Tensor sp = row_sums(relu(w), rows);
  Tensor sn = row_sums(relu(scale(w, -1.0)), rows);
  Tensor dev_p = abs_val(add_const(scale(sp, -1.0), 1.0));
  Tensor dev_n = abs_val(add_const(scale(sn, -1.0), 1.0));
  return sum(add(dev_p, dev_n));
}

Tensor soft_reg(const std::vector<FilterKernel>& kernels) {
  if (kernels.empty()) throw std::invalid_argument("soft_reg: empty kernel list");
  Tensor total = soft_reg_rows(kernels[0].weights, 1);
  for (std::size_t i = 1; i < kernels.size(); ++i) {
    total = add(total, soft_reg_rows(kernels[i].weights, 1));
  }
  return total;
}

}  // namespace atmosconv
