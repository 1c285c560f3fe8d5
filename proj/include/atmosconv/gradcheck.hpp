// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "atmosconv/tensor.hpp"

namespace atmosconv {

/// Central-difference gradient of a scalar function with respect to `params`,
/// evaluated by perturbing the parameter buffer in place: element i gets
/// (f(p + h e_i) - f(p - h e_i)) / (2h). `f` must be deterministic and must
/// read the current contents of `params` on every call.
inline Array finite_diff_grad(const std::function<double()>& f, Tensor& params,
                              double h = 1e-5) {
  if (h <= 0.0) throw std::invalid_argument("finite_diff_grad: h must be positive");
  Array g(params.size());
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double saved = params.values()[i];
    params.values()[i] = saved + h;
    const double fp = f();
    params.values()[i] = saved - h;
    const double fm = f();
    params.values()[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::runtime_error("finite_diff_grad: non-finite function value at element " +
                               std::to_string(i));
    }
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Like finite_diff_grad but only for the listed elements; avoids O(n) forward
/// passes when probing big parameter blocks.
inline Array finite_diff_grad_at(const std::function<double()>& f, Tensor& params,
                                 const std::vector<Eigen::Index>& indices, double h = 1e-5) {
  if (h <= 0.0) throw std::invalid_argument("finite_diff_grad_at: h must be positive");
  Array g(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const Eigen::Index i = indices[k];
    const double saved = params.values()[i];
    params.values()[i] = saved + h;
    const double fp = f();
    params.values()[i] = saved - h;
    const double fm = f();
    params.values()[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::runtime_error("finite_diff_grad_at: non-finite function value at element " +
                               std::to_string(i));
    }
    g[static_cast<Eigen::Index>(k)] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// |a - b| / max(1, |a|, |b|). The 1 in the denominator keeps near-zero
/// gradients from blowing up the ratio.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

inline double max_rel_err(const Array& a, const Array& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) worst = std::max(worst, rel_err(a[i], b[i]));
  return worst;
}

/// One operation's verification outcome in the gradient suite.
struct GradCheckEntry {
  std::string op;
  double worst_rel = 0.0;
  int probes = 0;
};

/// Analytic-vs-central-difference verification (h = 1e-5) of the normalized
/// conv forward (through the normalization), the part-sum regularizer, batch
/// and instance norm, and a full tiny_cnn cross-entropy loss; at least 20
/// parameter probes per operation. Callers compare worst_rel against their
/// tolerance (the shipped gate uses 1e-4).
std::vector<GradCheckEntry> run_gradient_suite(std::uint64_t seed = 1);

}  // namespace atmosconv
