// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>
#include <vector>

#include "atmosconv/tensor.hpp"

namespace atmosconv {

/// A convolution filter viewed as a flat weight vector. Multi-channel blocks
/// (IC x kH x kW) are treated as one vector per output channel: a single gain
/// or offset on the input window touches every tap equally, so the part sums
/// that matter are whole-block sums.
struct FilterKernel {
  Tensor weights;
  double eps = 1e-6;
};

/// w written as diff_coeff * diff_filter + avg_coeff * avg_filter, after an
/// optional global sign flip that makes the positive part the heavier one.
/// In the non-degenerate case diff_filter has equal part sums of 1 (a pure
/// differencing filter) and avg_filter is a pure averaging filter with part
/// sum 1. Single-sign inputs come back with diff_coeff = 0 and a zero
/// diff_filter.
struct Decomposition {
  double diff_coeff = 0.0;
  FilterKernel diff_filter;
  double avg_coeff = 0.0;
  FilterKernel avg_filter;
  bool sign_flip = false;
};

/// (w_plus, w_minus) with w_plus = w where w > 0 else 0 and
/// w_minus = -w where w < 0 else 0; both nonnegative, w_plus - w_minus == w
/// bit-exactly. Throws on NaN weights.
std::pair<Tensor, Tensor> split_parts(const FilterKernel& w);

/// (|w_plus| - |w_minus|) / (|w_plus| + |w_minus|) with L1 part norms.
/// Range [-1, 1]; +1 exactly when all nonzero weights are positive, -1 when
/// all are negative. The all-zero kernel gets r = 0 and sets *degenerate.
double positive_weight_ratio(const FilterKernel& w, bool* degenerate = nullptr);

/// Splits w into a differencing and an averaging component. Throws on an
/// all-zero kernel.
Decomposition decompose(const FilterKernel& w);

/// w_plus / (|w_plus| + eps) - w_minus / (|w_minus| + eps), composed from tape
/// primitives so gradients flow to the raw weights. A kernel with an empty
/// negative part loses nothing: the negative term is 0/eps = 0 and the result
/// is a pure averaging filter.
FilterKernel normalize_filter(const FilterKernel& w, double eps = 1e-6);

/// Row-blocked version of normalize_filter for a whole conv weight tensor:
/// treats `w` as `rows` flat filters and normalizes each independently.
/// Shape is preserved.
Tensor normalize_rows(const Tensor& w, int rows, double eps = 1e-6);

/// Sum over rows of |1 - |w_plus|| + |1 - |w_minus||, a scalar pulled toward
/// part sums of exactly 1. Callers scale it by their regularization strength.
Tensor soft_reg_rows(const Tensor& w, int rows);

/// soft_reg over a list of single-filter kernels.
Tensor soft_reg(const std::vector<FilterKernel>& kernels);

}  // namespace atmosconv
