// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "atmosconv/tensor.hpp"

namespace atmosconv {

// Differentiable primitives. Each op computes its forward result immediately
// and, when a tape is active and an input requires grad, records a backward
// closure on that tape. Backward closures accumulate into .grad() with +=.
//
// All tensors are flat row-major; ops that need a 2D or NCHW interpretation
// take the logical dimensions explicitly or read them from the shape.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);
Tensor relu(const Tensor& a);
/// |a| elementwise; subgradient at 0 is 0, matching relu.
Tensor abs_val(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// a [M,K] x b [K,N] -> [M,N].
Tensor matmul(const Tensor& a, const Tensor& b);
/// a [M,N] + bias [N], broadcast down the rows.
Tensor bias_add_cols(const Tensor& a, const Tensor& bias);

/// Flat view of `a` as [rows, a.size()/rows]; returns per-row sums, shape [rows].
Tensor row_sums(const Tensor& a, int rows);
/// Flat view of `a` as [rows, cols]; divides row r by (d[r] + eps). Shape of `a`
/// is preserved. d must have `rows` elements.
Tensor row_div(const Tensor& a, const Tensor& d, int rows, double eps);

/// x [N,C,H,W], kernel [OC,C,KH,KW], optional bias [OC] (pass undefined Tensor
/// to omit). Zero padding. Output [N,OC,OH,OW], OH = (H+2p-KH)/stride + 1.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, int stride, int pad);

/// y[n,c,h,w] = a[c] * x[n,c,h,w] + b[c].
Tensor channel_affine(const Tensor& x, const Tensor& a, const Tensor& b);

/// 2x2 max pool, stride 2; trailing odd row/column dropped. Ties route the
/// gradient to the first maximum in window scan order.
Tensor maxpool2x2(const Tensor& x);

/// [N,C,H,W] -> [N,C] spatial mean.
Tensor global_avg_pool(const Tensor& x);

/// Per-channel standardization over (N,H,W) with learnable gamma/beta [C].
/// Training mode uses biased batch statistics and updates running stats in
/// place: running = (1-momentum)*running + momentum*batch. Eval mode uses the
/// running stats; both modes are differentiable.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, double momentum = 0.1, double eps = 1e-5);

/// Per-sample, per-channel standardization over (H,W); identical in training
/// and eval (no running statistics).
Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-9);

/// Mean softmax cross-entropy of logits [N,M] against integer labels (size N).
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// Row-wise argmax of logits [N,M]; first index wins ties. Not differentiable.
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace atmosconv
