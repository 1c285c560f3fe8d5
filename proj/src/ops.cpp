// SPDX-License-Identifier: Apache-2.0
#include "atmosconv/ops.hpp"

#include <cmath>
#include <cstdint>

namespace atmosconv {
namespace {

// Records run only when a tape is listening and something upstream is
// trainable; otherwise ops behave as plain array math.
bool tracked(std::initializer_list<const Tensor*> inputs) {
  if (!active_tape()) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

void check_same_size(const Tensor& a, const Tensor& b, const char* op) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(op) + ": size mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

// Gathers zero-padded KxK windows of one image into colT [C*KH*KW, OH*OW].
void im2col(const double* x, int C, int H, int W, int KH, int KW, int stride, int pad,
            int OH, int OW, RowMat& colT) {
  for (int c = 0; c < C; ++c) {
    const double* xc = x + static_cast<std::size_t>(c) * H * W;
    for (int kh = 0; kh < KH; ++kh)
      for (int kw = 0; kw < KW; ++kw) {
        double* row = colT.data() + static_cast<std::size_t>((c * KH + kh) * KW + kw) * OH * OW;
        for (int oh = 0; oh < OH; ++oh) {
          const int ih = oh * stride - pad + kh;
          double* dst = row + static_cast<std::size_t>(oh) * OW;
          if (ih < 0 || ih >= H) {
            for (int ow = 0; ow < OW; ++ow) dst[ow] = 0.0;
            continue;
          }
          const double* src = xc + static_cast<std::size_t>(ih) * W;
          for (int ow = 0; ow < OW; ++ow) {
            const int iw = ow * stride - pad + kw;
            dst[ow] = (iw >= 0 && iw < W) ? src[iw] : 0.0;
          }
        }
      }
  }
}

// Scatter-add transpose of im2col.
void col2im_add(const RowMat& dColT, int C, int H, int W, int KH, int KW, int stride, int pad,
                int OH, int OW, double* dx) {
  for (int c = 0; c < C; ++c) {
    double* dxc = dx + static_cast<std::size_t>(c) * H * W;
    for (int kh = 0; kh < KH; ++kh)
      for (int kw = 0; kw < KW; ++kw) {
        const double* row =
            dColT.data() + static_cast<std::size_t>((c * KH + kh) * KW + kw) * OH * OW;
        for (int oh = 0; oh < OH; ++oh) {
          const int ih = oh * stride - pad + kh;
          if (ih < 0 || ih >= H) continue;
          const double* src = row + static_cast<std::size_t>(oh) * OW;
          double* dst = dxc + static_cast<std::size_t>(ih) * W;
          for (int ow = 0; ow < OW; ++ow) {
            const int iw = ow * stride - pad + kw;
            if (iw >= 0 && iw < W) dst[iw] += src[ow];
          }
        }
      }
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_size(a, b, "add");
  Tensor y = Tensor::from_array(a.shape(), a.values() + b.values());
  if (tracked({&a, &b})) {
    y.set_requires_grad(true);
    active_tape()->record([a, b, y]() mutable {
      if (a.requires_grad()) a.grad() += y.grad();
      if (b.requires_grad()) b.grad() += y.grad();
    });
  }
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_size(a, b, "sub");
  Tensor y = Tensor::from_array(a.shape(), a.values() - b.values());
  if (tracked({&a, &b})) {
    y.set_requires_grad(true);
    active_tape()->record([a, b, y]() mutable {
      if (a.requires_grad()) a.grad() += y.grad();
      if (b.requires_grad()) b.grad() -= y.grad();
    });
  }
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_size(a, b, "mul");
  Tensor y = Tensor::from_array(a.shape(), a.values() * b.values());
  if (tracked({&a, &b})) {
    y.set_requires_grad(true);
    active_tape()->record([a, b, y]() mutable {
      if (a.requires_grad()) a.grad() += y.grad() * b.values();
      if (b.requires_grad()) b.grad() += y.grad() * a.values();
    });
  }
  return y;
}

Tensor scale(const Tensor& a, double c) {
  Tensor y = Tensor::from_array(a.shape(), a.values() * c);
  if (tracked({&a})) {
    y.set_requires_grad(true);
    active_tape()->record([a, y, c]() mutable { a.grad() += y.grad() * c; });
  }
  return y;
}

Tensor add_const(const Tensor& a, double c) {
  Tensor y = Tensor::from_array(a.shape(), a.values() + c);
  if (tracked({&a})) {
    y.set_requires_grad(true);
    active_tape()->record([a, y]() mutable { a.grad() += y.grad(); });
  }
  return y;
}

Tensor relu(const Tensor& a) {
  Tensor y = Tensor::from_array(a.shape(), a.values().max(0.0));
  if (tracked({&a})) {
    y.set_requires_grad(true);
    Tape* tape = active_tape();
    // Strict > 0: the subgradient at exactly 0 is 0.
    active_tape()->record([a, y, tape]() mutable {
      Array g = (a.values() > 0.0).select(y.grad(), 0.0);
      if (tape->guided_relu) g = (y.grad() > 0.0).select(g, 0.0);
      a.grad() += g;
    });
  }
  return y;
}

Tensor abs_val(const Tensor& a) {
  Tensor y = Tensor::from_array(a.shape(), a.values().abs());
  if (tracked({&a})) {
    y.set_requires_grad(true);
    active_tape()->record([a, y]() mutable {
      a.grad() += y.grad() * a.values().sign();
    });
  }
  return y;
}

Tensor sum(const Tensor& a) {
  Tensor y = Tensor::from_array({1}, Array::Constant(1, a.values().sum()));
  if (tracked({&a})) {
    y.set_requires_grad(true);
    active_tape()->record([a, y]() mutable { a.grad() += y.grad()[0]; });
  }
  return y;
}

Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.size());
  Tensor y = Tensor::from_array({1}, Array::Constant(1, a.values().sum() * inv));
  if (tracked({&a})) {
    y.set_requires_grad(true);
    active_tape()->record([a, y, inv]() mutable { a.grad() += y.grad()[0] * inv; });
  }
  return y;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  const int M = a.dim(0), K = a.dim(1), N = b.dim(1);
  Tensor y = Tensor::zeros({M, N});
  {
    ConstRowMatMap am(a.values().data(), M, K), bm(b.values().data(), K, N);
    RowMatMap ym(y.values().data(), M, N);
    ym.noalias() = am * bm;
  }
  if (tracked({&a, &b})) {
    y.set_requires_grad(true);
    active_tape()->record([a, b, y, M, K, N]() mutable {
      ConstRowMatMap am(a.values().data(), M, K), bm(b.values().data(), K, N);
      ConstRowMatMap dym(y.grad().data(), M, N);
      if (a.requires_grad()) {
        RowMatMap dam(a.grad().data(), M, K);
        dam.noalias() += dym * bm.transpose();
      }
      if (b.requires_grad()) {
        RowMatMap dbm(b.grad().data(), K, N);
        dbm.noalias() += am.transpose() * dym;
      }
    });
  }
  return y;
}

Tensor bias_add_cols(const Tensor& a, const Tensor& bias) {
  if (a.ndim() != 2 || bias.size() != a.dim(1)) {
    throw std::invalid_argument("bias_add_cols: shapes " + shape_str(a.shape()) + " + " +
                                shape_str(bias.shape()));
  }
  const int M = a.dim(0), N = a.dim(1);
  Tensor y = Tensor::from_array(a.shape(), a.values());
  for (int i = 0; i < M; ++i)
    y.values().segment(static_cast<Eigen::Index>(i) * N, N) += bias.values();
  if (tracked({&a, &bias})) {
    y.set_requires_grad(true);
    active_tape()->record([a, bias, y, M, N]() mutable {
      if (a.requires_grad()) a.grad() += y.grad();
      if (bias.requires_grad()) {
        for (int i = 0; i < M; ++i)
          bias.grad() += y.grad().segment(static_cast<Eigen::Index>(i) * N, N);
      }
    });
  }
  return y;
}

Tensor row_sums(const Tensor& a, int rows) {
  if (rows <= 0 || a.size() % rows != 0) {
    throw std::invalid_argument("row_sums: size " + std::to_string(a.size()) +
                                " not divisible into " + std::to_string(rows) + " rows");
  }
  const Eigen::Index cols = a.size() / rows;
  Array s(rows);
  for (int r = 0; r < rows; ++r) s[r] = a.values().segment(r * cols, cols).sum();
  Tensor y = Tensor::from_array({rows}, std::move(s));
  if (tracked({&a})) {
    y.set_requires_grad(true);
    active_tape()->record([a, y, rows, cols]() mutable {
      for (int r = 0; r < rows; ++r) a.grad().segment(r * cols, cols) += y.grad()[r];
    });
  }
  return y;
}

Tensor row_div(const Tensor& a, const Tensor& d, int rows, double eps) {
  if (rows <= 0 || a.size() % rows != 0 || d.size() != rows) {
    throw std::invalid_argument("row_div: bad rows=" + std::to_string(rows) + " for " +
                                shape_str(a.shape()) + " / " + shape_str(d.shape()));
  }
  const Eigen::Index cols = a.size() / rows;
  Tensor y = Tensor::from_array(a.shape(), a.values());
  for (int r = 0; r < rows; ++r) y.values().segment(r * cols, cols) /= d.values()[r] + eps;
  if (tracked({&a, &d})) {
    y.set_requires_grad(true);
    active_tape()->record([a, d, y, rows, cols, eps]() mutable {
      for (int r = 0; r < rows; ++r) {
        const double denom = d.values()[r] + eps;
        auto dy = y.grad().segment(r * cols, cols);
        if (a.requires_grad()) a.grad().segment(r * cols, cols) += dy / denom;
        if (d.requires_grad())
          d.grad()[r] -= (dy * a.values().segment(r * cols, cols)).sum() / (denom * denom);
      }
    });
  }
  return y;
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, int stride, int pad) {
  if (x.ndim() != 4 || kernel.ndim() != 4) {
    throw std::invalid_argument("conv2d: need NCHW input and OC,IC,KH,KW kernel, got " +
                                shape_str(x.shape()) + " and " + shape_str(kernel.shape()));
  }
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int OC = kernel.dim(0), KC = kernel.dim(1), KH = kernel.dim(2), KW = kernel.dim(3);
  if (KC != C) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(C) +
                                " channels, kernel expects " + std::to_string(KC));
  }
  if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: stride >= 1, pad >= 0");
  const int OH = (H + 2 * pad - KH) / stride + 1;
  const int OW = (W + 2 * pad - KW) / stride + 1;
  if (H + 2 * pad < KH || W + 2 * pad < KW || OH <= 0 || OW <= 0) {
    throw std::invalid_argument("conv2d: empty output for input " + shape_str(x.shape()) +
                                ", kernel " + shape_str(kernel.shape()) + ", stride " +
                                std::to_string(stride) + ", pad " + std::to_string(pad));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.size() != OC) {
    throw std::invalid_argument("conv2d: bias size " + std::to_string(bias.size()) +
                                " != output channels " + std::to_string(OC));
  }

  const int CKK = C * KH * KW;
  const int P = OH * OW;
  Tensor y = Tensor::zeros({N, OC, OH, OW});
  {
    ConstRowMatMap kmat(kernel.values().data(), OC, CKK);
    RowMat colT(CKK, P);
    for (int n = 0; n < N; ++n) {
      im2col(x.values().data() + static_cast<std::size_t>(n) * C * H * W, C, H, W, KH, KW,
             stride, pad, OH, OW, colT);
      RowMatMap yn(y.values().data() + static_cast<std::size_t>(n) * OC * P, OC, P);
      yn.noalias() = kmat * colT;
      if (has_bias)
        for (int oc = 0; oc < OC; ++oc) yn.row(oc).array() += bias.values()[oc];
    }
  }

  if (tracked({&x, &kernel, &bias})) {
    y.set_requires_grad(true);
    // Windows are regathered here instead of saving colT per image; the conv
    // inputs themselves are kept alive by the captured handles anyway.
    active_tape()->record([x, kernel, bias, y, N, C, H, W, OC, KH, KW, stride, pad, OH,
                           OW]() mutable {
      const int CKK = C * KH * KW;
      const int P = OH * OW;
      ConstRowMatMap kmat(kernel.values().data(), OC, CKK);
      RowMat colT(CKK, P);
      RowMat dcolT(CKK, P);
      for (int n = 0; n < N; ++n) {
        ConstRowMatMap dyn(y.grad().data() + static_cast<std::size_t>(n) * OC * P, OC, P);
        if (kernel.requires_grad() || x.requires_grad()) {
          im2col(x.values().data() + static_cast<std::size_t>(n) * C * H * W, C, H, W, KH, KW,
                 stride, pad, OH, OW, colT);
        }
        if (kernel.requires_grad()) {
          RowMatMap dk(kernel.grad().data(), OC, CKK);
          dk.noalias() += dyn * colT.transpose();
        }
        if (x.requires_grad()) {
          dcolT.noalias() = kmat.transpose() * dyn;
          col2im_add(dcolT, C, H, W, KH, KW, stride, pad, OH, OW,
                     x.grad().data() + static_cast<std::size_t>(n) * C * H * W);
        }
        if (bias.defined() && bias.requires_grad()) {
          for (int oc = 0; oc < OC; ++oc) bias.grad()[oc] += dyn.row(oc).sum();
        }
      }
    });
  }
  return y;
}

Tensor channel_affine(const Tensor& x, const Tensor& a, const Tensor& b) {
  if (x.ndim() != 4 || a.size() != x.dim(1) || b.size() != x.dim(1)) {
    throw std::invalid_argument("channel_affine: input " + shape_str(x.shape()) +
                                ", scale " + shape_str(a.shape()) + ", shift " +
                                shape_str(b.shape()));
  }
  const int N = x.dim(0), C = x.dim(1);
  const Eigen::Index HW = static_cast<Eigen::Index>(x.dim(2)) * x.dim(3);
  Tensor y = Tensor::from_array(x.shape(), x.values());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      auto seg = y.values().segment((static_cast<Eigen::Index>(n) * C + c) * HW, HW);
      seg = seg * a.values()[c] + b.values()[c];
    }
  if (tracked({&x, &a, &b})) {
    y.set_requires_grad(true);
    active_tape()->record([x, a, b, y, N, C, HW]() mutable {
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const Eigen::Index off = (static_cast<Eigen::Index>(n) * C + c) * HW;
          auto dy = y.grad().segment(off, HW);
          if (x.requires_grad()) x.grad().segment(off, HW) += dy * a.values()[c];
          if (a.requires_grad()) a.grad()[c] += (dy * x.values().segment(off, HW)).sum();
          if (b.requires_grad()) b.grad()[c] += dy.sum();
        }
    });
  }
  return y;
}

Tensor maxpool2x2(const Tensor& x) {
  if (x.ndim() != 4) throw std::invalid_argument("maxpool2x2: need NCHW, got " + shape_str(x.shape()));
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int OH = H / 2, OW = W / 2;
  if (OH <= 0 || OW <= 0) {
    throw std::invalid_argument("maxpool2x2: spatial extent too small in " + shape_str(x.shape()));
  }
  Tensor y = Tensor::zeros({N, C, OH, OW});
  auto src_idx = std::make_shared<std::vector<std::int64_t>>(
      static_cast<std::size_t>(N) * C * OH * OW);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const Eigen::Index base = (static_cast<Eigen::Index>(n) * C + c) * H * W;
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow) {
          double best = -std::numeric_limits<double>::infinity();
          std::int64_t best_i = -1;
          for (int dh = 0; dh < 2; ++dh)
            for (int dw = 0; dw < 2; ++dw) {
              const std::int64_t i = base + static_cast<Eigen::Index>(2 * oh + dh) * W +
                                     (2 * ow + dw);
              if (x.values()[i] > best) {
                best = x.values()[i];
                best_i = i;
              }
            }
          const std::size_t o =
              static_cast<std::size_t>(((static_cast<std::int64_t>(n) * C + c) * OH + oh) * OW +
                                       ow);
          y.values()[static_cast<Eigen::Index>(o)] = best;
          (*src_idx)[o] = best_i;
        }
    }
  if (tracked({&x})) {
    y.set_requires_grad(true);
    active_tape()->record([x, y, src_idx]() mutable {
      for (std::size_t o = 0; o < src_idx->size(); ++o)
        x.grad()[static_cast<Eigen::Index>((*src_idx)[o])] += y.grad()[static_cast<Eigen::Index>(o)];
    });
  }
  return y;
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.ndim() != 4) throw std::invalid_argument("global_avg_pool: need NCHW, got " + shape_str(x.shape()));
  const int N = x.dim(0), C = x.dim(1);
  const Eigen::Index HW = static_cast<Eigen::Index>(x.dim(2)) * x.dim(3);
  const double inv = 1.0 / static_cast<double>(HW);
  Tensor y = Tensor::zeros({N, C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      y.values()[static_cast<Eigen::Index>(n) * C + c] =
          x.values().segment((static_cast<Eigen::Index>(n) * C + c) * HW, HW).sum() * inv;
  if (tracked({&x})) {
    y.set_requires_grad(true);
    active_tape()->record([x, y, N, C, HW, inv]() mutable {
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
          x.grad().segment((static_cast<Eigen::Index>(n) * C + c) * HW, HW) +=
              y.grad()[static_cast<Eigen::Index>(n) * C + c] * inv;
    });
  }
  return y;
}

namespace {

struct NormStats {
  Array mean;    // one entry per group
  Array invstd;  // one entry per group
};

// Shared backward for batch norm (groups = channels, members span N*H*W) and
// instance norm (groups = N*C, members span H*W). Group g of x covers
// `member` contiguous segments listed by offsets.
}  // namespace

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, double momentum, double eps) {
  if (x.ndim() != 4) throw std::invalid_argument("batch_norm: need NCHW, got " + shape_str(x.shape()));
  const int N = x.dim(0), C = x.dim(1);
  const Eigen::Index HW = static_cast<Eigen::Index>(x.dim(2)) * x.dim(3);
  if (gamma.size() != C || beta.size() != C || running_mean.size() != C ||
      running_var.size() != C) {
    throw std::invalid_argument("batch_norm: per-channel parameter sizes must equal C=" +
                                std::to_string(C));
  }
  const double m = static_cast<double>(N) * static_cast<double>(HW);

  Array mean(C), var(C);
  if (training) {
    for (int c = 0; c < C; ++c) {
      double s = 0.0, sq = 0.0;
      for (int n = 0; n < N; ++n) {
        auto seg = x.values().segment((static_cast<Eigen::Index>(n) * C + c) * HW, HW);
        s += seg.sum();
        sq += seg.square().sum();
      }
      mean[c] = s / m;
      var[c] = sq / m - mean[c] * mean[c];
    }
    running_mean.values() = (1.0 - momentum) * running_mean.values() + momentum * mean;
    running_var.values() = (1.0 - momentum) * running_var.values() + momentum * var;
  } else {
    mean = running_mean.values();
    var = running_var.values();
  }
  Array invstd = (var + eps).sqrt().inverse();

  Tensor y = Tensor::from_array(x.shape(), x.values());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      auto seg = y.values().segment((static_cast<Eigen::Index>(n) * C + c) * HW, HW);
      seg = (seg - mean[c]) * invstd[c] * gamma.values()[c] + beta.values()[c];
    }

  if (tracked({&x, &gamma, &beta})) {
    y.set_requires_grad(true);
    auto stats = std::make_shared<NormStats>(NormStats{std::move(mean), std::move(invstd)});
    active_tape()->record([x, gamma, beta, y, stats, N, C, HW, m, training]() mutable {
      for (int c = 0; c < C; ++c) {
        const double mu = stats->mean[c], is = stats->invstd[c], g = gamma.values()[c];
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int n = 0; n < N; ++n) {
          const Eigen::Index off = (static_cast<Eigen::Index>(n) * C + c) * HW;
          auto dy = y.grad().segment(off, HW);
          sum_dy += dy.sum();
          sum_dy_xhat += (dy * (x.values().segment(off, HW) - mu) * is).sum();
        }
        if (gamma.requires_grad()) gamma.grad()[c] += sum_dy_xhat;
        if (beta.requires_grad()) beta.grad()[c] += sum_dy;
        if (x.requires_grad()) {
          for (int n = 0; n < N; ++n) {
            const Eigen::Index off = (static_cast<Eigen::Index>(n) * C + c) * HW;
            auto dy = y.grad().segment(off, HW);
            auto xhat = (x.values().segment(off, HW) - mu) * is;
            if (training) {
              x.grad().segment(off, HW) +=
                  (g * is / m) * (m * dy - sum_dy - xhat * sum_dy_xhat);
            } else {
              // Running statistics are constants here.
              x.grad().segment(off, HW) += dy * (g * is);
            }
          }
        }
      }
    });
  }
  return y;
}

Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.ndim() != 4) throw std::invalid_argument("instance_norm: need NCHW, got " + shape_str(x.shape()));
  const int N = x.dim(0), C = x.dim(1);
  const Eigen::Index HW = static_cast<Eigen::Index>(x.dim(2)) * x.dim(3);
  if (gamma.size() != C || beta.size() != C) {
    throw std::invalid_argument("instance_norm: per-channel parameter sizes must equal C=" +
                                std::to_string(C));
  }
  const double m = static_cast<double>(HW);

  Array mean(static_cast<Eigen::Index>(N) * C), invstd(static_cast<Eigen::Index>(N) * C);
  Tensor y = Tensor::from_array(x.shape(), x.values());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const Eigen::Index g = static_cast<Eigen::Index>(n) * C + c;
      auto seg = x.values().segment(g * HW, HW);
      const double mu = seg.sum() / m;
      const double var = seg.square().sum() / m - mu * mu;
      mean[g] = mu;
      invstd[g] = 1.0 / std::sqrt(var + eps);
      auto out = y.values().segment(g * HW, HW);
      out = (out - mu) * invstd[g] * gamma.values()[c] + beta.values()[c];
    }

  if (tracked({&x, &gamma, &beta})) {
    y.set_requires_grad(true);
    auto stats = std::make_shared<NormStats>(NormStats{std::move(mean), std::move(invstd)});
    active_tape()->record([x, gamma, beta, y, stats, N, C, HW, m]() mutable {
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const Eigen::Index gi = static_cast<Eigen::Index>(n) * C + c;
          const Eigen::Index off = gi * HW;
          const double mu = stats->mean[gi], is = stats->invstd[gi], g = gamma.values()[c];
          auto dy = y.grad().segment(off, HW);
          auto xhat = (x.values().segment(off, HW) - mu) * is;
          const double sum_dy = dy.sum();
          const double sum_dy_xhat = (dy * xhat).sum();
          if (gamma.requires_grad()) gamma.grad()[c] += sum_dy_xhat;
          if (beta.requires_grad()) beta.grad()[c] += sum_dy;
          if (x.requires_grad()) {
            x.grad().segment(off, HW) +=
                (g * is / m) * (m * dy - sum_dy - xhat * sum_dy_xhat);
          }
        }
    });
  }
  return y;
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.ndim() != 2 || static_cast<std::size_t>(logits.dim(0)) != labels.size()) {
    throw std::invalid_argument("softmax_cross_entropy: logits " + shape_str(logits.shape()) +
                                " vs " + std::to_string(labels.size()) + " labels");
  }
  const int N = logits.dim(0), M = logits.dim(1);
  auto probs = std::make_shared<Array>(logits.values());
  double total = 0.0;
  for (int n = 0; n < N; ++n) {
    const int lab = labels[static_cast<std::size_t>(n)];
    if (lab < 0 || lab >= M) {
      throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(lab) +
                                  " out of range [0," + std::to_string(M) + ")");
    }
    auto row = probs->segment(static_cast<Eigen::Index>(n) * M, M);
    const double zmax = row.maxCoeff();
    row = (row - zmax).exp();
    const double denom = row.sum();
    total += std::log(denom) - std::log(row[lab]);
    row /= denom;
  }
  Tensor y = Tensor::from_array({1}, Array::Constant(1, total / N));
  if (tracked({&logits})) {
    y.set_requires_grad(true);
    auto labs = std::make_shared<std::vector<int>>(labels);
    active_tape()->record([logits, y, probs, labs, N, M]() mutable {
      const double d = y.grad()[0] / N;
      Array dl = *probs * d;
      for (int n = 0; n < N; ++n)
        dl[static_cast<Eigen::Index>(n) * M + (*labs)[static_cast<std::size_t>(n)]] -= d;
      logits.grad() += dl;
    });
  }
  return y;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.ndim() != 2) {
    throw std::invalid_argument("argmax_rows: need 2D logits, got " + shape_str(logits.shape()));
  }
  const int N = logits.dim(0), M = logits.dim(1);
  std::vector<int> out(static_cast<std::size_t>(N));
  for (int n = 0; n < N; ++n) {
    Eigen::Index best = 0;
    logits.values().segment(static_cast<Eigen::Index>(n) * M, M).maxCoeff(&best);
    out[static_cast<std::size_t>(n)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace atmosconv
