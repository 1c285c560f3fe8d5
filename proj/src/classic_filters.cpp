// SPDX-License-Identifier: Apache-2.0
#include "atmosconv/classic_filters.hpp"

#include <cmath>

#include "atmosconv/ops.hpp"

namespace atmosconv {

FilterKernel gaussian_kernel(double sigma, int size) {
  if (sigma <= 0.0) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
  if (size < 3 || size % 2 == 0) {
    throw std::invalid_argument("gaussian_kernel: size must be odd and >= 3, got " +
                                std::to_string(size));
  }
  const int h = (size - 1) / 2;
  Tensor k = Tensor::zeros({size, size});
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      const double dy = i - h, dx = j - h;
      k.values()[static_cast<Eigen::Index>(i) * size + j] =
          std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
    }
  k.values() /= k.values().sum();
  return FilterKernel{k};
}

FilterKernel dog_kernel(double sigma_inner, double sigma_outer, int size, bool normalized) {
  if (!(sigma_inner > 0.0) || !(sigma_inner < sigma_outer)) {
    throw std::invalid_argument("dog_kernel: need 0 < sigma_inner < sigma_outer");
  }
  const FilterKernel inner = gaussian_kernel(sigma_inner, size);
  const FilterKernel outer = gaussian_kernel(sigma_outer, size);
  const Array diff = inner.weights.values() - outer.weights.values();
  const Array plus = diff.max(0.0);
  const Array minus = (-diff).max(0.0);
  const double sp = plus.sum(), sn = minus.sum();
  // Two unit-mass Gaussians always cross, so both parts are populated.
  const double pos_target = normalized ? 1.0 : 2.0;
  Array out = pos_target * plus / sp - minus / sn;
  return FilterKernel{Tensor::from_array({size, size}, std::move(out))};
}

Tensor checkerboard_scene(const SceneSpec& spec) {
  if (spec.tiles <= 0 || spec.tile_px <= 0) {
    throw std::invalid_argument("checkerboard_scene: tiles and tile_px must be positive");
  }
  if (spec.illumination == SceneSpec::Illumination::linear_ramp && spec.ramp_lo > spec.ramp_hi) {
    throw std::invalid_argument("checkerboard_scene: ramp_lo must not exceed ramp_hi");
  }
  const int S = spec.tiles * spec.tile_px;
  Tensor img = Tensor::zeros({S, S});

  const double theta = spec.direction_deg * M_PI / 180.0;
  const double ux = std::cos(theta), uy = std::sin(theta);
  // Projection extremes over the pixel grid, for mapping to [0,1].
  double pmin = 0.0, pmax = 0.0;
  if (spec.illumination == SceneSpec::Illumination::linear_ramp) {
    pmin = std::min(0.0, ux * (S - 1)) + std::min(0.0, uy * (S - 1));
    pmax = std::max(0.0, ux * (S - 1)) + std::max(0.0, uy * (S - 1));
  }

  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      const int ty = y / spec.tile_px, tx = x / spec.tile_px;
      const double base = ((ty + tx) % 2 == 0) ? 0.25 : 0.75;
      double factor = 1.0;
      if (spec.illumination == SceneSpec::Illumination::linear_ramp) {
        const double p = ux * x + uy * y;
        const double t = (pmax > pmin) ? (p - pmin) / (pmax - pmin) : 0.0;
        factor = spec.ramp_lo + (spec.ramp_hi - spec.ramp_lo) * t;
      }
      img.values()[static_cast<Eigen::Index>(y) * S + x] = base * factor;
    }
  return img;
}

DemoResponse demo_response_analysis(const Tensor& image, const FilterKernel& kernel,
                                    int tile_px) {
  if (image.ndim() != 2 || image.dim(0) != image.dim(1)) {
    throw std::invalid_argument("demo_response_analysis: need a square 2-D image, got " +
                                shape_str(image.shape()));
  }
  if (kernel.weights.ndim() != 2 || kernel.weights.dim(0) != kernel.weights.dim(1)) {
    throw std::invalid_argument("demo_response_analysis: need a square 2-D kernel, got " +
                                shape_str(kernel.weights.shape()));
  }
  const int S = image.dim(0);
  const int size = kernel.weights.dim(0);
  if (tile_px <= 0 || S % tile_px != 0) {
    throw std::invalid_argument("demo_response_analysis: image side " + std::to_string(S) +
                                " is not a multiple of tile_px " + std::to_string(tile_px));
  }
  if (size > tile_px) {
    throw std::invalid_argument("demo_response_analysis: kernel size " + std::to_string(size) +
                                " exceeds tile_px " + std::to_string(tile_px) +
                                "; flat and edge regions would overlap");
  }
  const int tiles = S / tile_px;
  const int margin = (size + 1) / 2;
  if (tile_px - 2 * margin <= 0) {
    throw std::invalid_argument("demo_response_analysis: margin " + std::to_string(margin) +
                                " leaves no tile interior at tile_px " + std::to_string(tile_px));
  }

  // Valid convolution: every window is complete, so padding never fakes an
  // offset and the invariance identities hold at every output pixel.
  NoGradScope ng;
  Tensor x4 = Tensor::from_array({1, 1, S, S}, image.values());
  Tensor k4 = Tensor::from_array({1, 1, size, size}, kernel.weights.values());
  Tensor out = conv2d(x4, k4, Tensor(), 1, 0);
  const int So = S - size + 1;
  const int h = (size - 1) / 2;

  DemoResponse res;
  double flat_sum = 0.0, edge_sum = 0.0;
  std::int64_t flat_n = 0, edge_n = 0;
  for (int oy = 0; oy < So; ++oy)
    for (int ox = 0; ox < So; ++ox) {
      const int cy = oy + h, cx = ox + h;  // center pixel of the window
      const int ty = cy / tile_px, iy = cy % tile_px;
      const int tx = cx / tile_px, ix = cx % tile_px;
      // Near an interior tile boundary (image borders have no intensity step).
      const bool near_y =
          (iy < margin && ty > 0) || (tile_px - 1 - iy < margin && ty < tiles - 1);
      const bool near_x =
          (ix < margin && tx > 0) || (tile_px - 1 - ix < margin && tx < tiles - 1);
      const double v = std::abs(out.values()[static_cast<Eigen::Index>(oy) * So + ox]);
      if (near_y || near_x) {
        edge_sum += v;
        ++edge_n;
      } else {
        flat_sum += v;
        ++flat_n;
      }
    }
  res.flat_bias = flat_n ? flat_sum / static_cast<double>(flat_n) : 0.0;
  res.edge_mag = edge_n ? edge_sum / static_cast<double>(edge_n) : 0.0;

  const int center_row = (So - 1) / 2;
  res.profile.resize(static_cast<std::size_t>(So));
  for (int ox = 0; ox < So; ++ox) {
    res.profile[static_cast<std::size_t>(ox)] =
        out.values()[static_cast<Eigen::Index>(center_row) * So + ox];
  }
  return res;
}

}  // namespace atmosconv
