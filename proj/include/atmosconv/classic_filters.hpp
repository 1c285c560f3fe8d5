// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "atmosconv/filter_algebra.hpp"
#include "atmosconv/tensor.hpp"

namespace atmosconv {

/// Checkerboard scene description. The rendered image is tiles*tile_px on a
/// side, single channel, intensities in [0,1].
struct SceneSpec {
  int tiles = 8;
  int tile_px = 16;
  enum class Illumination { uniform, linear_ramp } illumination = Illumination::uniform;
  // linear_ramp only: multiplicative factor sweeping lo -> hi across the image
  // along direction_deg (0 = left to right, 90 = top to bottom).
  double ramp_lo = 1.0;
  double ramp_hi = 1.0;
  double direction_deg = 0.0;
};

/// Sampled 2-D Gaussian on a size x size grid, rescaled to sum 1. Shape
/// [size, size]. Size must be odd and >= 3.
FilterKernel gaussian_kernel(double sigma, int size);

/// Difference of two sampled Gaussians (inner minus outer). `normalized`
/// rescales each part to L1 mass 1 (part sums +1/-1, r = 0); the unnormalized
/// variant scales the positive part to 2 and the negative to 1 (r = 1/3).
FilterKernel dog_kernel(double sigma_inner, double sigma_outer, int size, bool normalized);

/// Alternating 0.25/0.75 tiles lit by the given scene's illumination field.
Tensor checkerboard_scene(const SceneSpec& spec);

struct DemoResponse {
  double flat_bias = 0.0;            // mean |response| over tile interiors
  double edge_mag = 0.0;             // mean |response| near tile boundaries
  std::vector<double> profile;       // center-row response
};

/// Valid (unpadded) convolution of a single-channel image with the kernel,
/// summarized over tile-interior and tile-boundary regions. The interior
/// excludes ceil(size/2) pixels from every tile edge so flat regions see no
/// edge response. Throws when the kernel does not fit inside one tile.
DemoResponse demo_response_analysis(const Tensor& image, const FilterKernel& kernel,
                                    int tile_px);

}  // namespace atmosconv
