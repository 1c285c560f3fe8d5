// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <set>

#include "atmosconv/classic_filters.hpp"
#include "atmosconv/ops.hpp"
#include "oracles.hpp"

using namespace atmosconv;

namespace {

std::vector<double> to_vec(const Tensor& t) {
  return std::vector<double>(t.values().data(), t.values().data() + t.size());
}

// Valid convolution of a square image with a square kernel via the naive
// oracle; returns the flat output and its side length.
std::pair<std::vector<double>, int> conv_valid(const Tensor& img, const FilterKernel& k) {
  const int S = img.dim(0), size = k.weights.dim(0);
  auto out = oracles::conv2d(to_vec(img), 1, 1, S, S, to_vec(k.weights), 1, size, size, {}, 1, 0);
  return {out, S - size + 1};
}

}  // namespace

TEST_CASE("gaussian_kernel basics") {
  FilterKernel tight = gaussian_kernel(0.1, 3);
  CHECK(tight.weights.values()[4] > 0.999);
  CHECK(tight.weights.values().sum() == doctest::Approx(1.0).epsilon(1e-12));

  for (double sigma : {0.5, 1.0, 2.5}) {
    for (int size : {3, 5, 9}) {
      FilterKernel g = gaussian_kernel(sigma, size);
      CHECK(std::abs(g.weights.values().sum() - 1.0) < 1e-12);
      CHECK(positive_weight_ratio(g) == doctest::Approx(1.0));
    }
  }

  // 90-degree rotation symmetry, bit-equal entries.
  FilterKernel g = gaussian_kernel(1.0, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      const double a = g.weights.values()[i * 5 + j];
      const double b = g.weights.values()[j * 5 + (4 - i)];
      CHECK(a == b);
    }

  CHECK_THROWS_AS(gaussian_kernel(1.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_kernel(0.0, 3), std::invalid_argument);
}

TEST_CASE("dog_kernel part sums and ratios") {
  FilterKernel norm = dog_kernel(1.0, 2.0, 9, true);
  CHECK(std::abs(positive_weight_ratio(norm)) < 1e-12);
  CHECK(norm.weights.values().max(0.0).sum() == doctest::Approx(1.0).epsilon(1e-12));

  FilterKernel unnorm = dog_kernel(1.0, 2.0, 9, false);
  CHECK(positive_weight_ratio(unnorm) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(unnorm.weights.values().max(0.0).sum() == doctest::Approx(2.0).epsilon(1e-12));
  CHECK((-unnorm.weights.values()).max(0.0).sum() == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(dog_kernel(2.0, 1.0, 9, true), std::invalid_argument);
  CHECK_THROWS_AS(dog_kernel(1.0, 1.0, 9, true), std::invalid_argument);
}

TEST_CASE("normalized DoG kills constant images") {
  Tensor flat = Tensor::full({32, 32}, 0.6);
  FilterKernel norm = dog_kernel(1.0, 2.0, 7, true);
  auto [out, side] = conv_valid(flat, norm);
  for (double v : out) CHECK(std::abs(v) < 1e-10);

  DemoResponse r = demo_response_analysis(flat, norm, 16);
  CHECK(r.flat_bias < 1e-10);
  CHECK(r.edge_mag < 1e-10);
}

TEST_CASE("checkerboard_scene construction") {
  SceneSpec uniform;
  uniform.tiles = 8;
  uniform.tile_px = 16;
  Tensor img = checkerboard_scene(uniform);
  CHECK(img.shape() == Shape{128, 128});
  std::set<double> distinct(img.values().data(), img.values().data() + img.size());
  CHECK(distinct.size() == 2);
  CHECK(distinct.count(0.25) == 1);
  CHECK(distinct.count(0.75) == 1);

  SceneSpec ramp = uniform;
  ramp.illumination = SceneSpec::Illumination::linear_ramp;
  ramp.ramp_lo = 0.5;
  ramp.ramp_hi = 1.5;
  ramp.direction_deg = 0.0;
  Tensor lit = checkerboard_scene(ramp);
  double left = 0.0, right = 0.0;
  const int S = 128;
  for (int y = 0; y < S; ++y) {
    left += lit.values()[static_cast<Eigen::Index>(y) * S];
    right += lit.values()[static_cast<Eigen::Index>(y) * S + (S - 1)];
  }
  CHECK(left < right);
}

TEST_CASE("offset invariance of the normalized DoG response") {
  SceneSpec spec;
  spec.tiles = 6;
  spec.tile_px = 16;
  Tensor img = checkerboard_scene(spec);
  FilterKernel norm = dog_kernel(1.0, 2.0, 7, true);
  FilterKernel unnorm = dog_kernel(1.0, 2.0, 7, false);

  Tensor shifted = Tensor::from_array(img.shape(), img.values() + 0.2);
  auto [base_n, s1] = conv_valid(img, norm);
  auto [off_n, s2] = conv_valid(shifted, norm);
  for (std::size_t i = 0; i < base_n.size(); ++i) {
    CHECK(std::abs(off_n[i] - base_n[i]) < 1e-9);
  }

  // Unnormalized response shifts by o * |w|_1 * r(w) everywhere.
  const double l1 = unnorm.weights.values().abs().sum();
  const double r = positive_weight_ratio(unnorm);
  const double expected_shift = 0.2 * l1 * r;
  auto [base_u, s3] = conv_valid(img, unnorm);
  auto [off_u, s4] = conv_valid(shifted, unnorm);
  for (std::size_t i = 0; i < base_u.size(); ++i) {
    CHECK(std::abs(off_u[i] - base_u[i] - expected_shift) < 1e-9);
  }
}

TEST_CASE("ramp-lit checkerboard: normalization wins by at least 5x") {
  SceneSpec spec;
  spec.tiles = 8;
  spec.tile_px = 16;
  spec.illumination = SceneSpec::Illumination::linear_ramp;
  spec.ramp_lo = 0.5;
  spec.ramp_hi = 1.5;
  Tensor img = checkerboard_scene(spec);

  FilterKernel norm = dog_kernel(1.0, 2.0, 7, true);
  FilterKernel unnorm = dog_kernel(1.0, 2.0, 7, false);
  DemoResponse rn = demo_response_analysis(img, norm, spec.tile_px);
  DemoResponse ru = demo_response_analysis(img, unnorm, spec.tile_px);

  CHECK(rn.edge_mag > 0.0);
  CHECK(ru.edge_mag > 0.0);
  const double ratio_norm = rn.flat_bias / rn.edge_mag;
  const double ratio_unnorm = ru.flat_bias / ru.edge_mag;
  CHECK(ratio_norm * 5.0 <= ratio_unnorm);
}

TEST_CASE("uniform light: both DoGs localize the same edges") {
  SceneSpec spec;
  spec.tiles = 6;
  spec.tile_px = 16;
  Tensor img = checkerboard_scene(spec);
  FilterKernel norm = dog_kernel(1.0, 2.0, 7, true);
  FilterKernel unnorm = dog_kernel(1.0, 2.0, 7, false);
  DemoResponse rn = demo_response_analysis(img, norm, spec.tile_px);
  DemoResponse ru = demo_response_analysis(img, unnorm, spec.tile_px);
  REQUIRE(rn.profile.size() == ru.profile.size());

  // Peak |response| location per inter-tile boundary segment must agree.
  const int So = static_cast<int>(rn.profile.size());
  const int seg = 16;
  for (int start = 0; start + seg <= So; start += seg) {
    int arg_n = start, arg_u = start;
    for (int i = start; i < start + seg; ++i) {
      if (std::abs(rn.profile[i]) > std::abs(rn.profile[arg_n])) arg_n = i;
      if (std::abs(ru.profile[i]) > std::abs(ru.profile[arg_u])) arg_u = i;
    }
    CHECK(arg_n == arg_u);
  }
}

TEST_CASE("demo_response_analysis rejects oversized kernels") {
  Tensor img = checkerboard_scene(SceneSpec{4, 8});
  FilterKernel big = dog_kernel(1.0, 2.0, 9, true);
  CHECK_THROWS_AS(demo_response_analysis(img, big, 8), std::invalid_argument);
}
