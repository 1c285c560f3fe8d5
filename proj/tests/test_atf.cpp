// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "atmosconv/atf.hpp"
#include "atmosconv/classic_filters.hpp"
#include "atmosconv/ops.hpp"
#include "atmosconv/rng.hpp"

using namespace atmosconv;

namespace {

Tensor random_image(Xoshiro256pp& rng, int C, int H, int W) {
  Tensor t = Tensor::zeros({C, H, W});
  for (Eigen::Index i = 0; i < t.size(); ++i) t.values()[i] = rng.uniform();
  return t;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (a.values()[i] != b.values()[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("atf_apply basics") {
  Xoshiro256pp rng(1, 0);
  Tensor img = random_image(rng, 3, 8, 8);

  AtfField identity;
  identity.gain = Tensor::full({8, 8}, 1.0);
  identity.bias = Tensor::full({8, 8}, 0.0);
  CHECK(bit_equal(atf_apply(img, identity), img));

  AtfField f;
  f.gain = Tensor::full({8, 8}, 2.0);
  f.bias = Tensor::full({8, 8}, 0.3);
  Tensor flat = Tensor::full({1, 8, 8}, 0.5);
  Tensor out = atf_apply(flat, f);
  for (Eigen::Index i = 0; i < out.size(); ++i)
    CHECK(out.values()[i] == doctest::Approx(1.3).epsilon(1e-15));

  AtfField wrong;
  wrong.gain = Tensor::full({4, 4}, 1.0);
  wrong.bias = Tensor::full({4, 4}, 0.0);
  CHECK_THROWS_AS(atf_apply(img, wrong), std::invalid_argument);
}

TEST_CASE("normalized differencing conv is gain-equivariant under constant fields") {
  Xoshiro256pp rng(2, 0);
  Tensor img = random_image(rng, 1, 16, 16);
  FilterKernel dog = dog_kernel(1.0, 2.0, 5, true);

  AtfField f;
  f.gain = Tensor::full({16, 16}, 1.27);
  f.bias = Tensor::full({16, 16}, 0.21);
  Tensor corrupted = atf_apply(img, f);

  NoGradScope ng;
  Tensor k4 = Tensor::from_array({1, 1, 5, 5}, dog.weights.values());
  Tensor x4 = Tensor::from_array({1, 1, 16, 16}, img.values());
  Tensor c4 = Tensor::from_array({1, 1, 16, 16}, corrupted.values());
  Tensor base = conv2d(x4, k4, Tensor(), 1, 0);
  Tensor resp = conv2d(c4, k4, Tensor(), 1, 0);
  // response(g x + o) = g response(x): the offset dies in the differencing
  // filter, the gain passes through linearly.
  CHECK((resp.values() - 1.27 * base.values()).abs().maxCoeff() < 1e-9);

  // Averaging filter (r = 1, sum 1): response(g x + o) = g response(x) + o.
  FilterKernel g5 = gaussian_kernel(1.0, 5);
  Tensor a4 = Tensor::from_array({1, 1, 5, 5}, g5.weights.values());
  Tensor abase = conv2d(x4, a4, Tensor(), 1, 0);
  Tensor aresp = conv2d(c4, a4, Tensor(), 1, 0);
  CHECK((aresp.values() - (1.27 * abase.values() + 0.21)).abs().maxCoeff() < 1e-9);
}

TEST_CASE("gen_constant_field ranges, determinism, mean") {
  for (int i = 0; i < 10000; ++i) {
    AtfField f = gen_constant_field(42, static_cast<std::uint64_t>(i), 2, 2);
    const double alpha = f.params[0].second, beta = f.params[1].second;
    CHECK(alpha >= 0.7);
    CHECK(alpha <= 1.3);
    CHECK(beta >= -0.3);
    CHECK(beta <= 0.3);
    // Field is spatially constant.
    CHECK(f.gain.values().maxCoeff() == f.gain.values().minCoeff());
    CHECK(f.bias.values().maxCoeff() == f.bias.values().minCoeff());
  }

  AtfField a = gen_constant_field(9, 123, 4, 4);
  AtfField b = gen_constant_field(9, 123, 4, 4);
  CHECK(bit_equal(a.gain, b.gain));
  CHECK(bit_equal(a.bias, b.bias));

  double mean_alpha = 0.0;
  for (int i = 0; i < 100000; ++i)
    mean_alpha += gen_constant_field(7, static_cast<std::uint64_t>(i), 1, 1).params[0].second;
  mean_alpha /= 100000.0;
  CHECK(std::abs(mean_alpha - 1.0) < 0.005);
}

TEST_CASE("linear field: degenerate interpolation and endpoint mapping") {
  // Equal endpoints give a constant gain field.
  Tensor img = Tensor::full({1, 6, 8}, 0.5);
  std::vector<std::pair<std::string, double>> rec = {
      {"alpha0", 1.2}, {"alpha1", 1.2}, {"beta0", -0.1}, {"beta1", 0.3}, {"theta", 0.7}};
  Tensor replayed = replay_image(img, Variant::L, rec);
  // gain constant 1.2: pixel = 0.5 * 1.2 + bias, so subtracting bias variation
  // is awkward; check via a zero-bias record instead.
  std::vector<std::pair<std::string, double>> rec2 = {
      {"alpha0", 1.2}, {"alpha1", 1.2}, {"beta0", 0.0}, {"beta1", 0.0}, {"theta", 0.7}};
  Tensor replayed2 = replay_image(img, Variant::L, rec2);
  CHECK(replayed2.values().maxCoeff() == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(replayed2.values().minCoeff() == doctest::Approx(0.6).epsilon(1e-12));
  (void)replayed;

  // Axis-aligned direction: extreme columns carry the endpoint values.
  std::vector<std::pair<std::string, double>> axis = {
      {"alpha0", 0.8}, {"alpha1", 1.4}, {"beta0", 0.0}, {"beta1", 0.0}, {"theta", 0.0}};
  Tensor one = Tensor::full({1, 4, 5}, 1.0);
  Tensor lit = replay_image(one, Variant::L, axis);
  CHECK(std::abs(lit.values()[0] - 0.8) < 1e-12);
  CHECK(std::abs(lit.values()[4] - 1.4) < 1e-12);
}

TEST_CASE("linear field: gain and bias share their gradient direction") {
  int checked = 0;
  for (int s = 0; s < 20; ++s) {
    AtfField f = gen_linear_field(3, static_cast<std::uint64_t>(s), 16, 16);
    // Finite-difference gradient at an interior pixel.
    auto grad = [&](const Tensor& t) {
      const int W = 16;
      const Eigen::Index i = 8 * W + 8;
      return std::pair<double, double>{t.values()[i + 1] - t.values()[i - 1],
                                       t.values()[i + W] - t.values()[i - W]};
    };
    auto [gx, gy] = grad(f.gain);
    auto [bx, by] = grad(f.bias);
    const double gn = std::hypot(gx, gy), bn = std::hypot(bx, by);
    if (gn < 1e-9 || bn < 1e-9) continue;  // degenerate draw: a flat field
    const double cosang = (gx * bx + gy * by) / (gn * bn);
    CHECK(std::abs(cosang) > 1.0 - 1e-9);
    ++checked;
  }
  CHECK(checked >= 15);
}

TEST_CASE("blob field: center exact, far decay, monotone") {
  std::vector<std::pair<std::string, double>> rec = {
      {"cx", 0.0}, {"cy", 0.0}, {"alpha", 0.6}, {"beta", -0.37}};
  Tensor img = Tensor::full({1, 8, 8}, 1.0);
  AtfField f = gen_blob_field(5, 0, 8, 8);
  (void)f;

  // Build via replay so the scalars are chosen, not drawn.
  Tensor out = replay_image(img, Variant::B, rec);
  // Center pixel (0,0): gain = alpha, bias = beta exactly.
  CHECK(out.values()[0] == 0.6 * 1.0 + (-0.37));

  // R = 0.8 * 8 = 6.4; pixel (7,7) sits at distance ~9.9 from the center.
  CHECK(out.values()[7 * 8 + 7] == 1.0);

  // Weight is nonincreasing along the top row ray.
  std::vector<std::pair<std::string, double>> rec2 = {
      {"cx", 0.0}, {"cy", 0.0}, {"alpha", 1.5}, {"beta", 0.0}};
  Tensor ray = replay_image(img, Variant::B, rec2);
  for (int x = 1; x < 8; ++x) {
    CHECK(ray.values()[x] <= ray.values()[x - 1] + 1e-15);
  }

  // Generated centers land on the pixel grid.
  for (int i = 0; i < 200; ++i) {
    AtfField g = gen_blob_field(11, static_cast<std::uint64_t>(i), 10, 12);
    const double cx = g.params[0].second, cy = g.params[1].second;
    CHECK(cx == std::floor(cx));
    CHECK(cx >= 0.0);
    CHECK(cx <= 11.0);
    CHECK(cy == std::floor(cy));
    CHECK(cy >= 0.0);
    CHECK(cy <= 9.0);
  }
}

TEST_CASE("shift corruption: formula, saturation, upward drift") {
  // alpha 0.7, beta -0.3, gamma 1 on a black image: 0*0.7 - 0.3 + 1 = 0.7,
  // inside [0,1], no clamp.
  ShiftParams p1{0.7, -0.3, 1.0};
  Tensor black = Tensor::full({1, 4, 4}, 0.0);
  Tensor out1 = shift_apply(black, p1);
  for (Eigen::Index i = 0; i < out1.size(); ++i)
    CHECK(out1.values()[i] == doctest::Approx(0.7).epsilon(1e-15));

  // alpha 1.3, beta 0.3 on a white image: pre-clamp 2.6, post-clamp 1.0.
  ShiftParams p2{1.3, 0.3, 1.0};
  Tensor white = Tensor::full({1, 4, 4}, 1.0);
  Tensor out2 = shift_apply(white, p2);
  for (Eigen::Index i = 0; i < out2.size(); ++i) CHECK(out2.values()[i] == 1.0);

  // gamma = 1 drags the mean up on any [0,1] image.
  Xoshiro256pp rng(6, 0);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor img = random_image(rng, 3, 8, 8);
    ShiftParams p = gen_shift_corruption(21, static_cast<std::uint64_t>(trial));
    Tensor out = shift_apply(img, p);
    CHECK(out.values().mean() > img.values().mean());
    CHECK(out.values().minCoeff() >= 0.0);
    CHECK(out.values().maxCoeff() <= 1.0);
  }
}

TEST_CASE("severity scaling: identity at 0, wider intervals above 1") {
  Xoshiro256pp rng(7, 0);
  std::vector<Tensor> images;
  for (int i = 0; i < 8; ++i) images.push_back(random_image(rng, 3, 6, 6));

  for (Variant v : {Variant::C, Variant::L, Variant::B, Variant::S}) {
    auto [corrupted, manifest] = corrupt_dataset(images, v, 99, 0.0);
    REQUIRE(corrupted.size() == images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
      INFO("variant ", variant_name(v), " image ", i);
      CHECK(bit_equal(corrupted[i], images[i]));
    }
  }

  // Severity 2 eventually draws alphas outside the severity-1 interval.
  bool outside = false;
  for (int i = 0; i < 1000; ++i) {
    AtfField f = gen_constant_field(33, static_cast<std::uint64_t>(i), 1, 1, 2.0);
    const double alpha = f.params[0].second;
    CHECK(alpha >= 0.4);
    CHECK(alpha <= 1.6);
    outside = outside || alpha < 0.7 || alpha > 1.3;
  }
  CHECK(outside);
}

TEST_CASE("corrupt_dataset determinism and manifest replay") {
  Xoshiro256pp rng(8, 0);
  std::vector<Tensor> images;
  for (int i = 0; i < 12; ++i) images.push_back(random_image(rng, 3, 7, 9));

  for (Variant v : {Variant::C, Variant::L, Variant::B, Variant::S}) {
    auto [set1, man1] = corrupt_dataset(images, v, 1234, 1.0);
    auto [set2, man2] = corrupt_dataset(images, v, 1234, 1.0);
    for (std::size_t i = 0; i < images.size(); ++i) CHECK(bit_equal(set1[i], set2[i]));

    // Replay from the in-memory manifest.
    std::vector<Tensor> replayed = replay_dataset(images, man1);
    for (std::size_t i = 0; i < images.size(); ++i) {
      INFO("replay variant ", variant_name(v), " image ", i);
      CHECK(bit_equal(replayed[i], set1[i]));
    }

    // Replay from a JSON round trip, which must preserve doubles bit-exactly.
    CorruptionManifest reloaded = CorruptionManifest::from_json(man1.to_json());
    std::vector<Tensor> replayed2 = replay_dataset(images, reloaded);
    for (std::size_t i = 0; i < images.size(); ++i) CHECK(bit_equal(replayed2[i], set1[i]));

    // Different seed, different set.
    auto [set3, man3] = corrupt_dataset(images, v, 1235, 1.0);
    bool any_diff = false;
    for (std::size_t i = 0; i < images.size(); ++i)
      any_diff = any_diff || !bit_equal(set3[i], set1[i]);
    CHECK(any_diff);
  }

  CHECK_THROWS_AS(variant_from_string("Q"), std::invalid_argument);
}

TEST_CASE("manifest file round trip") {
  Xoshiro256pp rng(9, 0);
  std::vector<Tensor> images = {random_image(rng, 1, 5, 5), random_image(rng, 1, 5, 5)};
  auto [set, manifest] = corrupt_dataset(images, Variant::L, 777, 1.5);

  const std::string path = "/tmp/atmosconv_manifest_test.json";
  manifest.save(path);
  CorruptionManifest loaded = CorruptionManifest::load(path);
  CHECK(loaded.seed == 777);
  CHECK(loaded.severity == 1.5);
  CHECK(variant_name(loaded.variant) == "L");
  std::vector<Tensor> replayed = replay_dataset(images, loaded);
  for (std::size_t i = 0; i < images.size(); ++i) CHECK(bit_equal(replayed[i], set[i]));
  std::remove(path.c_str());
}
