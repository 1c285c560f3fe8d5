// SPDX-License-Identifier: Apache-2.0
#include "atmosconv/net.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>

#include "atmosconv/filter_algebra.hpp"
#include "atmosconv/gradcheck.hpp"
#include "atmosconv/ops.hpp"
#include "atmosconv/rng.hpp"

using namespace atmosconv;

namespace {

Tensor random_batch(int n, int c, int h, int w, std::uint64_t seed, double lo = 0.0,
                    double hi = 1.0) {
  Xoshiro256pp rng(seed, 0);
  Tensor t = Tensor::zeros({n, c, h, w});
  for (Eigen::Index i = 0; i < t.size(); ++i) t.values()[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("model config validates fields and round-trips through key=value text") {
  ModelConfig c;
  c.validate();
  c.architecture = "resnet50";
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.architecture = "mini_resnet";
  c.width = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.width = 32;
  c.conv_mode = "normalized";
  c.norm_layer = "instance";
  c.init_seed = 987654321;
  const std::string text = model_config_kv(c);
  ModelConfig back = model_config_from_kv(text);
  CHECK(back.architecture == c.architecture);
  CHECK(back.conv_mode == c.conv_mode);
  CHECK(back.norm_layer == c.norm_layer);
  CHECK(back.width == c.width);
  CHECK(back.init_seed == c.init_seed);
  CHECK_THROWS_AS(model_config_from_kv("nonsense"), std::invalid_argument);
  CHECK_THROWS_AS(model_config_from_kv("color=blue\n"), std::invalid_argument);
  ModelConfig defaults = model_config_from_kv("# comment only\n\n");
  CHECK(defaults.architecture == "tiny_cnn");
}

TEST_CASE("conv affine resolution follows the norm layer unless overridden") {
  ModelConfig c;
  c.norm_layer = "none";
  CHECK(c.conv_affine());
  c.norm_layer = "batch";
  CHECK_FALSE(c.conv_affine());
  c.norm_layer = "instance";
  CHECK_FALSE(c.conv_affine());
  c.use_affine = "on";
  CHECK(c.conv_affine());
  c.use_affine = "off";
  c.norm_layer = "none";
  CHECK_FALSE(c.conv_affine());
}

TEST_CASE("uniform all-positive normalized conv maps constant input to itself") {
  ConvLayer layer("t", /*normalized=*/true, /*affine=*/true, 1, 1, 3, 1, /*pad=*/0);
  layer.raw_weights().values().setConstant(0.5);
  Tensor x = Tensor::full({1, 1, 6, 6}, 0.37);
  Tensor y = layer.forward(x);
  CHECK(y.shape() == Shape({1, 1, 4, 4}));
  CHECK((y.values() - 0.37).abs().maxCoeff() < 1e-6);
}

TEST_CASE("mixed-sign normalized conv output ignores constant input offsets") {
  ConvLayer layer("t", true, true, 2, 3, 3, 1, 0);
  Xoshiro256pp rng(5, 0);
  for (Eigen::Index i = 0; i < layer.raw_weights().size(); ++i)
    layer.raw_weights().values()[i] = rng.uniform(-1.0, 1.0);
  Tensor x = random_batch(1, 2, 7, 7, 6);
  Tensor y0 = layer.forward(x);
  Tensor shifted = Tensor::from_array(x.shape(), x.values() + 0.45);
  Tensor y1 = layer.forward(shifted);
  CHECK((y0.values() - y1.values()).abs().maxCoeff() < 1e-6);
}

TEST_CASE("normalized conv layer equivariance, affine disabled") {
  // mixed-sign: f(g x + o) == g f(x); all-positive: f(g x + o) == g f(x) + o
  ConvLayer mixed("m", true, /*affine=*/false, 1, 2, 3, 1, 0);
  Xoshiro256pp rng(9, 0);
  for (Eigen::Index i = 0; i < mixed.raw_weights().size(); ++i)
    mixed.raw_weights().values()[i] = rng.uniform(-1.0, 1.0);
  ConvLayer avg("a", true, false, 1, 1, 3, 1, 0);
  for (Eigen::Index i = 0; i < avg.raw_weights().size(); ++i)
    avg.raw_weights().values()[i] = rng.uniform(0.05, 1.0);

  Tensor x = random_batch(2, 1, 8, 8, 10);
  for (double g : {0.5, 2.0})
    for (double o : {-0.3, 0.7}) {
      Tensor tx = Tensor::from_array(x.shape(), g * x.values() + o);
      CHECK((mixed.forward(tx).values() - g * mixed.forward(x).values()).abs().maxCoeff() < 1e-6);
      CHECK((avg.forward(tx).values() - (g * avg.forward(x).values() + o)).abs().maxCoeff() <
            1e-6);
    }
}

TEST_CASE("vanilla conv reproduces the gain-offset residual exactly") {
  ConvLayer vanilla("v", false, true, 1, 1, 3, 1, 0);
  Xoshiro256pp rng(11, 0);
  for (Eigen::Index i = 0; i < vanilla.raw_weights().size(); ++i)
    vanilla.raw_weights().values()[i] = rng.uniform(-1.0, 1.0);
  FilterKernel k{vanilla.raw_weights()};
  const double l1 = vanilla.raw_weights().values().abs().sum();
  const double r = positive_weight_ratio(k);

  Tensor x = random_batch(1, 1, 6, 6, 12);
  const double g = 1.7, o = 0.25;
  Tensor tx = Tensor::from_array(x.shape(), g * x.values() + o);
  Tensor lhs = vanilla.forward(tx);
  Tensor rhs = vanilla.forward(x);
  CHECK((lhs.values() - (g * rhs.values() + o * l1 * r)).abs().maxCoeff() < 1e-9);
}

TEST_CASE("tiny_cnn builds, classifies shapes, and exposes conv layers in order") {
  ModelConfig c;
  c.width = 4;
  c.init_seed = 3;
  for (const char* norm : {"none", "batch", "instance"})
    for (const char* mode : {"vanilla", "normalized"}) {
      c.conv_mode = mode;
      c.norm_layer = norm;
      Model m = build_model(c);
      Tensor x = random_batch(3, 3, 20, 20, 77);
      std::vector<Tensor> acts;
      Tensor logits = m.forward(x, /*training=*/true, &acts);
      CHECK(logits.shape() == Shape({3, 10}));
      CHECK(logits.values().isFinite().all());
      REQUIRE(acts.size() == 6);
      CHECK(acts[0].shape() == Shape({3, 4, 20, 20}));
      CHECK(acts[5].shape() == Shape({3, 16, 5, 5}));
      CHECK(m.conv_layers().size() == 6);
    }
}

TEST_CASE("mini_resnet builds and downsamples across stages") {
  ModelConfig c;
  c.architecture = "mini_resnet";
  c.width = 4;
  c.depth = 2;
  c.norm_layer = "batch";
  c.conv_mode = "normalized";
  Model m = build_model(c);
  // stem + 3 stages x 2 blocks x 2 convs + 2 projections
  CHECK(m.conv_layers().size() == 1 + 12 + 2);
  Tensor x = random_batch(2, 3, 16, 16, 5);
  Tensor logits = m.forward(x, true);
  CHECK(logits.shape() == Shape({2, 10}));
  CHECK(logits.values().isFinite().all());
}

TEST_CASE("batch norm training rejects batch size 1") {
  ModelConfig c;
  c.width = 2;
  c.norm_layer = "batch";
  Model m = build_model(c);
  Tensor one = random_batch(1, 3, 8, 8, 1);
  CHECK_THROWS_AS(m.forward(one, /*training=*/true), std::invalid_argument);
  CHECK_NOTHROW(m.forward(one, /*training=*/false));
}

TEST_CASE("parameter parity: batch norm mode counts match across conv modes") {
  for (const char* arch : {"tiny_cnn", "mini_resnet"}) {
    ModelConfig c;
    c.architecture = arch;
    c.width = 8;
    c.norm_layer = "batch";
    c.conv_mode = "vanilla";
    Model vanilla(c);
    c.conv_mode = "normalized";
    Model normalized(c);
    CHECK(vanilla.num_params() == normalized.num_params());

    // re-enabling the affine pair costs exactly 2 parameters per conv output
    // channel
    c.use_affine = "on";
    Model affine(c);
    std::int64_t oc_total = 0;
    for (const ConvLayer* l : affine.conv_layers()) oc_total += l->out_channels();
    CHECK(affine.num_params() - normalized.num_params() == 2 * oc_total);
  }
}

TEST_CASE("without a norm layer the scale parameter is the only overhead") {
  ModelConfig c;
  c.width = 8;
  c.norm_layer = "none";
  c.conv_mode = "vanilla";
  Model vanilla(c);
  c.conv_mode = "normalized";
  Model normalized(c);
  std::int64_t oc_total = 0;
  for (const ConvLayer* l : normalized.conv_layers()) oc_total += l->out_channels();
  CHECK(normalized.num_params() - vanilla.num_params() == oc_total);
}

TEST_CASE("seeded init is bit-reproducible and conv_mode independent") {
  ModelConfig c;
  c.width = 4;
  c.norm_layer = "batch";
  c.conv_mode = "vanilla";
  c.init_seed = 42;
  Model a = build_model(c);
  Model b = build_model(c);
  c.conv_mode = "normalized";
  Model n = build_model(c);

  auto weights = [](const Model& m) {
    std::vector<Tensor> w;
    for (const ConvLayer* l : m.conv_layers()) w.push_back(l->raw_weights());
    return w;
  };
  auto wa = weights(a), wb = weights(b), wn = weights(n);
  REQUIRE(wa.size() == wn.size());
  for (std::size_t i = 0; i < wa.size(); ++i) {
    CHECK((wa[i].values() == wb[i].values()).all());
    CHECK((wa[i].values() == wn[i].values()).all());
  }

  c.init_seed = 43;
  Model other = build_model(c);
  CHECK_FALSE((weights(other)[0].values() == wa[0].values()).all());
}

TEST_CASE("init statistics hit the fan-in target") {
  ConvLayer layer("t", false, false, 64, 64, 3, 1, 1);
  Xoshiro256pp rng(21, 0);
  layer.init(rng);
  const Array& w = layer.raw_weights().values();
  const double stdev = std::sqrt((w - w.mean()).square().mean());
  const double target = std::sqrt(1.0 / (64 * 9));
  CHECK(stdev == doctest::Approx(target).epsilon(0.10));
  CHECK(w.abs().maxCoeff() <= std::sqrt(3.0 / (64 * 9)));
}

TEST_CASE("initial weight ratios of a fresh model are strictly inside (0,1)") {
  ModelConfig c;
  c.width = 8;
  c.conv_mode = "normalized";
  c.init_seed = 17;
  Model m = build_model(c);
  int filters = 0;
  for (const ConvLayer* l : m.conv_layers()) {
    const Tensor& w = l->raw_weights();
    const Eigen::Index block = w.size() / l->out_channels();
    for (int oc = 0; oc < l->out_channels(); ++oc) {
      FilterKernel k{Tensor::from_array({static_cast<int>(block)},
                                        w.values().segment(oc * block, block))};
      const double r = std::abs(positive_weight_ratio(k));
      CHECK(r > 0.0);
      CHECK(r < 1.0);
      ++filters;
    }
  }
  CHECK(filters > 100);
}

TEST_CASE("effective kernels obey the dichotomy while raw weights do not") {
  ModelConfig c;
  c.width = 4;
  c.conv_mode = "normalized";
  c.init_seed = 29;
  Model m = build_model(c);
  for (const ConvLayer* l : m.conv_layers()) {
    Tensor eff = l->effective_kernel();
    const Eigen::Index block = eff.size() / l->out_channels();
    for (int oc = 0; oc < l->out_channels(); ++oc) {
      FilterKernel k{Tensor::from_array({static_cast<int>(block)},
                                        eff.values().segment(oc * block, block))};
      const double r = std::abs(positive_weight_ratio(k));
      CHECK((r < 1e-5 || r == 1.0));
    }
  }
}

TEST_CASE("checkpoint round trip restores config, weights, and behavior") {
  const std::string path = "/tmp/atmosconv_test_ckpt.bin";
  ModelConfig c;
  c.width = 3;
  c.conv_mode = "normalized";
  c.norm_layer = "batch";
  c.init_seed = 55;
  Model m = build_model(c);
  // push running stats away from init so buffers are exercised
  Tensor x = random_batch(4, 3, 12, 12, 91);
  m.forward(x, true);
  m.save_checkpoint(path);

  Model back = Model::load_checkpoint(path);
  CHECK(back.config().conv_mode == "normalized");
  CHECK(back.config().init_seed == 55);
  auto pa = m.parameters();
  auto pb = back.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    CHECK((pa[i].value.values() == pb[i].value.values()).all());
  }
  Tensor ya = m.forward(x, false);
  Tensor yb = back.forward(x, false);
  CHECK((ya.values() == yb.values()).all());
  std::remove(path.c_str());
  CHECK_THROWS_AS(Model::load_checkpoint(path), std::invalid_argument);
}

TEST_CASE("checkpoint loader rejects mismatched payloads") {
  const std::string path = "/tmp/atmosconv_test_ckpt_bad.bin";
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    const char* junk = "{\"format\":\"something-else\"}\n";
    std::fwrite(junk, 1, std::strlen(junk), f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(Model::load_checkpoint(path), std::invalid_argument);
  std::remove(path.c_str());
}

TEST_CASE("full normalized tiny_cnn gradient matches finite differences") {
  ModelConfig c;
  c.width = 2;
  c.conv_mode = "normalized";
  c.norm_layer = "instance";
  c.init_seed = 13;
  Model m = build_model(c);
  Tensor x = random_batch(2, 3, 10, 10, 14);
  const std::vector<int> labels{3, 7};

  auto loss_fn = [&]() {
    Tensor logits = m.forward(x, true);
    return softmax_cross_entropy(logits, labels);
  };

  std::vector<Param> params = m.trainable_params();
  for (const Param& p : params) p.value.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = loss_fn();
    tape.backward(loss);
  }

  Xoshiro256pp pick(71, 0);
  int probes = 0;
  double worst = 0.0;
  for (const Param& p : params) {
    for (int k = 0; k < 2; ++k) {
      const Eigen::Index i =
          static_cast<Eigen::Index>(pick.below(static_cast<std::uint64_t>(p.value.size())));
      const double analytic = p.value.grad()[i];
      const double h = 1e-5;
      const double saved = p.value.values()[i];
      NoGradScope off;
      p.value.values()[i] = saved + h;
      const double up = loss_fn().values()[0];
      p.value.values()[i] = saved - h;
      const double dn = loss_fn().values()[0];
      p.value.values()[i] = saved;
      const double fd = (up - dn) / (2 * h);
      worst = std::max(worst, rel_err(analytic, fd));
      ++probes;
    }
  }
  INFO("worst rel err ", worst, " over ", probes, " probes");
  CHECK(worst < 1e-4);
  CHECK(probes >= 20);
}
