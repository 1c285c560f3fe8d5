// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "atmosconv/filter_algebra.hpp"
#include "atmosconv/gradcheck.hpp"
#include "atmosconv/net.hpp"
#include "atmosconv/ops.hpp"
#include "atmosconv/rng.hpp"

namespace atmosconv {

namespace {

Tensor random_tensor(Shape shape, Xoshiro256pp& rng, double lo, double hi) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (Eigen::Index i = 0; i < t.size(); ++i) t.values()[i] = rng.uniform(lo, hi);
  return t;
}

/// Analytic gradient of a taped scalar with respect to each tensor in
/// `wrt`, compared against central differences at `probes` random elements
/// per tensor. The loss builder must re-read the current parameter values.
GradCheckEntry probe(const std::string& op, const std::function<Tensor()>& loss_fn,
                     const std::vector<Tensor>& wrt, int probes_per_tensor,
                     Xoshiro256pp& pick) {
  GradCheckEntry entry{op, 0.0, 0};
  for (const Tensor& p : wrt) p.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = loss_fn();
    tape.backward(loss);
  }
  auto value_of = [&loss_fn]() {
    NoGradScope off;
    return loss_fn().values()[0];
  };
  for (const Tensor& p : wrt) {
    Tensor handle = p;  // shares the node; finite_diff perturbs in place
    for (int k = 0; k < probes_per_tensor; ++k) {
      const Eigen::Index i =
          static_cast<Eigen::Index>(pick.below(static_cast<std::uint64_t>(p.size())));
      const Array fd = finite_diff_grad_at(value_of, handle, {i});
      entry.worst_rel = std::max(entry.worst_rel, rel_err(p.grad()[i], fd[0]));
      ++entry.probes;
    }
  }
  return entry;
}

}  // namespace

std::vector<GradCheckEntry> run_gradient_suite(std::uint64_t seed) {
  std::vector<GradCheckEntry> results;
  Xoshiro256pp pick(seed, 99);

  {  // normalized conv, gradients through the normalization into raw weights
    Xoshiro256pp rng(seed, 0);
    ConvLayer layer("nc", /*normalized=*/true, /*affine=*/true, 2, 3, 3, 1, 1);
    layer.init(rng);
    Tensor x = random_tensor({2, 2, 6, 6}, rng, -1.0, 1.0);
    x.set_requires_grad(true);
    auto loss = [&layer, &x]() {
      Tensor y = layer.forward(x);
      return mean(mul(y, y));  // smooth scalarization, no relu kinks
    };
    std::vector<Tensor> wrt;
    for (const Param& p : [&] {
           std::vector<Param> ps;
           layer.append_params(ps);
           return ps;
         }())
      wrt.push_back(p.value);
    wrt.push_back(x);
    results.push_back(probe("norm_conv", loss, wrt, 8, pick));
  }

  {  // part-sum regularizer; weights kept away from 0 so |.| kinks are clear
    Xoshiro256pp rng(seed, 1);
    Tensor w = random_tensor({4, 3, 3, 3}, rng, 0.1, 1.0);
    for (Eigen::Index i = 0; i < w.size(); ++i)
      if (rng.uniform() < 0.5) w.values()[i] = -w.values()[i];
    w.set_requires_grad(true);
    auto loss = [&w]() { return soft_reg_rows(w, 4); };
    results.push_back(probe("soft_reg", loss, {w}, 24, pick));
  }

  {  // batch norm, training statistics
    Xoshiro256pp rng(seed, 2);
    Tensor x = random_tensor({4, 3, 5, 5}, rng, -1.0, 1.0);
    Tensor gamma = random_tensor({3}, rng, 0.5, 1.5);
    Tensor beta = random_tensor({3}, rng, -0.3, 0.3);
    Tensor rm = Tensor::zeros({3});
    Tensor rv = Tensor::full({3}, 1.0);
    x.set_requires_grad(true);
    gamma.set_requires_grad(true);
    beta.set_requires_grad(true);
    auto loss = [&]() {
      Tensor y = batch_norm(x, gamma, beta, rm, rv, /*training=*/true);
      return mean(mul(y, y));
    };
    results.push_back(probe("batch_norm", loss, {x, gamma, beta}, 8, pick));
  }

  {  // instance norm
    Xoshiro256pp rng(seed, 3);
    Tensor x = random_tensor({3, 2, 5, 5}, rng, -1.0, 1.0);
    Tensor gamma = random_tensor({2}, rng, 0.5, 1.5);
    Tensor beta = random_tensor({2}, rng, -0.3, 0.3);
    x.set_requires_grad(true);
    gamma.set_requires_grad(true);
    beta.set_requires_grad(true);
    auto loss = [&]() {
      Tensor y = instance_norm(x, gamma, beta);
      return mean(mul(y, y));
    };
    results.push_back(probe("instance_norm", loss, {x, gamma, beta}, 8, pick));
  }

  {  // full tiny_cnn cross-entropy; relu/maxpool kinks are generically clear
    // of the 1e-5 step at this fixed seed
    ModelConfig c;
    c.width = 2;
    c.conv_mode = "normalized";
    c.norm_layer = "instance";
    c.init_seed = seed + 13;
    Model m = build_model(c);
    Xoshiro256pp rng(seed, 4);
    Tensor x = random_tensor({2, 3, 10, 10}, rng, 0.0, 1.0);
    const std::vector<int> labels{1, 8};
    auto loss = [&m, &x, &labels]() {
      Tensor logits = m.forward(x, /*training=*/true);
      return softmax_cross_entropy(logits, labels);
    };
    std::vector<Tensor> wrt;
    for (const Param& p : m.trainable_params()) wrt.push_back(p.value);
    results.push_back(probe("tiny_cnn", loss, wrt, 2, pick));
  }

  return results;
}

}  // namespace atmosconv
