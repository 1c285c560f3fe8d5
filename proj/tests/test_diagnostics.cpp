// SPDX-License-Identifier: Apache-2.0
#include "atmosconv/diagnostics.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

#include "atmosconv/atf.hpp"
#include "atmosconv/filter_algebra.hpp"
#include "atmosconv/train.hpp"

using namespace atmosconv;

namespace {

Model small_model(const char* mode = "vanilla", std::uint64_t seed = 1, int width = 4) {
  ModelConfig c;
  c.width = width;
  c.conv_mode = mode;
  c.init_seed = seed;
  return build_model(c);
}

}  // namespace

TEST_CASE("spearman correlation basics") {
  CHECK(spearman_correlation({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman_correlation({1, 2, 3, 4}, {5, 4, 3, 2}) == doctest::Approx(-1.0));
  // monotone under any order-preserving transform
  CHECK(spearman_correlation({1, 2, 3, 4}, {1, 100, 10000, 1000000}) == doctest::Approx(1.0));
  CHECK(spearman_correlation({1, 1, 1, 1}, {1, 2, 3, 4}) == 0.0);
  CHECK_THROWS_AS(spearman_correlation({1.0}, {2.0}), std::invalid_argument);
}

TEST_CASE("contrast bins are equal-count with monotone boundaries") {
  Model m = small_model();
  Dataset data = generate_synthetic(100, 41);
  ContrastBins bins = contrast_binned_accuracy(m, data, 9);
  CHECK_FALSE(bins.degenerate);
  const int total = std::accumulate(bins.count.begin(), bins.count.end(), 0);
  CHECK(total == 100);
  int lo = 1 << 30, hi = 0;
  for (int c : bins.count) {
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  CHECK(hi - lo <= 1);
  for (std::size_t b = 0; b + 1 < bins.bin_lo.size(); ++b) {
    CHECK(bins.bin_hi[b] <= bins.bin_lo[b + 1]);
    CHECK(bins.bin_lo[b] <= bins.bin_hi[b]);
  }
  for (double a : bins.accuracy) {
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
  }
}

TEST_CASE("contrast binning handles remainders and degenerate datasets") {
  Model m = small_model();
  Dataset data = generate_synthetic(94, 43);  // 94 = 9*10 + 4
  ContrastBins bins = contrast_binned_accuracy(m, data, 9);
  int elevens = 0, tens = 0;
  for (int c : bins.count) {
    if (c == 11) ++elevens;
    if (c == 10) ++tens;
  }
  CHECK(elevens == 4);
  CHECK(tens == 5);

  Dataset flat = data;
  flat.images.assign(flat.size(), data.images[0]);
  ContrastBins deg = contrast_binned_accuracy(m, flat, 9);
  CHECK(deg.degenerate);
  CHECK(deg.count[0] == 94);
  for (std::size_t b = 1; b < deg.count.size(); ++b) {
    CHECK(deg.count[b] == 0);
    CHECK(std::isnan(deg.accuracy[b]));
  }
  CHECK_THROWS_AS(contrast_binned_accuracy(m, generate_synthetic(5, 1), 9),
                  std::invalid_argument);
}

TEST_CASE("flip rate is zero against an identical set and for constant models") {
  Model m = small_model("vanilla", 3);
  Dataset data = generate_synthetic(40, 47);
  CHECK(flip_rate(m, data, data) == 0.0);

  // severity-0 corruption is the identity, so no flips either
  auto [same, manifest] = corrupt_dataset(data.images, Variant::S, 5, 0.0);
  Dataset zero = data;
  zero.images = same;
  CHECK(flip_rate(m, data, zero) == 0.0);

  ModelConfig c;
  c.width = 2;
  Model constant(c);  // zero weights: constant logits, predictions never move
  auto [hit, manifest2] = corrupt_dataset(data.images, Variant::S, 5, 1.0);
  Dataset hard = data;
  hard.images = hit;
  CHECK(flip_rate(constant, data, hard) == 0.0);

  Dataset shorter = data;
  shorter.images.pop_back();
  shorter.labels.pop_back();
  CHECK_THROWS_AS(flip_rate(m, data, shorter), std::invalid_argument);
}

TEST_CASE("ratio histogram puts normalized models at zero and flags averaging filters") {
  Model norm = small_model("normalized", 5);
  RatioHistogram h = ratio_histogram(norm);
  int total = std::accumulate(h.counts.begin(), h.counts.end(), 0);
  CHECK(total == static_cast<int>(h.ratios.size()));
  CHECK(h.counts[0] == total);  // every effective kernel is differencing
  for (double r : h.ratios) CHECK(r < 0.05);
  CHECK(h.layers.size() == 6);

  // vanilla random init: mass spread above the first bin
  Model van = small_model("vanilla", 5);
  RatioHistogram hv = ratio_histogram(van);
  int above = 0;
  for (std::size_t b = 1; b < hv.counts.size(); ++b) above += hv.counts[b];
  CHECK(above > 0);

  // hand-built all-positive filter lands exactly in the top bin
  ConvLayer* first = const_cast<ConvLayer*>(van.conv_layers().front());
  const Eigen::Index block = first->raw_weights().size() / first->out_channels();
  first->raw_weights().values().segment(0, block).setConstant(0.25);
  RatioHistogram hp = ratio_histogram(van);
  CHECK(hp.counts[19] >= 1);
  CHECK(hp.ratios[0] == 1.0);
}

TEST_CASE("filter error analysis ranks filters and reports chance level for broken heads") {
  ModelConfig c;
  c.width = 4;
  c.init_seed = 61;
  Model m = build_model(c);
  // zero the head: logits constant, model always predicts class 0
  for (const Param& p : m.trainable_params()) {
    if (p.name.rfind("head.", 0) == 0) p.value.values().setZero();
  }
  Dataset data = generate_synthetic(60, 53);
  FilterErrorReport rep = filter_error_analysis(m, data, 30);
  REQUIRE(rep.rows.size() == 4);
  for (std::size_t i = 0; i + 1 < rep.rows.size(); ++i) {
    CHECK(rep.rows[i].abs_ratio <= rep.rows[i + 1].abs_ratio);
  }
  // only class 0 is ever right; each filter's top-30 holds >= 24 wrong images
  for (const FilterErrorRow& row : rep.rows) {
    CHECK(row.misclassified_frac >= 0.75);
    CHECK(row.misclassified_frac <= 1.0);
  }
  CHECK_THROWS_AS(filter_error_analysis(m, data, 61), std::invalid_argument);
  CHECK_THROWS_AS(filter_error_analysis(m, data, 0), std::invalid_argument);
}

TEST_CASE("filter error analysis on a normalized model reports the dichotomy") {
  Model m = small_model("normalized", 67, 2);
  Dataset data = generate_synthetic(30, 59);
  FilterErrorReport rep = filter_error_analysis(m, data, 10);
  for (const FilterErrorRow& row : rep.rows) {
    CHECK((row.abs_ratio < 1e-5 || row.abs_ratio == 1.0));
  }
  FilterErrorReport max_rep = filter_error_analysis(m, data, 10, /*use_max_response=*/true);
  CHECK(max_rep.rows.size() == rep.rows.size());
}

TEST_CASE("guided backprop maps of duplicated filters correlate perfectly") {
  ModelConfig c;
  c.width = 4;
  c.init_seed = 71;
  Model m = build_model(c);
  ConvLayer* first = const_cast<ConvLayer*>(m.conv_layers().front());
  const Eigen::Index block = first->raw_weights().size() / first->out_channels();
  // duplicate filter 0 into filter 1
  first->raw_weights().values().segment(block, block) =
      first->raw_weights().values().segment(0, block);

  Dataset data = generate_synthetic(3, 73);
  GuidedBackpropReport rep = guided_backprop_similarity(m, 0, data, 2);
  CHECK(rep.filters == 4);
  CHECK(rep.images_used == 2);
  // symmetry and unit diagonal
  for (int a = 0; a < 4; ++a) {
    CHECK(rep.avg_corr[static_cast<std::size_t>(a) * 4 + static_cast<std::size_t>(a)] ==
          doctest::Approx(1.0));
    for (int b = 0; b < 4; ++b) {
      CHECK(rep.avg_corr[static_cast<std::size_t>(a) * 4 + static_cast<std::size_t>(b)] ==
            doctest::Approx(rep.avg_corr[static_cast<std::size_t>(b) * 4 +
                                         static_cast<std::size_t>(a)]));
    }
  }
  CHECK(rep.avg_corr[0 * 4 + 1] == doctest::Approx(1.0).epsilon(1e-6));
  const int total = std::accumulate(rep.histogram.begin(), rep.histogram.end(), 0);
  CHECK(total == 4 * 3);
  CHECK(rep.mean_offdiag >= -1.0);
  CHECK(rep.mean_offdiag <= 1.0);

  CHECK_THROWS_AS(guided_backprop_similarity(m, 9, data, 2), std::invalid_argument);
  Dataset empty;
  empty.C = 3;
  empty.H = 20;
  empty.W = 20;
  CHECK_THROWS_AS(guided_backprop_similarity(m, 0, empty, 2), std::invalid_argument);
}

TEST_CASE("guided backprop flags zero-variance maps instead of crashing") {
  ModelConfig c;
  c.width = 2;
  Model m(c);  // all-zero weights: every map is flat zero
  Dataset data = generate_synthetic(2, 79);
  GuidedBackpropReport rep = guided_backprop_similarity(m, 0, data, 1);
  CHECK(rep.zero_variance_flag);
  for (int a = 0; a < rep.filters; ++a)
    for (int b = 0; b < rep.filters; ++b) {
      if (a != b) {
        CHECK(rep.avg_corr[static_cast<std::size_t>(a) * static_cast<std::size_t>(rep.filters) +
                           static_cast<std::size_t>(b)] == 0.0);
      }
    }
}
