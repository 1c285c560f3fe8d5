// SPDX-License-Identifier: Apache-2.0
#include "atmosconv/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "atmosconv/filter_algebra.hpp"
#include "atmosconv/ops.hpp"
#include "atmosconv/train.hpp"

namespace atmosconv {

namespace {

double image_contrast(const Tensor& img) {
  const Array& v = img.values();
  return std::sqrt((v - v.mean()).square().mean());
}

/// Average ranks, ties shared.
std::vector<double> ranks_of(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&x](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double shared = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = shared;
    i = j + 1;
  }
  return rank;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

}  // namespace

double spearman_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("spearman: need two equal-length series of size >= 2");
  }
  return pearson(ranks_of(a), ranks_of(b));
}

ContrastBins contrast_binned_accuracy(Model& model, const Dataset& data, int n_bins) {
  if (n_bins < 1) throw std::invalid_argument("contrast bins: n_bins must be >= 1");
  if (static_cast<int>(data.size()) < n_bins) {
    throw std::invalid_argument("contrast bins: dataset smaller than bin count");
  }
  const std::size_t n = data.size();
  std::vector<double> contrast(n);
  for (std::size_t i = 0; i < n; ++i) contrast[i] = image_contrast(data.images[i]);

  const std::vector<int> preds = predict(model, data);

  ContrastBins out;
  out.bin_lo.assign(static_cast<std::size_t>(n_bins), 0.0);
  out.bin_hi.assign(static_cast<std::size_t>(n_bins), 0.0);
  out.count.assign(static_cast<std::size_t>(n_bins), 0);
  out.accuracy.assign(static_cast<std::size_t>(n_bins),
                      std::numeric_limits<double>::quiet_NaN());

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&contrast](std::size_t a, std::size_t b) {
    return contrast[a] < contrast[b];
  });

  out.degenerate = contrast[order.front()] == contrast[order.back()];
  if (out.degenerate) {
    // all contrasts identical: everything lands in bin 0, the rest stay empty
    int correct = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (preds[i] == data.labels[i]) ++correct;
    out.count[0] = static_cast<int>(n);
    out.accuracy[0] = static_cast<double>(correct) / static_cast<double>(n);
    out.bin_lo[0] = out.bin_hi[0] = contrast[order.front()];
    return out;
  }

  // equal-count split of the rank order; the first (n mod bins) bins take the
  // extra image, so populations differ by at most one
  const std::size_t base = n / static_cast<std::size_t>(n_bins);
  const std::size_t extra = n % static_cast<std::size_t>(n_bins);
  std::size_t pos = 0;
  for (int b = 0; b < n_bins; ++b) {
    const std::size_t take = base + (static_cast<std::size_t>(b) < extra ? 1 : 0);
    int correct = 0;
    for (std::size_t k = 0; k < take; ++k) {
      const std::size_t i = order[pos + k];
      if (preds[i] == data.labels[i]) ++correct;
    }
    if (take > 0) {
      out.bin_lo[static_cast<std::size_t>(b)] = contrast[order[pos]];
      out.bin_hi[static_cast<std::size_t>(b)] = contrast[order[pos + take - 1]];
      out.accuracy[static_cast<std::size_t>(b)] =
          static_cast<double>(correct) / static_cast<double>(take);
    }
    out.count[static_cast<std::size_t>(b)] = static_cast<int>(take);
    pos += take;
  }
  return out;
}

double flip_rate(Model& model, const Dataset& clean, const Dataset& corrupted) {
  if (clean.size() != corrupted.size() || clean.size() == 0) {
    throw std::invalid_argument("flip rate: sets must be nonempty and index-aligned (" +
                                std::to_string(clean.size()) + " vs " +
                                std::to_string(corrupted.size()) + ")");
  }
  const std::vector<int> a = predict(model, clean);
  const std::vector<int> b = predict(model, corrupted);
  int flips = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) ++flips;
  return static_cast<double>(flips) / static_cast<double>(a.size());
}

RatioHistogram ratio_histogram(const Model& model) {
  const std::vector<const ConvLayer*> layers = model.conv_layers();
  if (layers.empty()) throw std::invalid_argument("ratio histogram: model has no conv layers");
  RatioHistogram out;
  out.counts.assign(20, 0);
  for (const ConvLayer* l : layers) {
    std::vector<int> bins(20, 0);
    const Tensor eff = l->effective_kernel();
    const Eigen::Index block = eff.size() / l->out_channels();
    for (int oc = 0; oc < l->out_channels(); ++oc) {
      FilterKernel k{Tensor::from_array({static_cast<int>(block)},
                                        eff.values().segment(oc * block, block))};
      const double r = std::abs(positive_weight_ratio(k));
      const int bin = std::min(19, static_cast<int>(r * 20.0));
      ++bins[static_cast<std::size_t>(bin)];
      ++out.counts[static_cast<std::size_t>(bin)];
      out.ratios.push_back(r);
    }
    out.layers.emplace_back(l->name(), std::move(bins));
  }
  return out;
}

FilterErrorReport filter_error_analysis(Model& model, const Dataset& data, int top_k,
                                        bool use_max_response) {
  data.validate();
  const int n = static_cast<int>(data.size());
  if (top_k < 1 || top_k > n) {
    throw std::invalid_argument("filter error analysis: top_k " + std::to_string(top_k) +
                                " outside [1, " + std::to_string(n) + "]");
  }
  const std::vector<const ConvLayer*> layers = model.conv_layers();
  if (layers.empty()) throw std::invalid_argument("filter error analysis: no conv layers");
  const ConvLayer* first = layers.front();
  const int F = first->out_channels();

  // response[f][i] and correctness of the full model per image
  std::vector<std::vector<double>> response(static_cast<std::size_t>(F),
                                            std::vector<double>(static_cast<std::size_t>(n)));
  std::vector<char> wrong(static_cast<std::size_t>(n));
  {
    NoGradScope off;
    for (int i = 0; i < n; ++i) {
      std::vector<Tensor> acts;
      Tensor logits = model.forward(make_batch(data, {i}), /*training=*/false, &acts);
      wrong[static_cast<std::size_t>(i)] =
          argmax_rows(logits)[0] != data.labels[static_cast<std::size_t>(i)];
      const Tensor& map = acts.front();  // [1, F, H', W']
      const Eigen::Index plane = map.size() / F;
      for (int f = 0; f < F; ++f) {
        const auto m = map.values().segment(f * plane, plane).abs();
        response[static_cast<std::size_t>(f)][static_cast<std::size_t>(i)] =
            use_max_response ? m.maxCoeff() : m.mean();
      }
    }
  }

  const Tensor eff = first->effective_kernel();
  const Eigen::Index block = eff.size() / F;
  FilterErrorReport report;
  std::vector<double> abs_ratios, fracs;
  for (int f = 0; f < F; ++f) {
    FilterErrorRow row;
    row.filter = f;
    FilterKernel k{Tensor::from_array({static_cast<int>(block)},
                                      eff.values().segment(f * block, block))};
    row.abs_ratio = std::abs(positive_weight_ratio(k));

    const std::vector<double>& resp = response[static_cast<std::size_t>(f)];
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&resp](int a, int b) { return resp[static_cast<std::size_t>(a)] > resp[static_cast<std::size_t>(b)]; });
    int miss = 0;
    double resp_sum = 0.0;
    for (int k2 = 0; k2 < top_k; ++k2) {
      const int i = order[static_cast<std::size_t>(k2)];
      miss += wrong[static_cast<std::size_t>(i)] ? 1 : 0;
      resp_sum += resp[static_cast<std::size_t>(i)];
    }
    row.misclassified_frac = static_cast<double>(miss) / top_k;
    row.mean_response = resp_sum / top_k;
    abs_ratios.push_back(row.abs_ratio);
    fracs.push_back(row.misclassified_frac);
    report.rows.push_back(row);
  }
  std::sort(report.rows.begin(), report.rows.end(),
            [](const FilterErrorRow& a, const FilterErrorRow& b) {
              return a.abs_ratio < b.abs_ratio;
            });
  report.spearman = F >= 2 ? spearman_correlation(abs_ratios, fracs) : 0.0;
  return report;
}

GuidedBackpropReport guided_backprop_similarity(Model& model, int layer_index,
                                                const Dataset& images, int max_images) {
  images.validate();
  if (images.size() == 0) throw std::invalid_argument("guided backprop: need >= 1 image");
  const std::vector<const ConvLayer*> layers = model.conv_layers();
  if (layer_index < 0 || layer_index >= static_cast<int>(layers.size())) {
    throw std::invalid_argument("guided backprop: layer index " + std::to_string(layer_index) +
                                " outside [0, " + std::to_string(layers.size()) + ")");
  }
  const int F = layers[static_cast<std::size_t>(layer_index)]->out_channels();
  if (F < 2) throw std::invalid_argument("guided backprop: layer needs >= 2 filters");

  GuidedBackpropReport report;
  report.filters = F;
  report.avg_corr.assign(static_cast<std::size_t>(F) * F, 0.0);
  const int n_img = std::min<int>(max_images, static_cast<int>(images.size()));
  report.images_used = n_img;

  for (int i = 0; i < n_img; ++i) {
    // one guided map per filter: d(sum of that filter's activation)/d(input)
    std::vector<std::vector<double>> maps(static_cast<std::size_t>(F));
    for (int f = 0; f < F; ++f) {
      Tensor x = make_batch(images, {i});
      x.set_requires_grad(true);
      Tape tape;
      tape.guided_relu = true;
      TapeScope scope(tape);
      std::vector<Tensor> acts;
      model.forward(x, /*training=*/false, &acts);
      const Tensor& act = acts[static_cast<std::size_t>(layer_index)];
      Tensor mask = Tensor::zeros(act.shape());
      const Eigen::Index plane = act.size() / F;
      mask.values().segment(f * plane, plane).setOnes();
      Tensor target = sum(mul(act, mask));
      tape.backward(target);
      maps[static_cast<std::size_t>(f)].assign(x.grad().data(), x.grad().data() + x.grad().size());
    }

    for (int a = 0; a < F; ++a)
      for (int b = 0; b < F; ++b) {
        double c;
        if (a == b) {
          c = 1.0;
        } else {
          const bool flat_a = std::equal(maps[static_cast<std::size_t>(a)].begin() + 1,
                                         maps[static_cast<std::size_t>(a)].end(),
                                         maps[static_cast<std::size_t>(a)].begin());
          const bool flat_b = std::equal(maps[static_cast<std::size_t>(b)].begin() + 1,
                                         maps[static_cast<std::size_t>(b)].end(),
                                         maps[static_cast<std::size_t>(b)].begin());
          if (flat_a || flat_b) {
            report.zero_variance_flag = true;
            c = 0.0;
          } else {
            c = pearson(maps[static_cast<std::size_t>(a)], maps[static_cast<std::size_t>(b)]);
          }
        }
        report.avg_corr[static_cast<std::size_t>(a) * F + static_cast<std::size_t>(b)] += c / n_img;
      }
  }

  report.histogram.assign(20, 0);
  double sum_off = 0.0;
  int n_off = 0;
  for (int a = 0; a < F; ++a)
    for (int b = 0; b < F; ++b) {
      if (a == b) continue;
      const double c = report.avg_corr[static_cast<std::size_t>(a) * F + static_cast<std::size_t>(b)];
      const int bin = std::clamp(static_cast<int>((c + 1.0) * 10.0), 0, 19);
      ++report.histogram[static_cast<std::size_t>(bin)];
      sum_off += c;
      ++n_off;
    }
  report.mean_offdiag = sum_off / n_off;
  return report;
}

}  // namespace atmosconv
