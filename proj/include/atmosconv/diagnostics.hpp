// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "atmosconv/dataset.hpp"
#include "atmosconv/net.hpp"

namespace atmosconv {

/// Equal-count contrast bins: images ranked by per-image pixel standard
/// deviation (channels pooled) and split into n_bins runs whose populations
/// differ by at most one. A dataset whose contrasts are all identical
/// collapses into bin 0 with `degenerate` set; empty bins carry count 0 and
/// NaN accuracy.
struct ContrastBins {
  std::vector<double> bin_lo, bin_hi;  // contrast range covered by each bin
  std::vector<int> count;
  std::vector<double> accuracy;
  bool degenerate = false;
};
ContrastBins contrast_binned_accuracy(Model& model, const Dataset& data, int n_bins = 9);

/// Fraction of index-aligned pairs whose predicted class differs.
double flip_rate(Model& model, const Dataset& clean, const Dataset& corrupted);

/// |r| of every effective conv kernel, 20 fixed bins on [0, 1] (top bin
/// closed at 1), with a per-layer breakdown and the raw per-filter values.
struct RatioHistogram {
  std::vector<int> counts;                                        // 20 bins
  std::vector<std::pair<std::string, std::vector<int>>> layers;   // same bins per layer
  std::vector<double> ratios;                                     // layer-major |r|
};
RatioHistogram ratio_histogram(const Model& model);

/// Per-filter error attribution on the first conv layer: for each filter,
/// rank images by that filter's response (mean |activation|, or max with
/// use_max_response) and report the fraction of its top-k images the full
/// model misclassifies. Rows are sorted by |r|; spearman is the rank
/// correlation between |r| and the misclassified fraction (recorded, not
/// asserted; dataset dependent).
struct FilterErrorRow {
  int filter = 0;
  double abs_ratio = 0.0;
  double mean_response = 0.0;
  double misclassified_frac = 0.0;
};
struct FilterErrorReport {
  std::vector<FilterErrorRow> rows;
  double spearman = 0.0;
};
FilterErrorReport filter_error_analysis(Model& model, const Dataset& data, int top_k = 100,
                                        bool use_max_response = false);

/// Guided backprop similarity of one conv layer's filters: per image and
/// filter, backpropagate the filter's summed activation to the input with
/// relu backward additionally zeroing negative incoming gradients, flatten
/// the input-space maps, and correlate filter pairs. The correlation matrix
/// is averaged over images; the histogram covers its off-diagonal entries
/// with 20 bins on [-1, 1]. A zero-variance map contributes correlation 0
/// and sets `zero_variance_flag`.
struct GuidedBackpropReport {
  int filters = 0;
  int images_used = 0;
  std::vector<double> avg_corr;  // row-major [filters x filters]
  std::vector<int> histogram;    // 20 bins on [-1, 1]
  double mean_offdiag = 0.0;
  bool zero_variance_flag = false;
};
GuidedBackpropReport guided_backprop_similarity(Model& model, int layer_index,
                                                const Dataset& images, int max_images = 8);

/// Average rank correlation helper used by filter_error_analysis; exposed for
/// testing. Ties get averaged ranks.
double spearman_correlation(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace atmosconv
