// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace atmosconv {

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

/// Numeric CSV with a header row.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

/// One named series for the SVG helpers.
struct Series {
  std::string label;
  std::vector<double> y;
};

/// Minimal self-contained SVG line chart: x is the sample index, series are
/// polylines with a small legend. Best-effort output; CSV stays canonical.
std::string svg_line_chart(const std::string& title, const std::vector<Series>& series,
                           int width = 640, int height = 400);

/// Minimal SVG bar chart over labeled buckets.
std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values, int width = 640, int height = 400);

}  // namespace atmosconv
