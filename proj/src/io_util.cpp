// SPDX-License-Identifier: Apache-2.0
#include "atmosconv/io_util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace atmosconv {

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot create " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ostringstream out;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out << ',';
    out << header[i];
  }
  out << '\n';
  for (const auto& row : rows) {
    if (row.size() != header.size()) {
      throw std::invalid_argument("csv: row width " + std::to_string(row.size()) +
                                  " != header width " + std::to_string(header.size()));
    }
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << row[i];
    }
    out << '\n';
  }
  write_text_file(path, out.str());
}

namespace {

struct Range {
  double lo = 0.0, hi = 1.0;
};

Range value_range(const std::vector<Series>& series) {
  Range r{1e300, -1e300};
  for (const Series& s : series)
    for (double v : s.y) {
      if (!std::isfinite(v)) continue;
      r.lo = std::min(r.lo, v);
      r.hi = std::max(r.hi, v);
    }
  if (r.lo > r.hi) return {0.0, 1.0};
  if (r.lo == r.hi) return {r.lo - 1.0, r.hi + 1.0};
  return r;
}

const char* kPalette[6] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string svg_line_chart(const std::string& title, const std::vector<Series>& series,
                           int width, int height) {
  const double ml = 50, mr = 10, mt = 30, mb = 30;
  const double pw = width - ml - mr, ph = height - mt - mb;
  const Range r = value_range(series);
  std::size_t max_n = 1;
  for (const Series& s : series) max_n = std::max(max_n, s.y.size());

  std::ostringstream out;
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "'>\n<rect width='100%' height='100%' fill='white'/>\n"
      << "<text x='" << width / 2 << "' y='18' text-anchor='middle' font-size='14'>"
      << escape_xml(title) << "</text>\n"
      << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << mt + ph
      << "' stroke='black'/>\n"
      << "<line x1='" << ml << "' y1='" << mt + ph << "' x2='" << ml + pw << "' y2='" << mt + ph
      << "' stroke='black'/>\n"
      << "<text x='8' y='" << mt + 8 << "' font-size='10'>" << r.hi << "</text>\n"
      << "<text x='8' y='" << mt + ph << "' font-size='10'>" << r.lo << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    const char* color = kPalette[si % 6];
    out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
    for (std::size_t i = 0; i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      const double x = ml + (max_n == 1 ? 0.0 : pw * static_cast<double>(i) /
                                                    static_cast<double>(max_n - 1));
      const double y = mt + ph - ph * (s.y[i] - r.lo) / (r.hi - r.lo);
      out << x << ',' << y << ' ';
    }
    out << "'/>\n<text x='" << ml + 6 << "' y='" << mt + 14 + 14 * static_cast<double>(si)
        << "' font-size='11' fill='" << color << "'>" << escape_xml(s.label) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values, int width, int height) {
  if (labels.size() != values.size()) {
    throw std::invalid_argument("svg bar chart: label/value count mismatch");
  }
  const double ml = 50, mr = 10, mt = 30, mb = 40;
  const double pw = width - ml - mr, ph = height - mt - mb;
  double hi = 1e-300;
  for (double v : values)
    if (std::isfinite(v)) hi = std::max(hi, v);
  if (hi <= 0) hi = 1.0;

  std::ostringstream out;
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "'>\n<rect width='100%' height='100%' fill='white'/>\n"
      << "<text x='" << width / 2 << "' y='18' text-anchor='middle' font-size='14'>"
      << escape_xml(title) << "</text>\n"
      << "<line x1='" << ml << "' y1='" << mt + ph << "' x2='" << ml + pw << "' y2='" << mt + ph
      << "' stroke='black'/>\n"
      << "<text x='8' y='" << mt + 8 << "' font-size='10'>" << hi << "</text>\n";
  const double n = static_cast<double>(values.size());
  const double slot = pw / n;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = std::isfinite(values[i]) ? std::max(0.0, values[i]) : 0.0;
    const double h = ph * v / hi;
    out << "<rect x='" << ml + slot * static_cast<double>(i) + slot * 0.1 << "' y='"
        << mt + ph - h << "' width='" << slot * 0.8 << "' height='" << h
        << "' fill='#1f77b4'/>\n";
    out << "<text x='" << ml + slot * (static_cast<double>(i) + 0.5) << "' y='" << mt + ph + 14
        << "' text-anchor='middle' font-size='9'>" << escape_xml(labels[i]) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace atmosconv
