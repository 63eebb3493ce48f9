/*
 * Copyright 2026 The drbayes Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "drbayes/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "drbayes/error.hpp"

namespace drbayes {

namespace {

const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

Eigen::VectorXd histogram_density(const Eigen::VectorXd& values, double lo, double hi, int bins) {
  if (bins < 1) throw ConfigError("histogram needs at least one bin");
  if (!(hi > lo)) throw ConfigError("histogram range must have hi > lo");
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(bins);
  const double width = (hi - lo) / bins;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const double v = values(i);
    if (v < lo || v > hi) continue;
    const int b = std::min(bins - 1, static_cast<int>((v - lo) / width));
    counts(b) += 1.0;
  }
  return counts / (static_cast<double>(values.size()) * width);
}

std::string render_histogram_svg(const std::vector<HistogramSeries>& series,
                                 const HistogramOptions& options) {
  if (series.empty()) throw ConfigError("plot needs at least one series");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& s : series) {
    if (s.values.size() == 0) throw ConfigError("series '" + s.label + "' is empty");
    if (!s.values.allFinite()) throw NumericError("series '" + s.label + "' has non-finite values");
    lo = std::min(lo, s.values.minCoeff());
    hi = std::max(hi, s.values.maxCoeff());
  }
  if (options.reference) {
    lo = std::min(lo, *options.reference);
    hi = std::max(hi, *options.reference);
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.02 * (hi - lo);
  lo -= pad;
  hi += pad;

  std::vector<Eigen::VectorXd> dens;
  double ymax = 0.0;
  for (const auto& s : series) {
    dens.push_back(histogram_density(s.values, lo, hi, options.bins));
    ymax = std::max(ymax, dens.back().maxCoeff());
  }
  ymax *= 1.08;

  const double left = 70, right = 20, top = 40, bottom = 60;
  const double pw = options.width - left - right;
  const double ph = options.height - top - bottom;
  auto sx = [&](double v) { return left + (v - lo) / (hi - lo) * pw; };
  auto sy = [&](double v) { return top + ph - v / ymax * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << options.width << "\" height=\""
     << options.height << "\" viewBox=\"0 0 " << options.width << ' ' << options.height
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!options.title.empty()) {
    os << "<text x=\"" << num(options.width / 2.0) << "\" y=\"22\" text-anchor=\"middle\" "
       << "font-size=\"15\">" << escape(options.title) << "</text>\n";
  }

  const double bw = pw / options.bins;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kColors[k % (sizeof(kColors) / sizeof(kColors[0]))];
    os << "<g class=\"series\" fill=\"" << color << "\" fill-opacity=\"0.45\" stroke=\"" << color
       << "\" stroke-width=\"0.6\">\n";
    for (int b = 0; b < options.bins; ++b) {
      const double h = dens[k](b);
      if (h <= 0.0) continue;
      os << "<rect x=\"" << num(left + b * bw) << "\" y=\"" << num(sy(h)) << "\" width=\""
         << num(bw) << "\" height=\"" << num(top + ph - sy(h)) << "\"/>\n";
    }
    os << "</g>\n";
  }

  // Axes and ticks.
  os << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\""
     << top + ph << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double xv = lo + (hi - lo) * t / 5.0;
    const double yv = ymax * t / 5.0;
    os << "<line x1=\"" << num(sx(xv)) << "\" y1=\"" << top + ph << "\" x2=\"" << num(sx(xv))
       << "\" y2=\"" << top + ph + 5 << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << num(sx(xv)) << "\" y=\"" << top + ph + 18
       << "\" text-anchor=\"middle\">" << tick(xv) << "</text>\n";
    os << "<line x1=\"" << left - 5 << "\" y1=\"" << num(sy(yv)) << "\" x2=\"" << left
       << "\" y2=\"" << num(sy(yv)) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << left - 8 << "\" y=\"" << num(sy(yv) + 4)
       << "\" text-anchor=\"end\">" << tick(yv) << "</text>\n";
  }
  os << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << options.height - 15
     << "\" text-anchor=\"middle\">" << escape(options.x_label) << "</text>\n";
  os << "<text x=\"18\" y=\"" << num(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << num(top + ph / 2) << ")\">" << escape(options.y_label) << "</text>\n";

  if (options.reference) {
    const double xr = sx(*options.reference);
    os << "<line class=\"reference\" x1=\"" << num(xr) << "\" y1=\"" << top << "\" x2=\"" << num(xr)
       << "\" y2=\"" << top + ph << "\" stroke=\"black\" stroke-width=\"1.5\" "
       << "stroke-dasharray=\"6 4\"/>\n";
  }

  // Legend.
  double ly = top + 10;
  const double lx = left + pw - 170;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kColors[k % (sizeof(kColors) / sizeof(kColors[0]))];
    os << "<rect x=\"" << num(lx) << "\" y=\"" << num(ly) << "\" width=\"14\" height=\"10\" fill=\""
       << color << "\" fill-opacity=\"0.45\" stroke=\"" << color << "\"/>\n";
    os << "<text x=\"" << num(lx + 20) << "\" y=\"" << num(ly + 9) << "\">"
       << escape(series[k].label) << "</text>\n";
    ly += 18;
  }
  if (options.reference) {
    os << "<line x1=\"" << num(lx) << "\" y1=\"" << num(ly + 5) << "\" x2=\"" << num(lx + 14)
       << "\" y2=\"" << num(ly + 5) << "\" stroke=\"black\" stroke-dasharray=\"6 4\"/>\n";
    os << "<text x=\"" << num(lx + 20) << "\" y=\"" << num(ly + 9) << "\">reference "
       << tick(*options.reference) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_histogram_svg(const std::filesystem::path& path,
                         const std::vector<HistogramSeries>& series,
                         const HistogramOptions& options) {
  const std::string svg = render_histogram_svg(series, options);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << svg;
}

}  // namespace drbayes
