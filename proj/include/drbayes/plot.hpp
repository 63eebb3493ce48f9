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


#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace drbayes {

struct HistogramSeries {
  std::string label;
  Eigen::VectorXd values;
};

struct HistogramOptions {
  int bins = 40;
  int width = 800;
  int height = 500;
  std::optional<double> reference;
  std::string x_label = "posterior draw";
  std::string y_label = "density";
  std::string title;
};

/// Bin counts over [lo, hi] scaled to a density; the top edge is inclusive.
Eigen::VectorXd histogram_density(const Eigen::VectorXd& values, double lo, double hi, int bins);

/// Overlaid density histograms on a shared binning, with legend, axis labels
/// and an optional vertical reference line.
std::string render_histogram_svg(const std::vector<HistogramSeries>& series,
                                 const HistogramOptions& options = {});

void write_histogram_svg(const std::filesystem::path& path,
                         const std::vector<HistogramSeries>& series,
                         const HistogramOptions& options = {});

}  // namespace drbayes
