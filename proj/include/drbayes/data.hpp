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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace drbayes {

enum class TreatmentKind { kBinary, kContinuous };

/// Observations (Y_i, D_i, X_i), i = 1..n. Immutable once built.
///
/// Y is always binary. D is binary for the treatment-effect, policy and
/// missing-data functionals and real valued for the average derivative.
class Dataset {
 public:
  /// Validates and takes ownership. Throws IoError naming the offending row.
  Dataset(Eigen::VectorXd y, Eigen::VectorXd d, Eigen::MatrixXd x,
          TreatmentKind treatment = TreatmentKind::kBinary);

  const Eigen::VectorXd& y() const { return y_; }
  const Eigen::VectorXd& d() const { return d_; }
  const Eigen::MatrixXd& x() const { return x_; }
  std::size_t n() const { return static_cast<std::size_t>(y_.size()); }
  std::size_t p() const { return static_cast<std::size_t>(x_.cols()); }
  TreatmentKind treatment() const { return treatment_; }

  /// Design matrix W = [D, X] with the treatment in column 0.
  Eigen::MatrixXd design() const;

  /// Rows in the given order.
  Dataset subset(const std::vector<std::size_t>& rows) const;

 private:
  Eigen::VectorXd y_;
  Eigen::VectorXd d_;
  Eigen::MatrixXd x_;
  TreatmentKind treatment_;
};

/// Column mapping for CSV ingestion.
struct DataSchema {
  std::string y = "y";
  std::string d = "d";
  std::vector<std::string> covariates;
  TreatmentKind treatment = TreatmentKind::kBinary;
};

/// Reads a schema from a JSON file of the form
/// {"y": "...", "d": "...", "covariates": [...], "treatment": "binary"}.
DataSchema load_schema(const std::filesystem::path& path);

Dataset load_csv(const std::filesystem::path& path, const DataSchema& schema);

/// Writes shortest round-trip representations, so `load_csv` recovers every
/// finite double bit for bit.
void write_csv(const std::filesystem::path& path, const Dataset& data,
               const DataSchema& schema);

struct TrimResult {
  /// Empty when a single row survives (a Dataset needs n >= 2).
  std::optional<Dataset> data;
  std::vector<std::size_t> kept;
};

/// Keeps rows with lo <= pscore <= hi. No surviving row is a NumericError.
TrimResult trim_by_overlap(const Dataset& data, const Eigen::VectorXd& pscores,
                           double lo = 0.05, double hi = 0.95);

enum class SplitMode { kFullReuse, kHalfSplit };

/// Which rows feed the pilot fits and which feed posterior inference.
struct SplitPlan {
  SplitMode mode = SplitMode::kFullReuse;
  std::vector<std::size_t> pilot_indices;
  std::vector<std::size_t> inference_indices;
  std::uint64_t seed = 0;
};

/// Half-split assigns the first half of a seeded permutation to the pilot
/// role; `swap_roles` exchanges the halves. Index sets come back sorted.
SplitPlan make_split(std::size_t n, SplitMode mode, std::uint64_t seed,
                     bool swap_roles = false);

std::string to_string(SplitMode mode);
SplitMode split_mode_from_string(const std::string& s);

}  // namespace drbayes
