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

#include "drbayes/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "drbayes/error.hpp"
#include "drbayes/rng.hpp"

namespace drbayes {

namespace {

bool is_binary(double v) { return v == 0.0 || v == 1.0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '"' ||
                        s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

Dataset::Dataset(Eigen::VectorXd y, Eigen::VectorXd d, Eigen::MatrixXd x,
                 TreatmentKind treatment)
    : y_(std::move(y)), d_(std::move(d)), x_(std::move(x)), treatment_(treatment) {
  if (y_.size() != d_.size() || y_.size() != x_.rows()) {
    throw IoError("dataset containers disagree on n: y=" + std::to_string(y_.size()) +
                  " d=" + std::to_string(d_.size()) +
                  " x=" + std::to_string(x_.rows()));
  }
  if (y_.size() < 2) throw IoError("dataset needs at least 2 rows");
  for (Eigen::Index i = 0; i < y_.size(); ++i) {
    if (!is_binary(y_(i))) {
      throw IoError("row " + std::to_string(i + 1) + ": outcome must be 0 or 1, got " +
                    format_double(y_(i)));
    }
    if (!std::isfinite(d_(i))) {
      throw IoError("row " + std::to_string(i + 1) + ": non-finite treatment");
    }
    if (treatment_ == TreatmentKind::kBinary && !is_binary(d_(i))) {
      throw IoError("row " + std::to_string(i + 1) + ": treatment must be 0 or 1, got " +
                    format_double(d_(i)));
    }
    if (!x_.row(i).allFinite()) {
      throw IoError("row " + std::to_string(i + 1) + ": non-finite covariate");
    }
  }
}

Eigen::MatrixXd Dataset::design() const {
  Eigen::MatrixXd w(x_.rows(), x_.cols() + 1);
  w.col(0) = d_;
  w.rightCols(x_.cols()) = x_;
  return w;
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  const auto m = static_cast<Eigen::Index>(rows.size());
  Eigen::VectorXd y(m), d(m);
  Eigen::MatrixXd x(m, x_.cols());
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto i = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(k)]);
    if (i >= y_.size()) throw ConfigError("subset index out of range");
    y(k) = y_(i);
    d(k) = d_(i);
    x.row(k) = x_.row(i);
  }
  return Dataset(std::move(y), std::move(d), std::move(x), treatment_);
}

DataSchema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open schema file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed schema " + path.string() + ": " + e.what());
  }
  DataSchema schema;
  try {
    schema.y = j.value("y", schema.y);
    schema.d = j.value("d", schema.d);
    schema.covariates = j.at("covariates").get<std::vector<std::string>>();
    const std::string kind = j.value("treatment", std::string("binary"));
    if (kind == "binary") {
      schema.treatment = TreatmentKind::kBinary;
    } else if (kind == "continuous") {
      schema.treatment = TreatmentKind::kContinuous;
    } else {
      throw ConfigError("schema treatment must be binary or continuous, got " + kind);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("schema " + path.string() + ": " + e.what());
  }
  return schema;
}

Dataset load_csv(const std::filesystem::path& path, const DataSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty file");

  std::vector<std::string> header;
  for (std::string_view h : split_fields(line)) header.emplace_back(h);
  auto column_of = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw ConfigError(path.string() + ": schema column '" + name + "' not in header");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  if (schema.covariates.empty()) throw ConfigError("schema lists no covariates");
  const std::size_t y_col = column_of(schema.y);
  const std::size_t d_col = column_of(schema.d);
  std::vector<std::size_t> x_cols;
  for (const auto& c : schema.covariates) x_cols.push_back(column_of(c));

  std::vector<double> ys, ds, xs;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw IoError(path.string() + ": row " + std::to_string(row) + " has " +
                    std::to_string(fields.size()) + " fields, header has " +
                    std::to_string(header.size()));
    }
    auto cell = [&](std::size_t col) {
      const std::string_view f = fields[col];
      double v = 0.0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (f.empty() || res.ec != std::errc() || res.ptr != f.data() + f.size()) {
        throw IoError(path.string() + ": row " + std::to_string(row) + ", column '" +
                      header[col] + "': cannot parse '" + std::string(f) +
                      "' as a number");
      }
      return v;
    };
    ys.push_back(cell(y_col));
    ds.push_back(cell(d_col));
    for (std::size_t c : x_cols) xs.push_back(cell(c));
  }

  const auto n = static_cast<Eigen::Index>(ys.size());
  const auto p = static_cast<Eigen::Index>(x_cols.size());
  Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(ys.data(), n);
  Eigen::VectorXd d = Eigen::Map<Eigen::VectorXd>(ds.data(), n);
  Eigen::MatrixXd x =
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          xs.data(), n, p);
  return Dataset(std::move(y), std::move(d), std::move(x), schema.treatment);
}

void write_csv(const std::filesystem::path& path, const Dataset& data,
               const DataSchema& schema) {
  if (schema.covariates.size() != data.p()) {
    throw ConfigError("schema names " + std::to_string(schema.covariates.size()) +
                      " covariates, dataset has " + std::to_string(data.p()));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << schema.y << ',' << schema.d;
  for (const auto& c : schema.covariates) out << ',' << c;
  out << '\n';
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out << format_double(data.y()(r)) << ',' << format_double(data.d()(r));
    for (Eigen::Index j = 0; j < data.x().cols(); ++j) {
      out << ',' << format_double(data.x()(r, j));
    }
    out << '\n';
  }
}

TrimResult trim_by_overlap(const Dataset& data, const Eigen::VectorXd& pscores,
                           double lo, double hi) {
  if (static_cast<std::size_t>(pscores.size()) != data.n()) {
    throw ConfigError("trim: " + std::to_string(pscores.size()) + " scores for " +
                      std::to_string(data.n()) + " rows");
  }
  if (!(lo >= 0.0 && lo < hi && hi <= 1.0)) {
    throw ConfigError("trim bounds must satisfy 0 <= lo < hi <= 1");
  }
  std::vector<std::size_t> kept;
  for (Eigen::Index i = 0; i < pscores.size(); ++i) {
    if (pscores(i) >= lo && pscores(i) <= hi) kept.push_back(static_cast<std::size_t>(i));
  }
  if (kept.empty()) throw NumericError("trim: no rows inside the propensity bounds");
  TrimResult out;
  if (kept.size() >= 2) out.data = data.subset(kept);
  out.kept = std::move(kept);
  return out;
}

SplitPlan make_split(std::size_t n, SplitMode mode, std::uint64_t seed, bool swap_roles) {
  SplitPlan plan;
  plan.mode = mode;
  plan.seed = seed;
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (mode == SplitMode::kFullReuse) {
    plan.pilot_indices = all;
    plan.inference_indices = std::move(all);
    return plan;
  }
  if (n < 4) throw ConfigError("half-split needs n >= 4, got " + std::to_string(n));
  Philox rng = make_stream(seed, 0x5B117ull);
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, i + 1));
    std::swap(all[i], all[j]);
  }
  const std::size_t half = n / 2;
  std::vector<std::size_t> first(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(half));
  std::vector<std::size_t> second(all.begin() + static_cast<std::ptrdiff_t>(half), all.end());
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  if (swap_roles) std::swap(first, second);
  plan.pilot_indices = std::move(first);
  plan.inference_indices = std::move(second);
  return plan;
}

std::string to_string(SplitMode mode) {
  return mode == SplitMode::kFullReuse ? "full-reuse" : "half-split";
}

SplitMode split_mode_from_string(const std::string& s) {
  if (s == "full-reuse") return SplitMode::kFullReuse;
  if (s == "half-split") return SplitMode::kHalfSplit;
  throw ConfigError("split mode must be full-reuse or half-split, got '" + s + "'");
}

}  // namespace drbayes
