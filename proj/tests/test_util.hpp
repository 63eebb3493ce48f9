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
#include <fstream>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "drbayes/data.hpp"
#include "drbayes/rng.hpp"

namespace drbayes::testing {

/// Scratch directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("drbayes_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, Philox& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = standard_normal(rng);
  return m;
}

inline double uniform(Philox& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_open(rng);
}

/// Binary treatment and outcome with logistic dependence on the first covariate.
inline Dataset toy_dataset(std::size_t n, std::size_t p, std::uint64_t seed) {
  Philox rng = make_stream(seed, 0x7E57DA7A);
  Eigen::MatrixXd x = normal_matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p), rng);
  Eigen::VectorXd d(x.rows()), y(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double pd = 1.0 / (1.0 + std::exp(-0.5 * x(i, 0)));
    d(i) = uniform_open(rng) < pd ? 1.0 : 0.0;
    const double py = 1.0 / (1.0 + std::exp(-(-0.5 + d(i) + 0.5 * x(i, 0))));
    y(i) = uniform_open(rng) < py ? 1.0 : 0.0;
  }
  return Dataset(y, d, x);
}

}  // namespace drbayes::testing
