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

#include <stdexcept>
#include <string>

namespace drbayes {

/// Base of all library errors. The category selects the CLI exit code.
class Error : public std::runtime_error {
 public:
  enum class Category { kConfig = 2, kIo = 3, kNumeric = 4, kBudget = 5 };

  Error(Category category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

 private:
  Category category_;
};

/// Invalid parameters, schema mismatches, unsupported options.
struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(Category::kConfig, what) {}
};

/// Unreadable files, malformed cells, invariant violations in input data.
struct IoError : Error {
  explicit IoError(const std::string& what) : Error(Category::kIo, what) {}
};

/// Factorization failures, non-finite values, degenerate samples.
struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(Category::kNumeric, what) {}
};

/// Too many failed Laplace fits or Monte Carlo replications.
struct BudgetError : Error {
  explicit BudgetError(const std::string& what) : Error(Category::kBudget, what) {}
};

}  // namespace drbayes
