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
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "drbayes/data.hpp"
#include "drbayes/procedure.hpp"

namespace drbayes {

enum class Design { kI, kII };

std::string to_string(Design d);
Design design_from_string(const std::string& s);

struct DesignSpec {
  Design design = Design::kI;
  std::size_t n = 250;
  std::size_t p = 15;
  std::uint64_t seed = 1;
  /// Sets tau to zero; used for null-effect checks.
  bool zero_effect = false;

  void validate() const;
};

/// Propensity index g(x) = sum_j x_j / j.
double design_propensity_index(const Eigen::Ref<const Eigen::VectorXd>& x);
double design_mu(Design d, const Eigen::Ref<const Eigen::VectorXd>& x);
double design_tau(Design d, const Eigen::Ref<const Eigen::VectorXd>& x);
/// True outcome regression m0(d, x) = Psi(mu(x) + d tau(x)).
double design_outcome(const DesignSpec& spec, double d, const Eigen::Ref<const Eigen::VectorXd>& x);

Dataset generate(const DesignSpec& spec);

struct TruthEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t points = 0;
};

/// Monte Carlo value of E[Psi(mu(X) + tau(X)) - Psi(mu(X))] over standard
/// normal X. With `antithetic`, points come in (X, -X) pairs.
TruthEstimate true_ate(const DesignSpec& spec, std::size_t mc_points, std::uint64_t seed = 20260101,
                       bool antithetic = true);

/// true_ate at 10^6 antithetic points, computed once per (design, p, zero_effect).
double cached_true_ate(const DesignSpec& spec);

enum class Method { kUncorrected, kPriorCorrected, kDoublyRobust, kAIPW, kPlugIn };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct MCConfig {
  ProcedureConfig procedure;
  std::vector<Method> methods = {Method::kUncorrected, Method::kPriorCorrected,
                                 Method::kDoublyRobust};
  std::size_t replications = 200;
  /// Replications run concurrently; draws inside a replication stay serial.
  int workers = 1;
  /// Fraction of failed replications tolerated before the run is flagged.
  double failure_budget = 0.05;
};

struct MCRow {
  Method method = Method::kDoublyRobust;
  std::string label;
  Design design = Design::kI;
  std::size_t n = 0;
  std::size_t p = 0;
  double c_sigma = 1.0;
  SplitMode split = SplitMode::kFullReuse;
  double truth = 0.0;
  double bias = 0.0;
  double cp = 0.0;
  double cp_se = 0.0;
  double cil = 0.0;
  std::size_t replications = 0;
  std::size_t successes = 0;
  std::size_t failures = 0;
};

struct ReplicationRecord {
  std::size_t index = 0;
  bool failed = false;
  std::string error;
  /// One entry per method in MCConfig::methods.
  std::vector<double> estimates;
  std::vector<double> lower;
  std::vector<double> upper;
};

struct MCReport {
  std::vector<MCRow> rows;
  std::vector<ReplicationRecord> records;
  bool budget_exceeded = false;

  std::string to_csv() const;
  std::string to_table() const;
};

/// Aggregates per-replication records into rows; order of records is irrelevant.
std::vector<MCRow> aggregate(const std::vector<ReplicationRecord>& records,
                             const std::vector<Method>& methods, double truth);

MCReport run_mc(const DesignSpec& spec, const MCConfig& config);

/// Concatenates reports, e.g. across a c_sigma sweep.
MCReport merge(const std::vector<MCReport>& reports);

}  // namespace drbayes
