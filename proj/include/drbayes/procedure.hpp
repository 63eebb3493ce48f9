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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "drbayes/data.hpp"
#include "drbayes/kernel.hpp"
#include "drbayes/nuisance.hpp"
#include "drbayes/rng.hpp"

namespace drbayes {

enum class Variant { kUncorrected, kPriorCorrected, kDoublyRobust };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

/// Posterior draws of a functional. For the doubly robust variant
/// values[s] = plug_in[s] - recenterings[s]; otherwise recenterings are zero.
struct FunctionalDraws {
  Eigen::VectorXd plug_in;
  Eigen::VectorXd recenterings;
  Eigen::VectorXd values;
  Variant variant = Variant::kDoublyRobust;
  std::uint64_t seed = 0;
  std::size_t draws() const { return static_cast<std::size_t>(values.size()); }
};

struct CredibleSummary {
  double point = 0.0;  // posterior mean
  double median = 0.0;
  double lower = 0.0;  // alpha/2 quantile
  double upper = 0.0;  // 1 - alpha/2 quantile
  double alpha = 0.05;
  double length() const { return upper - lower; }
  bool covers(double value) const { return lower <= value && value <= upper; }
};

/// Dirichlet(1, ..., 1) weights as normalized Exp(1) draws.
Eigen::VectorXd bootstrap_weights(std::size_t n, Philox& rng);

/// Weights for posterior draw `draw`, from a stream keyed by (seed, draw).
Eigen::VectorXd bootstrap_weights(std::size_t n, std::uint64_t seed, std::uint64_t draw);

using OutcomeFunction = std::function<double(const Eigen::Ref<const Eigen::VectorXd>&)>;

/// sum_i M_i (m_s(1, X_i) - m_s(0, X_i)).
double plug_in_draw(const OutcomeFunction& m_s, const Eigen::VectorXd& weights,
                    const Eigen::MatrixXd& x);

/// (1/n) sum_i [Delta(1, X_i) - Delta(0, X_i) - gamma(D_i, X_i) Delta(D_i, X_i)]
/// with Delta = m_s - m_hat. The outcome cancels from the difference.
double recentering_term(const OutcomeFunction& m_s, const OutcomeFunction& m_hat,
                        const RieszRepresenter& gamma, const Dataset& data);

/// Linear-interpolation quantiles (order statistic (B-1)a, interpolated).
double quantile(std::vector<double> sorted_or_not, double a);

CredibleSummary summarize(const Eigen::VectorXd& values, double alpha);
CredibleSummary summarize(const FunctionalDraws& draws, double alpha);

struct ProcedureConfig {
  Functional functional = Functional::kATE;
  Variant variant = Variant::kDoublyRobust;
  std::size_t draws = 1000;
  double alpha = 0.05;
  double c_sigma = 1.0;
  SplitMode split = SplitMode::kFullReuse;
  bool swap_split_roles = false;
  std::uint64_t seed = 1;
  PropensityKind propensity = PropensityKind::kLogistic;
  HyperOptions hyper;
  /// Fixed hyperparameters; skips the marginal-likelihood search when set.
  std::optional<KernelSpec> kernel;
  int workers = 1;

  /// Policy densities for the APE functional.
  DensityFunction policy_g1;
  DensityFunction policy_g0;
  /// Replaces the built-in covariate KDE for the APE representer.
  DensityFunction covariate_density;
  /// Optional quadrature for the APE integral: points (rows of x) and weights
  /// approximating integral h d(G1 - G0) ~ sum_k w_k h(z_k).
  Eigen::MatrixXd quadrature_points;
  Eigen::VectorXd quadrature_weights;
};

struct Diagnostics {
  KernelSpec kernel;
  double sigma_n = 0.0;
  double gamma_abs_sum = 0.0;
  double gamma_sup = 0.0;
  double pilot_log_ml = 0.0;
  double corrected_log_ml = 0.0;
  bool pilot_converged = false;
  bool corrected_converged = false;
  int nonconverged_fits = 0;
  int laplace_fits = 0;
  int hyper_evaluations = 0;
  std::size_t n_pilot = 0;
  std::size_t n_inference = 0;
  nlohmann::json propensity;
};

/// All three variants from one pass; they share function-draw and
/// bootstrap-weight streams, so with c_sigma = 0 the uncorrected and
/// prior-corrected draws coincide exactly.
struct ProcedureOutput {
  FunctionalDraws uncorrected;
  FunctionalDraws prior_corrected;
  FunctionalDraws doubly_robust;
  Diagnostics diagnostics;
  std::vector<std::size_t> inference_indices;
  std::optional<OutcomeModel> pilot_outcome;
  std::optional<RieszRepresenter> riesz;

  const FunctionalDraws& draws(Variant v) const;
};

ProcedureOutput run_all_variants(const Dataset& data, const ProcedureConfig& config);

struct ProcedureResult {
  FunctionalDraws draws;
  CredibleSummary summary;
  Diagnostics diagnostics;
};

/// Pilot fits, sigma rule, corrected GP posterior, bootstrap-weighted draws,
/// recentering, and the credible interval for `config.variant`.
ProcedureResult run_procedure(const Dataset& data, const ProcedureConfig& config);

/// Columns s, plug_in, recentering, value.
void write_draws_csv(const std::filesystem::path& path, const FunctionalDraws& draws);
FunctionalDraws read_draws_csv(const std::filesystem::path& path);

nlohmann::json to_json(const CredibleSummary& s);
nlohmann::json to_json(const Diagnostics& d);

}  // namespace drbayes
