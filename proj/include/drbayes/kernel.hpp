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
#include <functional>

#include <Eigen/Dense>
#include <json.hpp>

namespace drbayes {

class Dataset;

/// Evaluates a real function at a point w = (d, x_1, ..., x_p).
using PointFunction = std::function<double(const Eigen::Ref<const Eigen::VectorXd>&)>;

/// Squared-exponential hyperparameters plus the optional rank-one correction.
///
///   K((d,x),(d',x')) = nu2 * exp(-sum_l a_l^2 (w_l - w'_l)^2 / 2)
///   K_c = K + sigma_n^2 * gamma(w) * gamma(w')
///
/// `inv_lengthscales(0)` rescales the treatment coordinate.
struct KernelSpec {
  double nu2 = 1.0;
  Eigen::VectorXd inv_lengthscales;
  double sigma_n = 0.0;
  PointFunction correction;

  std::size_t dim() const { return static_cast<std::size_t>(inv_lengthscales.size()); }

  /// Throws ConfigError on broken invariants or a dimension mismatch.
  void validate(std::size_t point_dim) const;

  /// Same hyperparameters with the correction removed.
  KernelSpec uncorrected() const;

  /// Default starting point for `dim` = p + 1 coordinates.
  static KernelSpec isotropic(std::size_t dim, double nu2, double treatment_scale,
                              double covariate_scale);
};

double se_kernel(const Eigen::Ref<const Eigen::VectorXd>& w,
                 const Eigen::Ref<const Eigen::VectorXd>& w2, const KernelSpec& spec);

double corrected_kernel(const Eigen::Ref<const Eigen::VectorXd>& w,
                        const Eigen::Ref<const Eigen::VectorXd>& w2, const KernelSpec& spec);

/// Uncorrected SE cross-covariance between the rows of `a` and the rows of `b`.
Eigen::MatrixXd se_cross(const KernelSpec& spec, const Eigen::MatrixXd& a,
                         const Eigen::MatrixXd& b);

/// Full (corrected) cross-covariance between the rows of `a` and `b`.
Eigen::MatrixXd cross_covariance(const KernelSpec& spec, const Eigen::MatrixXd& a,
                                 const Eigen::MatrixXd& b);

/// Correction function evaluated at every row; zeros when sigma_n == 0.
Eigen::VectorXd correction_values(const KernelSpec& spec, const Eigen::MatrixXd& points);

struct GramMatrices {
  Eigen::MatrixXd train;  // n x n, jittered
  Eigen::MatrixXd cross;  // m x n, evaluation rows against training rows
  Eigen::MatrixXd eval;   // m x m, jittered
  double jitter = 0.0;
};

/// Jitter < 0 selects 1e-8 times the largest prior variance, nu2 +
/// sigma_n^2 max gamma^2. `w_eval` may have zero rows.
GramMatrices gram(const KernelSpec& spec, const Eigen::MatrixXd& w_train,
                  const Eigen::MatrixXd& w_eval, double jitter = -1.0);

/// Stacks (1, X) above (0, X).
Eigen::MatrixXd treatment_contrast_points(const Eigen::MatrixXd& x);

/// Theoretical rescaling a_n ~ n^{1/(2s+p)} (log n)^{-(1+p)/(2s+p)} for a
/// Hoelder smoothness s. Exposed for reference; the marginal likelihood is
/// what selects hyperparameters in practice.
double rescaling_rate(std::size_t n, double smoothness, std::size_t p);

enum class HyperSearch { kGradient, kSimplex };

struct HyperOptions {
  HyperSearch method = HyperSearch::kGradient;
  int starts = 3;
  /// Objective evaluations per start; 1 returns the initial spec unchanged.
  int budget = 60;
  double lower = 1e-3;
  double upper = 1e3;
};

struct HyperResult {
  KernelSpec spec;
  double log_ml = 0.0;
  double init_log_ml = 0.0;
  int evaluations = 0;
};

/// Laplace-approximate log marginal likelihood of the uncorrected model and
/// its gradient with respect to (log nu2, log a_0, ..., log a_p).
struct MarginalLikelihood {
  double value = 0.0;
  Eigen::VectorXd gradient;
  bool converged = false;
};

MarginalLikelihood laplace_marginal_likelihood(const KernelSpec& spec,
                                               const Eigen::MatrixXd& w,
                                               const Eigen::VectorXd& y, bool with_gradient,
                                               Eigen::VectorXd* warm_alpha = nullptr);

/// Maximizes the Laplace marginal likelihood over log nu2 and the log inverse
/// lengthscales. The correction is never optimized.
HyperResult optimize_hyperparameters(const Eigen::MatrixXd& w, const Eigen::VectorXd& y,
                                     const KernelSpec& init, const HyperOptions& options = {});

HyperResult optimize_hyperparameters(const Dataset& data, const KernelSpec& init,
                                     const HyperOptions& options = {});

nlohmann::json to_json(const KernelSpec& spec);
/// The correction function is not serializable; it comes back empty.
KernelSpec kernel_spec_from_json(const nlohmann::json& j);

}  // namespace drbayes
