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
#include <functional>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "drbayes/data.hpp"
#include "drbayes/gp_laplace.hpp"
#include "drbayes/kernel.hpp"

namespace drbayes {

inline constexpr double kPropensityClip = 1e-4;

enum class PropensityKind { kLogistic, kGaussianProcess };

/// Fitted P(D = 1 | X = x), clipped to [1e-4, 1 - 1e-4].
class PropensityModel {
 public:
  /// Logistic model with `coefficients(0)` the intercept.
  static PropensityModel logistic(Eigen::VectorXd coefficients, bool separation);
  /// GP classifier on the covariates; the latent mean is k(x, X) alpha.
  static PropensityModel gaussian_process(KernelSpec spec, Eigen::MatrixXd x_train,
                                          Eigen::VectorXd alpha);
  /// Arbitrary evaluator, clipped like the fitted kinds. Mostly for tests.
  static PropensityModel from_function(std::function<double(const Eigen::Ref<const Eigen::VectorXd>&)> fn,
                                       bool clip = true);

  double operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::VectorXd evaluate_rows(const Eigen::MatrixXd& x) const;

  PropensityKind kind() const { return kind_; }
  const Eigen::VectorXd& coefficients() const { return coefficients_; }
  bool separation() const { return separation_; }

  nlohmann::json to_json() const;

 private:
  PropensityKind kind_ = PropensityKind::kLogistic;
  Eigen::VectorXd coefficients_;
  bool separation_ = false;
  KernelSpec spec_;
  Eigen::MatrixXd x_train_;
  Eigen::VectorXd alpha_;
  std::function<double(const Eigen::Ref<const Eigen::VectorXd>&)> custom_;
  bool clip_ = true;
};

PropensityModel fit_propensity(const Dataset& data,
                               PropensityKind kind = PropensityKind::kLogistic,
                               const HyperOptions& gp_options = {});

/// m_hat(d, x) = link(posterior mean of the latent GP at (d, x)).
class OutcomeModel {
 public:
  OutcomeModel(KernelSpec spec, Eigen::MatrixXd w_train, Eigen::VectorXd alpha);

  double operator()(const Eigen::Ref<const Eigen::VectorXd>& w) const;
  Eigen::VectorXd evaluate_rows(const Eigen::MatrixXd& w) const;
  Eigen::VectorXd latent_rows(const Eigen::MatrixXd& w) const;

  const KernelSpec& spec() const { return spec_; }
  nlohmann::json to_json() const;

 private:
  KernelSpec spec_;
  Eigen::MatrixXd w_train_;
  Eigen::VectorXd alpha_;
};

/// Fits the uncorrected GP classifier on W = [D, X] and keeps its mean.
OutcomeModel fit_pilot_outcome(const Dataset& data, const KernelSpec& spec);
OutcomeModel outcome_from_fit(const KernelSpec& spec, const Eigen::MatrixXd& w_train,
                              const LaplaceFit& fit);

enum class Functional { kATE, kAPE, kAD, kMAR };

std::string to_string(Functional f);
Functional functional_from_string(const std::string& s);

/// Evaluable Riesz representer at w = (d, x).
class RieszRepresenter {
 public:
  RieszRepresenter(Functional functional, PointFunction fn);

  double operator()(const Eigen::Ref<const Eigen::VectorXd>& w) const { return fn_(w); }
  double operator()(double d, const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::VectorXd evaluate_rows(const Eigen::MatrixXd& w) const;

  /// Evaluates on the sample and records max |gamma| in `sup_bound`.
  Eigen::VectorXd scan(const Eigen::MatrixXd& w);

  Functional functional() const { return functional_; }
  double sup_bound() const { return sup_bound_; }
  const PointFunction& function() const { return fn_; }

 private:
  Functional functional_;
  PointFunction fn_;
  double sup_bound_ = 0.0;
};

/// gamma(d, x) = d / pi(x) - (1 - d) / (1 - pi(x)).
RieszRepresenter riesz_ate(const PropensityModel& pm);

/// gamma(d, x) = d / pi(x).
RieszRepresenter riesz_mar(const PropensityModel& pm);

using DensityFunction = std::function<double(const Eigen::Ref<const Eigen::VectorXd>&)>;

/// Product Gaussian kernel density with per-dimension Silverman bandwidths.
class KernelDensity {
 public:
  explicit KernelDensity(const Eigen::MatrixXd& x);
  double operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  const Eigen::VectorXd& bandwidths() const { return bandwidths_; }

 private:
  Eigen::MatrixXd x_;
  Eigen::VectorXd bandwidths_;
};

inline constexpr double kDensityFloor = 1e-3;

/// gamma(x) = (g1(x) - g0(x)) / f_hat(x) with f_hat floored at 1e-3 and
/// |gamma| <= 1e3. The KDE default handles p <= 3.
RieszRepresenter riesz_ape(DensityFunction g1, DensityFunction g0, const Dataset& data);
RieszRepresenter riesz_ape(DensityFunction g1, DensityFunction g0, DensityFunction f_hat);

/// Gaussian location model D | X ~ N(b0 + x'b, s2): gamma = -(d - b0 - x'b) / s2.
RieszRepresenter riesz_ad(const Dataset& data);
RieszRepresenter riesz_ad_gaussian(double intercept, Eigen::VectorXd beta, double s2);

/// sigma_n = c_sigma * sqrt(p n log n) / sum_i |gamma(D_i, X_i)|.
double sigma_rule(std::size_t p, std::size_t n, double gamma_abs_sum, double c_sigma = 1.0);

}  // namespace drbayes
