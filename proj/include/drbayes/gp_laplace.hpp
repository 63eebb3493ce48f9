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

#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "drbayes/kernel.hpp"

namespace drbayes {

/// Logistic link 1 / (1 + exp(-t)), evaluated without overflow.
double link(double t);

/// log(1 + exp(t)) without overflow.
double softplus(double t);

struct LogLikTerms {
  double value = 0.0;
  Eigen::VectorXd gradient;   // y - link(eta)
  Eigen::VectorXd curvature;  // link(eta) * (1 - link(eta)), positive
};

/// Bernoulli-logistic log-likelihood sum_i y_i eta_i - log(1 + exp(eta_i)).
LogLikTerms log_lik_terms(const Eigen::VectorXd& eta, const Eigen::VectorXd& y);

struct NewtonOptions {
  double tol = 1e-6;
  int max_iter = 100;
};

/// Mode of the latent posterior for a GP binary classifier, with what is
/// needed to predict.
///
/// Newton iterations work with B = I + W^{1/2} K W^{1/2}, W = diag(nabla),
/// so K is never inverted. `alpha` satisfies eta_hat = K alpha, and at the
/// mode alpha equals the likelihood gradient.
struct LaplaceFit {
  Eigen::VectorXd eta_hat;
  Eigen::VectorXd nabla;
  Eigen::VectorXd alpha;
  Eigen::MatrixXd b_chol;  // lower Cholesky factor of B
  GramMatrices gram;
  double log_ml = 0.0;
  double stationarity = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> objective_trace;
};

/// Damped Newton on log p(y|eta) - eta' K^{-1} eta / 2. Non-convergence is
/// reported through `converged`, not thrown. `warm_alpha` seeds eta = K alpha.
LaplaceFit fit_laplace(GramMatrices gram, const Eigen::VectorXd& y,
                       const NewtonOptions& options = {},
                       const Eigen::VectorXd* warm_alpha = nullptr);

/// N(mean, cov) over the evaluation points of the Gram, plus a cached factor.
struct PredictiveGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  Eigen::MatrixXd chol;  // lower factor of cov + jitter * I
  double jitter = 0.0;
};

/// mean = K_cross K^{-1} eta_hat, cov = K_eval - K_cross (K + nabla^{-1})^{-1} K_cross'
/// through the factor of B.
PredictiveGaussian predict(const LaplaceFit& fit, double sampling_jitter = 1e-8);

/// The same two formulas with explicit solves against K and K + nabla^{-1}.
/// Cubic in n with poor conditioning; meant for small problems and checks.
PredictiveGaussian predict_literal(const LaplaceFit& fit, double sampling_jitter = 1e-8);

/// B x m matrix whose row s is mean + L z_s, with z_s drawn from stream
/// (seed, s). Rows do not depend on B or on evaluation order.
Eigen::MatrixXd sample_functions(const PredictiveGaussian& pred, std::size_t draws,
                                 std::uint64_t seed);

/// Mode and log marginal likelihood for diagnostics.
nlohmann::json to_json(const LaplaceFit& fit);

}  // namespace drbayes
