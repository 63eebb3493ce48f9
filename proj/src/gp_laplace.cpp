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

#include "drbayes/gp_laplace.hpp"

#include <algorithm>
#include <cmath>

#include "drbayes/error.hpp"
#include "drbayes/rng.hpp"

namespace drbayes {

namespace {

constexpr std::uint64_t kFunctionDrawDomain = 0xF1;

Eigen::LLT<Eigen::MatrixXd> factor_b(const Eigen::MatrixXd& k, const Eigen::VectorXd& sqrt_w) {
  const auto n = k.rows();
  Eigen::MatrixXd b = (sqrt_w * sqrt_w.transpose()).cwiseProduct(k);
  b.diagonal().array() += 1.0;
  Eigen::LLT<Eigen::MatrixXd> llt(b);
  if (llt.info() != Eigen::Success) {
    throw NumericError("Laplace: Cholesky of I + W^1/2 K W^1/2 failed (n=" +
                       std::to_string(n) + ")");
  }
  return llt;
}

Eigen::MatrixXd factor_with_jitter(const Eigen::MatrixXd& cov, double base, double* used) {
  const double scale = std::max(1.0, cov.diagonal().cwiseAbs().maxCoeff());
  double jitter = base * scale;
  for (int attempt = 0; attempt < 7; ++attempt, jitter *= 10.0) {
    Eigen::MatrixXd a = cov;
    a.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) {
      *used = jitter;
      return llt.matrixL();
    }
  }
  throw NumericError("predictive covariance is not positive definite after jitter");
}

}  // namespace

double link(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double softplus(double t) {
  if (t > 0.0) return t + std::log1p(std::exp(-t));
  return std::log1p(std::exp(t));
}

LogLikTerms log_lik_terms(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  if (eta.size() != y.size()) throw ConfigError("log_lik_terms: length mismatch");
  LogLikTerms out;
  out.gradient.resize(eta.size());
  out.curvature.resize(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double p = link(eta(i));
    out.value += y(i) * eta(i) - softplus(eta(i));
    out.gradient(i) = y(i) - p;
    out.curvature(i) = p * (1.0 - p);
  }
  return out;
}

LaplaceFit fit_laplace(GramMatrices gram, const Eigen::VectorXd& y,
                       const NewtonOptions& options, const Eigen::VectorXd* warm_alpha) {
  const Eigen::Index n = y.size();
  if (gram.train.rows() != n || gram.train.cols() != n) {
    throw ConfigError("fit_laplace: Gram is " + std::to_string(gram.train.rows()) + "x" +
                      std::to_string(gram.train.cols()) + " for " + std::to_string(n) +
                      " outcomes");
  }
  const Eigen::MatrixXd& k = gram.train;

  auto objective = [&](const Eigen::VectorXd& alpha, const Eigen::VectorXd& f) {
    return -0.5 * alpha.dot(f) + log_lik_terms(f, y).value;
  };

  LaplaceFit fit;
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
  if (warm_alpha != nullptr && warm_alpha->size() == n) {
    Eigen::VectorXd f_warm = k * (*warm_alpha);
    const double warm_obj = objective(*warm_alpha, f_warm);
    if (std::isfinite(warm_obj) && warm_obj > objective(alpha, f)) {
      alpha = *warm_alpha;
      f = std::move(f_warm);
    }
  }

  LogLikTerms terms = log_lik_terms(f, y);
  double obj = -0.5 * alpha.dot(f) + terms.value;
  int iter = 0;
  for (;;) {
    fit.objective_trace.push_back(obj);
    fit.stationarity = (terms.gradient - alpha).cwiseAbs().maxCoeff();
    if (fit.stationarity <= options.tol) {
      fit.converged = true;
      break;
    }
    if (iter >= options.max_iter) break;

    const Eigen::VectorXd sqrt_w = terms.curvature.cwiseSqrt();
    const auto llt = factor_b(k, sqrt_w);
    const Eigen::VectorXd b = terms.curvature.cwiseProduct(f) + terms.gradient;
    const Eigen::VectorXd c = llt.matrixL().solve(sqrt_w.cwiseProduct(k * b));
    const Eigen::VectorXd alpha_new = b - sqrt_w.cwiseProduct(llt.matrixU().solve(c));
    const Eigen::VectorXd f_new = k * alpha_new;

    // Step halving keeps the objective nondecreasing.
    bool accepted = false;
    for (double t = 1.0; t > 1e-10; t *= 0.5) {
      Eigen::VectorXd alpha_t = alpha + t * (alpha_new - alpha);
      Eigen::VectorXd f_t = f + t * (f_new - f);
      LogLikTerms terms_t = log_lik_terms(f_t, y);
      const double obj_t = -0.5 * alpha_t.dot(f_t) + terms_t.value;
      if (std::isfinite(obj_t) && obj_t >= obj) {
        alpha = std::move(alpha_t);
        f = std::move(f_t);
        terms = std::move(terms_t);
        obj = obj_t;
        accepted = true;
        break;
      }
    }
    ++iter;
    if (!accepted) {
      fit.stationarity = (terms.gradient - alpha).cwiseAbs().maxCoeff();
      fit.converged = fit.stationarity <= options.tol;
      break;
    }
  }

  const Eigen::VectorXd sqrt_w = terms.curvature.cwiseSqrt();
  const auto llt = factor_b(k, sqrt_w);
  const Eigen::MatrixXd l = llt.matrixL();
  fit.log_ml = obj - l.diagonal().array().log().sum();
  fit.eta_hat = std::move(f);
  fit.nabla = terms.curvature;
  fit.alpha = std::move(alpha);
  fit.b_chol = l;
  fit.iterations = iter;
  fit.gram = std::move(gram);
  return fit;
}

PredictiveGaussian predict(const LaplaceFit& fit, double sampling_jitter) {
  const auto& g = fit.gram;
  if (g.cross.cols() != fit.eta_hat.size()) {
    throw ConfigError("predict: fit has no evaluation points");
  }
  PredictiveGaussian pred;
  pred.mean = g.cross * fit.alpha;
  const Eigen::VectorXd sqrt_w = fit.nabla.cwiseSqrt();
  Eigen::MatrixXd v = sqrt_w.asDiagonal() * g.cross.transpose();
  fit.b_chol.triangularView<Eigen::Lower>().solveInPlace(v);
  pred.cov = g.eval;
  pred.cov.noalias() -= v.transpose() * v;
  pred.cov = 0.5 * (pred.cov + pred.cov.transpose()).eval();
  pred.chol = factor_with_jitter(pred.cov, sampling_jitter, &pred.jitter);
  return pred;
}

PredictiveGaussian predict_literal(const LaplaceFit& fit, double sampling_jitter) {
  const auto& g = fit.gram;
  if (g.cross.cols() != fit.eta_hat.size()) {
    throw ConfigError("predict_literal: fit has no evaluation points");
  }
  Eigen::LLT<Eigen::MatrixXd> k_llt(g.train);
  if (k_llt.info() != Eigen::Success) throw NumericError("K_train is not positive definite");
  Eigen::MatrixXd shifted = g.train;
  shifted.diagonal() += fit.nabla.cwiseInverse();
  Eigen::LLT<Eigen::MatrixXd> s_llt(shifted);
  if (s_llt.info() != Eigen::Success) throw NumericError("K + nabla^-1 is not positive definite");

  PredictiveGaussian pred;
  pred.mean = g.cross * k_llt.solve(fit.eta_hat);
  pred.cov = g.eval - g.cross * s_llt.solve(g.cross.transpose());
  pred.cov = 0.5 * (pred.cov + pred.cov.transpose()).eval();
  pred.chol = factor_with_jitter(pred.cov, sampling_jitter, &pred.jitter);
  return pred;
}

Eigen::MatrixXd sample_functions(const PredictiveGaussian& pred, std::size_t draws,
                                 std::uint64_t seed) {
  if (draws == 0) throw ConfigError("sample_functions: need at least one draw");
  const Eigen::Index m = pred.mean.size();
  const auto b = static_cast<Eigen::Index>(draws);
  Eigen::MatrixXd z(m, b);
  for (Eigen::Index s = 0; s < b; ++s) {
    Philox rng = make_stream(seed, static_cast<std::uint64_t>(s), kFunctionDrawDomain);
    for (Eigen::Index i = 0; i < m; ++i) z(i, s) = standard_normal(rng);
  }
  Eigen::MatrixXd out(b, m);
  out.noalias() = (pred.chol.triangularView<Eigen::Lower>() * z).transpose();
  out.rowwise() += pred.mean.transpose();
  return out;
}

nlohmann::json to_json(const LaplaceFit& fit) {
  return {
      {"eta_hat", std::vector<double>(fit.eta_hat.data(), fit.eta_hat.data() + fit.eta_hat.size())},
      {"log_ml", fit.log_ml},
      {"converged", fit.converged},
      {"iterations", fit.iterations},
      {"stationarity", fit.stationarity},
  };
}

}  // namespace drbayes
