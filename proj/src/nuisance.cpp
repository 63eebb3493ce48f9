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

#include "drbayes/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "drbayes/error.hpp"

namespace drbayes {

namespace {

double clip_probability(double p) {
  return std::clamp(p, kPropensityClip, 1.0 - kPropensityClip);
}

std::vector<double> to_vector(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

// Coefficient norm beyond which the fit is treated as separated.
constexpr double kSeparationBound = 25.0;

PropensityModel fit_logistic(const Dataset& data) {
  const Eigen::Index n = static_cast<Eigen::Index>(data.n());
  const Eigen::Index p = static_cast<Eigen::Index>(data.p());
  if (n <= p + 1) {
    throw ConfigError("logistic propensity needs n > p + 1 (n=" + std::to_string(n) +
                      ", p=" + std::to_string(p) + ")");
  }
  Eigen::MatrixXd z(n, p + 1);
  z.col(0).setOnes();
  z.rightCols(p) = data.x();
  const Eigen::VectorXd& d = data.d();

  auto loglik = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = z * beta;
    double v = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) v += d(i) * eta(i) - softplus(eta(i));
    return v;
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p + 1);
  double current = loglik(beta);
  bool separation = false;
  for (int iter = 0; iter < 100; ++iter) {
    const Eigen::VectorXd eta = z * beta;
    Eigen::VectorXd grad_w(n), curv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double pi = link(eta(i));
      grad_w(i) = d(i) - pi;
      curv(i) = std::max(pi * (1.0 - pi), 1e-12);
    }
    const Eigen::VectorXd grad = z.transpose() * grad_w;
    const Eigen::MatrixXd info = z.transpose() * curv.asDiagonal() * z;
    const Eigen::VectorXd step = info.ldlt().solve(grad);
    if (!step.allFinite()) {
      separation = true;
      break;
    }
    double t = 1.0;
    Eigen::VectorXd next = beta + step;
    double value = loglik(next);
    while (!(value >= current) && t > 1e-8) {
      t *= 0.5;
      next = beta + t * step;
      value = loglik(next);
    }
    if (!(value >= current)) break;
    const double gain = value - current;
    beta = next;
    current = value;
    if (beta.norm() > kSeparationBound) {
      separation = true;
      break;
    }
    if (grad.lpNorm<Eigen::Infinity>() < 1e-9 || gain < 1e-12) break;
  }
  return PropensityModel::logistic(std::move(beta), separation);
}

}  // namespace

PropensityModel PropensityModel::logistic(Eigen::VectorXd coefficients, bool separation) {
  PropensityModel m;
  m.kind_ = PropensityKind::kLogistic;
  m.coefficients_ = std::move(coefficients);
  m.separation_ = separation;
  return m;
}

PropensityModel PropensityModel::gaussian_process(KernelSpec spec, Eigen::MatrixXd x_train,
                                                  Eigen::VectorXd alpha) {
  PropensityModel m;
  m.kind_ = PropensityKind::kGaussianProcess;
  m.spec_ = std::move(spec);
  m.x_train_ = std::move(x_train);
  m.alpha_ = std::move(alpha);
  return m;
}

PropensityModel PropensityModel::from_function(
    std::function<double(const Eigen::Ref<const Eigen::VectorXd>&)> fn, bool clip) {
  PropensityModel m;
  m.custom_ = std::move(fn);
  m.clip_ = clip;
  return m;
}

double PropensityModel::operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  double p = 0.0;
  if (custom_) {
    p = custom_(x);
  } else if (kind_ == PropensityKind::kLogistic) {
    p = link(coefficients_(0) + coefficients_.tail(coefficients_.size() - 1).dot(x));
  } else {
    const Eigen::MatrixXd row = x.transpose();
    p = link((se_cross(spec_, row, x_train_) * alpha_)(0));
  }
  return clip_ ? clip_probability(p) : p;
}

Eigen::VectorXd PropensityModel::evaluate_rows(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd out(x.rows());
  if (!custom_ && kind_ == PropensityKind::kGaussianProcess) {
    const Eigen::VectorXd latent = se_cross(spec_, x, x_train_) * alpha_;
    for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = clip_probability(link(latent(i)));
    return out;
  }
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::VectorXd row = x.row(i).transpose();
    out(i) = (*this)(row);
  }
  return out;
}

nlohmann::json PropensityModel::to_json() const {
  if (custom_) return {{"kind", "custom"}};
  if (kind_ == PropensityKind::kLogistic) {
    return {{"kind", "logistic-regression"},
            {"coefficients", to_vector(coefficients_)},
            {"separation", separation_}};
  }
  return {{"kind", "gp-classifier"}, {"kernel", drbayes::to_json(spec_)}, {"alpha", to_vector(alpha_)}};
}

PropensityModel fit_propensity(const Dataset& data, PropensityKind kind,
                               const HyperOptions& gp_options) {
  if (data.treatment() != TreatmentKind::kBinary) {
    throw ConfigError("propensity model needs a binary treatment");
  }
  if (kind == PropensityKind::kLogistic) return fit_logistic(data);

  const double scale = 1.0 / std::sqrt(static_cast<double>(data.p()));
  const KernelSpec spec =
      optimize_hyperparameters(data.x(), data.d(),
                               KernelSpec::isotropic(data.p(), 1.0, scale, scale), gp_options)
          .spec;
  const LaplaceFit fit = fit_laplace(gram(spec, data.x(), Eigen::MatrixXd()), data.d());
  return PropensityModel::gaussian_process(spec, data.x(), fit.alpha);
}

OutcomeModel::OutcomeModel(KernelSpec spec, Eigen::MatrixXd w_train, Eigen::VectorXd alpha)
    : spec_(std::move(spec)), w_train_(std::move(w_train)), alpha_(std::move(alpha)) {}

Eigen::VectorXd OutcomeModel::latent_rows(const Eigen::MatrixXd& w) const {
  return cross_covariance(spec_, w, w_train_) * alpha_;
}

Eigen::VectorXd OutcomeModel::evaluate_rows(const Eigen::MatrixXd& w) const {
  return latent_rows(w).unaryExpr([](double t) { return link(t); });
}

double OutcomeModel::operator()(const Eigen::Ref<const Eigen::VectorXd>& w) const {
  const Eigen::MatrixXd row = w.transpose();
  return evaluate_rows(row)(0);
}

nlohmann::json OutcomeModel::to_json() const {
  return {{"kind", "gp-posterior-mean"},
          {"kernel", drbayes::to_json(spec_)},
          {"alpha", to_vector(alpha_)}};
}

OutcomeModel fit_pilot_outcome(const Dataset& data, const KernelSpec& spec) {
  const KernelSpec base = spec.uncorrected();
  const Eigen::MatrixXd w = data.design();
  const LaplaceFit fit = fit_laplace(gram(base, w, Eigen::MatrixXd()), data.y());
  return OutcomeModel(base, w, fit.alpha);
}

OutcomeModel outcome_from_fit(const KernelSpec& spec, const Eigen::MatrixXd& w_train,
                              const LaplaceFit& fit) {
  return OutcomeModel(spec, w_train, fit.alpha);
}

std::string to_string(Functional f) {
  switch (f) {
    case Functional::kATE: return "ate";
    case Functional::kAPE: return "ape";
    case Functional::kAD: return "ad";
    case Functional::kMAR: return "mar";
  }
  return "?";
}

Functional functional_from_string(const std::string& s) {
  if (s == "ate") return Functional::kATE;
  if (s == "ape") return Functional::kAPE;
  if (s == "ad") return Functional::kAD;
  if (s == "mar") return Functional::kMAR;
  throw ConfigError("functional must be one of ate, ape, ad, mar; got '" + s + "'");
}

RieszRepresenter::RieszRepresenter(Functional functional, PointFunction fn)
    : functional_(functional), fn_(std::move(fn)) {}

double RieszRepresenter::operator()(double d, const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::VectorXd w(x.size() + 1);
  w(0) = d;
  w.tail(x.size()) = x;
  return fn_(w);
}

Eigen::VectorXd RieszRepresenter::evaluate_rows(const Eigen::MatrixXd& w) const {
  Eigen::VectorXd out(w.rows());
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    const Eigen::VectorXd row = w.row(i).transpose();
    out(i) = fn_(row);
  }
  return out;
}

Eigen::VectorXd RieszRepresenter::scan(const Eigen::MatrixXd& w) {
  Eigen::VectorXd values = evaluate_rows(w);
  if (!values.allFinite()) throw NumericError("Riesz representer is not finite on the sample");
  sup_bound_ = values.size() > 0 ? values.cwiseAbs().maxCoeff() : 0.0;
  return values;
}

RieszRepresenter riesz_ate(const PropensityModel& pm) {
  return RieszRepresenter(Functional::kATE, [pm](const Eigen::Ref<const Eigen::VectorXd>& w) {
    const double pi = pm(w.tail(w.size() - 1));
    const double d = w(0);
    return d / pi - (1.0 - d) / (1.0 - pi);
  });
}

RieszRepresenter riesz_mar(const PropensityModel& pm) {
  return RieszRepresenter(Functional::kMAR, [pm](const Eigen::Ref<const Eigen::VectorXd>& w) {
    const double d = w(0);
    if (d == 0.0) return 0.0;
    return d / pm(w.tail(w.size() - 1));
  });
}

KernelDensity::KernelDensity(const Eigen::MatrixXd& x) : x_(x) {
  const auto n = static_cast<double>(x.rows());
  const auto p = static_cast<double>(x.cols());
  if (x.rows() < 2) throw ConfigError("density estimate needs at least 2 points");
  const double factor = std::pow(4.0 / ((p + 2.0) * n), 1.0 / (p + 4.0));
  bandwidths_.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double mean = x.col(j).mean();
    const double sd = std::sqrt((x.col(j).array() - mean).square().sum() / (n - 1.0));
    if (!(sd > 0.0)) throw NumericError("density estimate: covariate " + std::to_string(j) +
                                        " is constant");
    bandwidths_(j) = sd * factor;
  }
}

double KernelDensity::operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  double total = 0.0;
  for (Eigen::Index i = 0; i < x_.rows(); ++i) {
    double prod = 1.0;
    for (Eigen::Index j = 0; j < x_.cols(); ++j) {
      const double u = (x(j) - x_(i, j)) / bandwidths_(j);
      prod *= norm * std::exp(-0.5 * u * u) / bandwidths_(j);
    }
    total += prod;
  }
  return total / static_cast<double>(x_.rows());
}

RieszRepresenter riesz_ape(DensityFunction g1, DensityFunction g0, DensityFunction f_hat) {
  return RieszRepresenter(Functional::kAPE, [g1 = std::move(g1), g0 = std::move(g0),
                                             f_hat = std::move(f_hat)](
                                                const Eigen::Ref<const Eigen::VectorXd>& w) {
    const auto x = w.tail(w.size() - 1);
    const double f = std::max(f_hat(x), kDensityFloor);
    const double limit = 1.0 / kDensityFloor;
    return std::clamp((g1(x) - g0(x)) / f, -limit, limit);
  });
}

RieszRepresenter riesz_ape(DensityFunction g1, DensityFunction g0, const Dataset& data) {
  if (data.p() > 3) {
    throw ConfigError("built-in density estimate supports p <= 3 (p=" + std::to_string(data.p()) +
                      "); supply a covariate density instead");
  }
  auto kde = std::make_shared<KernelDensity>(data.x());
  return riesz_ape(std::move(g1), std::move(g0),
                   [kde](const Eigen::Ref<const Eigen::VectorXd>& x) { return (*kde)(x); });
}

RieszRepresenter riesz_ad_gaussian(double intercept, Eigen::VectorXd beta, double s2) {
  if (!(s2 >= 1e-8)) {
    throw NumericError("treatment residual variance " + std::to_string(s2) +
                       " is below 1e-8; the conditional density is degenerate");
  }
  return RieszRepresenter(Functional::kAD, [intercept, beta = std::move(beta),
                                            s2](const Eigen::Ref<const Eigen::VectorXd>& w) {
    const double center = intercept + beta.dot(w.tail(w.size() - 1));
    return -(w(0) - center) / s2;
  });
}

RieszRepresenter riesz_ad(const Dataset& data) {
  const Eigen::Index n = static_cast<Eigen::Index>(data.n());
  const Eigen::Index p = static_cast<Eigen::Index>(data.p());
  if (n <= p + 1) throw ConfigError("average-derivative representer needs n > p + 1");
  Eigen::MatrixXd z(n, p + 1);
  z.col(0).setOnes();
  z.rightCols(p) = data.x();
  const Eigen::VectorXd coef = z.colPivHouseholderQr().solve(data.d());
  const Eigen::VectorXd resid = data.d() - z * coef;
  const double s2 = resid.squaredNorm() / static_cast<double>(n - p - 1);
  return riesz_ad_gaussian(coef(0), coef.tail(p), s2);
}

double sigma_rule(std::size_t p, std::size_t n, double gamma_abs_sum, double c_sigma) {
  if (n < 2) throw ConfigError("sigma rule needs n >= 2");
  if (!(gamma_abs_sum > 0.0)) throw ConfigError("sigma rule needs a positive sum of |gamma|");
  if (!(c_sigma >= 0.0)) throw ConfigError("c_sigma must be >= 0");
  const double nn = static_cast<double>(n);
  return c_sigma * std::sqrt(static_cast<double>(p) * nn * std::log(nn)) / gamma_abs_sum;
}

}  // namespace drbayes
