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

#include "drbayes/frequentist.hpp"

#include <cmath>

#include "drbayes/error.hpp"

namespace drbayes {

namespace {

void check(const Dataset& data, double alpha, Functional functional) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (functional != Functional::kATE && functional != Functional::kMAR) {
    throw ConfigError("frequentist comparators support ate and mar only");
  }
  if (data.treatment() != TreatmentKind::kBinary) {
    throw ConfigError("frequentist comparators need a binary treatment");
  }
}

// Contrast m(1,x) - m(0,x) for ATE, m(1,x) for MAR, per row.
Eigen::VectorXd contrasts(const Dataset& data, const OutcomeFunction& m_hat,
                          Functional functional) {
  const Eigen::MatrixXd& x = data.x();
  Eigen::VectorXd w(x.cols() + 1);
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    w.tail(x.cols()) = x.row(i).transpose();
    w(0) = 1.0;
    out(i) = m_hat(w);
    if (functional == Functional::kATE) {
      w(0) = 0.0;
      out(i) -= m_hat(w);
    }
  }
  return out;
}

FrequentistEstimate wald(const Eigen::VectorXd& terms, double alpha, FrequentistMethod method) {
  const double n = static_cast<double>(terms.size());
  FrequentistEstimate e;
  e.method = method;
  e.alpha = alpha;
  e.estimate = terms.mean();
  e.se = std::sqrt((terms.array() - e.estimate).square().sum() / n) / std::sqrt(n);
  const double half = normal_quantile(1.0 - alpha / 2.0) * e.se;
  e.ci_lower = e.estimate - half;
  e.ci_upper = e.estimate + half;
  return e;
}

}  // namespace

std::string to_string(FrequentistMethod m) {
  return m == FrequentistMethod::kAIPW ? "aipw" : "plug-in";
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("normal_quantile: p must lie in (0, 1)");
  // Acklam's rational approximation, polished by two Halley steps.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  for (int it = 0; it < 2; ++it) {
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

FrequentistEstimate aipw(const Dataset& data, const OutcomeFunction& m_hat,
                         const RieszRepresenter& gamma_hat, double alpha, Functional functional) {
  check(data, alpha, functional);
  Eigen::VectorXd terms = contrasts(data, m_hat, functional);
  const Eigen::MatrixXd w = data.design();
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    const Eigen::VectorXd wi = w.row(i).transpose();
    terms(i) += gamma_hat(wi) * (data.y()(i) - m_hat(wi));
  }
  return wald(terms, alpha, FrequentistMethod::kAIPW);
}

FrequentistEstimate plug_in(const Dataset& data, const OutcomeFunction& m_hat, double alpha,
                            Functional functional) {
  check(data, alpha, functional);
  return wald(contrasts(data, m_hat, functional), alpha, FrequentistMethod::kPlugIn);
}

nlohmann::json to_json(const FrequentistEstimate& e) {
  return {{"method", to_string(e.method)}, {"point", e.estimate},    {"se", e.se},
          {"lower", e.ci_lower},           {"upper", e.ci_upper},    {"alpha", e.alpha},
          {"length", e.length()}};
}

}  // namespace drbayes
