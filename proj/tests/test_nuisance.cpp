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

#include <doctest.h>

#include <cmath>

#include "drbayes/error.hpp"
#include "drbayes/nuisance.hpp"
#include "drbayes/simulation.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace drbayes;
using drbayes::testing::normal_matrix;
using drbayes::testing::toy_dataset;
using drbayes::testing::uniform;

namespace {

PropensityModel constant_pi(double v) {
  return PropensityModel::from_function([v](const Eigen::Ref<const Eigen::VectorXd>&) { return v; });
}

Eigen::VectorXd point(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double e : v) out(i++) = e;
  return out;
}

}  // namespace

TEST_CASE("propensity with constant treatment flags separation") {
  Philox rng = make_stream(71, 0);
  Eigen::MatrixXd x = normal_matrix(200, 2, rng);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(200);
  y(0) = 1.0;
  const Dataset data(y, Eigen::VectorXd::Ones(200), x);
  const PropensityModel pm = fit_propensity(data);
  CHECK(pm.separation());
  const Eigen::VectorXd pi = pm.evaluate_rows(x);
  CHECK(pi.minCoeff() >= 1.0 - kPropensityClip - 1e-12);
  CHECK(pi.maxCoeff() <= 1.0 - kPropensityClip);
}

TEST_CASE("propensity independent of covariates recovers the treated share") {
  Philox rng = make_stream(73, 0);
  const Eigen::Index n = 2000;
  Eigen::MatrixXd x = normal_matrix(n, 3, rng);
  Eigen::VectorXd d(n);
  for (Eigen::Index i = 0; i < n; ++i) d(i) = uniform_open(rng) < 0.3 ? 1.0 : 0.0;
  const Dataset data(Eigen::VectorXd::Zero(n), d, x);
  const PropensityModel pm = fit_propensity(data);
  CHECK_FALSE(pm.separation());
  const Eigen::VectorXd pi = pm.evaluate_rows(x);
  // Noise coefficients spread the extremes, so the band is checked on the bulk.
  const double inside = ((pi.array() - 0.3).abs() <= 0.03).cast<double>().mean();
  CHECK(inside >= 0.95);
  CHECK(std::abs(pi.mean() - 0.3) <= 0.03);

  // In-sample likelihood at least that of the intercept-only model.
  const double share = d.mean();
  double ll = 0.0;
  double ll0 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    ll += d(i) * std::log(pi(i)) + (1 - d(i)) * std::log(1 - pi(i));
    ll0 += d(i) * std::log(share) + (1 - d(i)) * std::log(1 - share);
  }
  CHECK(ll >= ll0 - 1e-9);
}

TEST_CASE("Design I propensity coefficients align with the generating direction") {
  DesignSpec spec;
  spec.n = 5000;
  spec.p = 15;
  spec.seed = 5;
  const Dataset data = generate(spec);
  const PropensityModel pm = fit_propensity(data);
  const Eigen::VectorXd beta = pm.coefficients().tail(15);
  Eigen::VectorXd truth(15);
  for (Eigen::Index j = 0; j < 15; ++j) truth(j) = 1.0 / static_cast<double>(j + 1);
  CHECK(beta.dot(truth) / (beta.norm() * truth.norm()) >= 0.9);
}

TEST_CASE("propensity fit is equivariant to covariate permutation") {
  const Dataset data = toy_dataset(400, 4, 3);
  const std::vector<Eigen::Index> perm{2, 0, 3, 1};
  Eigen::MatrixXd xp(400, 4);
  for (Eigen::Index j = 0; j < 4; ++j) xp.col(j) = data.x().col(perm[static_cast<std::size_t>(j)]);
  const Dataset permuted(data.y(), data.d(), xp);
  const Eigen::VectorXd a = fit_propensity(data).coefficients();
  const Eigen::VectorXd b = fit_propensity(permuted).coefficients();
  CHECK(std::abs(a(0) - b(0)) <= 1e-8);
  for (Eigen::Index j = 0; j < 4; ++j) CHECK(std::abs(b(j + 1) - a(perm[static_cast<std::size_t>(j)] + 1)) <= 1e-8);
}

TEST_CASE("propensity errors") {
  const Dataset small = toy_dataset(4, 3, 1);
  CHECK_THROWS_AS(fit_propensity(small), ConfigError);
  Philox rng = make_stream(79, 0);
  Eigen::VectorXd d(20);
  for (Eigen::Index i = 0; i < 20; ++i) d(i) = uniform(rng, -1.0, 1.0);
  const Dataset cont(Eigen::VectorXd::Zero(20), d, normal_matrix(20, 1, rng), TreatmentKind::kContinuous);
  CHECK_THROWS_AS(fit_propensity(cont), ConfigError);
}

TEST_CASE("GP propensity stays inside the clip range") {
  const Dataset data = toy_dataset(80, 2, 9);
  HyperOptions o;
  o.starts = 1;
  o.budget = 20;
  const PropensityModel pm = fit_propensity(data, PropensityKind::kGaussianProcess, o);
  const Eigen::VectorXd pi = pm.evaluate_rows(data.x());
  CHECK(pi.minCoeff() >= kPropensityClip);
  CHECK(pi.maxCoeff() <= 1.0 - kPropensityClip);
}

TEST_CASE("pilot outcome examples") {
  Philox rng = make_stream(83, 0);
  const Eigen::Index n = 50;
  Eigen::VectorXd d(n);
  for (Eigen::Index i = 0; i < n; ++i) d(i) = i % 2;
  const Eigen::MatrixXd x = normal_matrix(n, 2, rng);
  const KernelSpec spec = KernelSpec::isotropic(3, 1.0, 1.0, 0.7);

  const Dataset ones(Eigen::VectorXd::Ones(n), d, x);
  const OutcomeModel m1 = fit_pilot_outcome(ones, spec);
  CHECK(m1.evaluate_rows(ones.design()).minCoeff() >= 0.5);

  // Each covariate vector appears once per arm, so flipping d and y maps the
  // data onto itself.
  Eigen::MatrixXd xs = x;
  for (Eigen::Index i = 1; i < n; i += 2) xs.row(i) = x.row(i - 1);
  const Dataset sym(d, d, xs);
  const OutcomeModel ms = fit_pilot_outcome(sym, spec);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd w1(3), w0(3);
    w1 << 1.0, xs(i, 0), xs(i, 1);
    w0 << 0.0, xs(i, 0), xs(i, 1);
    worst = std::max(worst, std::abs(ms(w1) - (1.0 - ms(w0))));
  }
  CHECK(worst <= 0.05);

  // Composition with gp_laplace.predict at the training points.
  const Eigen::MatrixXd w = sym.design();
  const LaplaceFit fit = fit_laplace(gram(spec, w, w), sym.y());
  const PredictiveGaussian pred = predict(fit);
  const Eigen::VectorXd m = ms.evaluate_rows(w);
  for (Eigen::Index i = 0; i < n; ++i) CHECK(m(i) == doctest::Approx(link(pred.mean(i))).epsilon(1e-9));
  CHECK((ms.latent_rows(w) - pred.mean).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("ATE representer examples") {
  const Eigen::VectorXd x = point({0.3});
  const RieszRepresenter half = riesz_ate(constant_pi(0.5));
  CHECK(half(1.0, x) == 2.0);
  CHECK(half(0.0, x) == -2.0);
  const RieszRepresenter high = riesz_ate(constant_pi(0.8));
  CHECK(high(1.0, x) == doctest::Approx(1.25).epsilon(1e-15));
  CHECK(high(0.0, x) == doctest::Approx(-5.0).epsilon(1e-14));
  const RieszRepresenter low = riesz_ate(constant_pi(0.2));
  CHECK(low(0.0, x) == doctest::Approx(-1.25).epsilon(1e-15));
  CHECK(low.functional() == Functional::kATE);

  // Inverse identities at unclipped points.
  Philox rng = make_stream(89, 0);
  for (int rep = 0; rep < 50; ++rep) {
    const double v = uniform(rng, 0.01, 0.99);
    const RieszRepresenter r = riesz_ate(constant_pi(v));
    CHECK(r(1.0, x) * v == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(r(0.0, x) * (1.0 - v) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(r(1.0, x) > 0.0);
    CHECK(r(0.0, x) < 0.0);
  }
}

TEST_CASE("MAR representer examples") {
  const Eigen::VectorXd x = point({-1.0, 2.0});
  const RieszRepresenter half = riesz_mar(constant_pi(0.5));
  CHECK(half(1.0, x) == 2.0);
  CHECK(half(0.0, x) == 0.0);
  CHECK(riesz_mar(constant_pi(0.25))(1.0, x) == 4.0);
  Eigen::MatrixXd w(3, 3);
  w << 0, 1, 1, 0, 2, 2, 0, 3, 3;
  CHECK(half.evaluate_rows(w).cwiseAbs().sum() == 0.0);
}

TEST_CASE("APE representer examples") {
  auto same = [](const Eigen::Ref<const Eigen::VectorXd>& x) { return 1.0 + x(0) * x(0); };
  const RieszRepresenter zero = riesz_ape(same, same, [](const Eigen::Ref<const Eigen::VectorXd>&) { return 0.7; });
  CHECK(zero(0.0, point({0.4})) == 0.0);

  Philox rng = make_stream(97, 0);
  const Eigen::Index n = 5000;
  Eigen::MatrixXd x(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) x(i, 0) = uniform_open(rng);
  const Dataset data(Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), x);
  const RieszRepresenter ape = riesz_ape([](const Eigen::Ref<const Eigen::VectorXd>& v) { return 2.0 * v(0); },
                                         [](const Eigen::Ref<const Eigen::VectorXd>&) { return 1.0; }, data);
  CHECK(std::abs(ape(0.0, point({0.5}))) <= 0.1);
  const double tail = ape(0.0, point({60.0}));
  CHECK(std::isfinite(tail));
  CHECK(std::abs(tail) <= 1.0 / kDensityFloor);

  const Dataset wide(Eigen::VectorXd::Zero(20), Eigen::VectorXd::Zero(20), normal_matrix(20, 4, rng));
  CHECK_THROWS_AS(riesz_ape(same, same, wide), ConfigError);
}

TEST_CASE("kernel density matches a direct product-kernel sum") {
  Philox rng = make_stream(101, 0);
  const Eigen::MatrixXd x = normal_matrix(300, 2, rng);
  const KernelDensity kde(x);
  const Eigen::VectorXd h = kde.bandwidths();
  for (Eigen::Index j = 0; j < 2; ++j) {
    const double mean = x.col(j).mean();
    const double sd = std::sqrt((x.col(j).array() - mean).square().sum() / 299.0);
    CHECK(h(j) == doctest::Approx(1.06 * sd * std::pow(300.0, -0.2)).epsilon(0.2));
  }
  const Eigen::Vector2d at(0.1, -0.2);
  double direct = 0.0;
  for (Eigen::Index i = 0; i < 300; ++i) {
    double k = 1.0;
    for (Eigen::Index j = 0; j < 2; ++j) {
      const double u = (at(j) - x(i, j)) / h(j);
      k *= std::exp(-0.5 * u * u) / (std::sqrt(2.0 * M_PI) * h(j));
    }
    direct += k / 300.0;
  }
  CHECK(kde(at) == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("AD representer examples") {
  const RieszRepresenter std_normal = riesz_ad_gaussian(0.0, Eigen::VectorXd::Zero(1), 1.0);
  CHECK(std_normal(1.7, point({3.0})) == -1.7);
  const RieszRepresenter r = riesz_ad_gaussian(0.0, point({1.0}), 0.5);
  CHECK(r(2.0, point({1.0})) == doctest::Approx(-2.0).epsilon(1e-15));

  Philox rng = make_stream(103, 0);
  const Eigen::MatrixXd x = normal_matrix(100, 2, rng);
  const Eigen::VectorXd exact = 0.5 + x.col(0).array() - 2.0 * x.col(1).array();
  const Dataset degenerate(Eigen::VectorXd::Zero(100), exact, x, TreatmentKind::kContinuous);
  CHECK_THROWS_AS(riesz_ad(degenerate), NumericError);

  Eigen::VectorXd noisy = exact;
  for (Eigen::Index i = 0; i < 100; ++i) noisy(i) += 0.3 * standard_normal(rng);
  const Dataset data(Eigen::VectorXd::Zero(100), noisy, x, TreatmentKind::kContinuous);
  RieszRepresenter ad = riesz_ad(data);
  // Least-squares residuals are orthogonal to the intercept, so gamma sums to zero.
  CHECK(std::abs(ad.scan(data.design()).sum()) <= 1e-9);
}

TEST_CASE("scan records the brute-force sup bound") {
  Philox rng = make_stream(107, 0);
  const Dataset data = toy_dataset(300, 3, 11);
  RieszRepresenter r = riesz_ate(fit_propensity(data));
  const Eigen::MatrixXd w = data.design();
  const Eigen::VectorXd g = r.scan(w);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    const double v = r(w.row(i).transpose());
    CHECK(std::isfinite(v));
    CHECK(v == g(i));
    worst = std::max(worst, std::abs(v));
  }
  CHECK(r.sup_bound() == worst);
}

TEST_CASE("sigma rule") {
  CHECK(sigma_rule(4, 100, 200.0) == doctest::Approx(std::sqrt(400.0 * std::log(100.0)) / 200.0).epsilon(1e-15));
  CHECK(sigma_rule(4, 100, 200.0) == doctest::Approx(0.2146).epsilon(1e-3));
  CHECK(sigma_rule(4, 100, 200.0, 0.0) == 0.0);
  CHECK(sigma_rule(4, 100, 200.0, 2.0) == 2.0 * sigma_rule(4, 100, 200.0, 1.0));
  CHECK(sigma_rule(4, 100, 300.0) < sigma_rule(4, 100, 200.0));
  CHECK(sigma_rule(5, 100, 200.0) > sigma_rule(4, 100, 200.0));
  for (std::size_t n = 3; n < 50; ++n) CHECK(sigma_rule(4, n + 1, 200.0) > sigma_rule(4, n, 200.0));
  CHECK_THROWS_AS(sigma_rule(4, 100, 0.0), ConfigError);
  CHECK_THROWS_AS(sigma_rule(4, 1, 1.0), ConfigError);
}

TEST_CASE("functional names round trip") {
  for (Functional f : {Functional::kATE, Functional::kAPE, Functional::kAD, Functional::kMAR}) {
    CHECK(functional_from_string(to_string(f)) == f);
  }
  CHECK_THROWS_AS(functional_from_string("late"), ConfigError);
}
