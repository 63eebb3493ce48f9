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
#include "drbayes/frequentist.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace drbayes;
using drbayes::testing::normal_matrix;
using drbayes::testing::toy_dataset;
using drbayes::testing::uniform;

namespace {

OutcomeFunction table(double m1, double m0) {
  return [m1, m0](const Eigen::Ref<const Eigen::VectorXd>& w) { return w(0) == 1.0 ? m1 : m0; };
}

PropensityModel smooth_pi() {
  return PropensityModel::from_function(
      [](const Eigen::Ref<const Eigen::VectorXd>& x) { return 0.2 + 0.6 * link(x(0)); });
}

OutcomeFunction smooth_m() {
  return [](const Eigen::Ref<const Eigen::VectorXd>& w) { return link(0.7 * w(0) - 0.4 * w(1)); };
}

}  // namespace

TEST_CASE("normal quantile") {
  CHECK(normal_quantile(0.5) == 0.0);
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
  CHECK(normal_quantile(0.025) == doctest::Approx(-1.959963984540054).epsilon(1e-14));
  CHECK(normal_quantile(1e-10) == doctest::Approx(-6.361340902404056).epsilon(1e-12));
  for (double p : {0.001, 0.1, 0.3, 0.77, 0.999}) {
    CHECK(0.5 * std::erfc(-normal_quantile(p) / std::sqrt(2.0)) == doctest::Approx(p).epsilon(1e-13));
  }
}

TEST_CASE("AIPW hand example") {
  Eigen::MatrixXd x(2, 1);
  x << 0.0, 0.0;
  const Dataset data(Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(1.0, 0.0), x);
  const RieszRepresenter g = riesz_ate(PropensityModel::from_function(
      [](const Eigen::Ref<const Eigen::VectorXd>&) { return 0.5; }));
  const FrequentistEstimate e = aipw(data, table(0.6, 0.4), g);
  CHECK(e.estimate == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(e.method == FrequentistMethod::kAIPW);
}

TEST_CASE("AIPW special cases") {
  const Dataset data = toy_dataset(40, 2, 31);
  const OutcomeFunction m = smooth_m();
  const RieszRepresenter zero(Functional::kATE, [](const Eigen::Ref<const Eigen::VectorXd>&) { return 0.0; });
  CHECK(aipw(data, m, zero).estimate == doctest::Approx(plug_in(data, m).estimate).epsilon(1e-14));

  const RieszRepresenter g = riesz_ate(smooth_pi());
  const OutcomeFunction none = [](const Eigen::Ref<const Eigen::VectorXd>&) { return 0.0; };
  const Eigen::MatrixXd w = data.design();
  double direct = 0.0;
  for (Eigen::Index i = 0; i < w.rows(); ++i) direct += g(w.row(i).transpose()) * data.y()(i);
  CHECK(aipw(data, none, g).estimate == doctest::Approx(direct / 40.0).epsilon(1e-14));

  // Residual-free outcomes: Y = D and m_hat(d, x) = d.
  const Dataset exact(data.d(), data.d(), data.x());
  const OutcomeFunction ident = [](const Eigen::Ref<const Eigen::VectorXd>& v) { return v(0); };
  CHECK(aipw(exact, ident, g).estimate == plug_in(exact, ident).estimate);
}

TEST_CASE("AIPW matches brute-force summation on small instances") {
  Philox rng = make_stream(37, 1);
  const PropensityModel pm = smooth_pi();
  const RieszRepresenter g = riesz_ate(pm);
  const OutcomeFunction m = smooth_m();
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 2 + static_cast<std::size_t>(uniform_index(rng, 5));
    const Eigen::MatrixXd x = normal_matrix(static_cast<Eigen::Index>(n), 2, rng);
    std::vector<double> y(n), d(n), m1(n), m0(n), pi(n);
    Eigen::VectorXd yv(static_cast<Eigen::Index>(n)), dv(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      d[i] = uniform_open(rng) < 0.5 ? 1.0 : 0.0;
      y[i] = uniform_open(rng) < 0.5 ? 1.0 : 0.0;
      yv(ii) = y[i];
      dv(ii) = d[i];
      Eigen::Vector3d w1(1.0, x(ii, 0), x(ii, 1));
      Eigen::Vector3d w0(0.0, x(ii, 0), x(ii, 1));
      m1[i] = m(w1);
      m0[i] = m(w0);
      pi[i] = 0.2 + 0.6 * oracle::logistic(x(ii, 0));
    }
    const Dataset data(yv, dv, x);
    worst = std::max(worst, std::abs(aipw(data, m, g).estimate - oracle::aipw_sum(y, d, m1, m0, pi)));
  }
  CHECK(worst <= 1e-14);
}

TEST_CASE("AIPW interval and duplication scaling") {
  const Dataset data = toy_dataset(100, 2, 32);
  const RieszRepresenter g = riesz_ate(smooth_pi());
  const FrequentistEstimate e = aipw(data, smooth_m(), g, 0.1);
  CHECK(e.se > 0.0);
  CHECK(e.ci_lower <= e.estimate);
  CHECK(e.estimate <= e.ci_upper);
  CHECK(e.length() == doctest::Approx(2.0 * normal_quantile(0.95) * e.se).epsilon(1e-12));

  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t i = 0; i < 100; ++i) rows.push_back(i);
  const FrequentistEstimate twice = aipw(data.subset(rows), smooth_m(), g, 0.1);
  CHECK(twice.estimate == doctest::Approx(e.estimate).epsilon(1e-13));
  CHECK(std::abs(twice.se * std::sqrt(2.0) - e.se) <= 1e-12);
}

TEST_CASE("AIPW for the mean outcome under missingness") {
  const Dataset data = toy_dataset(50, 2, 33);
  const PropensityModel pm = smooth_pi();
  const RieszRepresenter g = riesz_mar(pm);
  const OutcomeFunction m = smooth_m();
  const Eigen::MatrixXd w = data.design();
  double direct = 0.0;
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    Eigen::Vector3d w1 = w.row(i).transpose();
    w1(0) = 1.0;
    const double d = w(i, 0);
    direct += m(w1) + d / pm(data.x().row(i).transpose()) * (data.y()(i) - m(w.row(i).transpose()));
  }
  CHECK(aipw(data, m, g, 0.05, Functional::kMAR).estimate == doctest::Approx(direct / 50.0).epsilon(1e-13));
  CHECK_THROWS_AS(aipw(data, m, g, 0.05, Functional::kAD), ConfigError);
}

TEST_CASE("plug-in examples") {
  const Dataset data = toy_dataset(30, 2, 34);
  const FrequentistEstimate c = plug_in(data, table(0.75, 0.5));
  CHECK(c.estimate == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(c.se == 0.0);
  CHECK(c.ci_lower == c.ci_upper);
  CHECK(c.method == FrequentistMethod::kPlugIn);

  Eigen::MatrixXd x(3, 1);
  x << 1.0, 2.0, 3.0;
  const Dataset three(Eigen::Vector3d(0, 1, 0), Eigen::Vector3d(1, 0, 1), x);
  const OutcomeFunction m = [](const Eigen::Ref<const Eigen::VectorXd>& w) {
    return w(0) == 1.0 ? 0.5 + 0.1 * w(1) : 0.5;
  };
  CHECK(plug_in(three, m).estimate == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("estimates serialize") {
  const Dataset data = toy_dataset(30, 2, 35);
  const nlohmann::json j = to_json(plug_in(data, table(0.75, 0.5)));
  CHECK(j.at("method") == "plug-in");
  CHECK(j.at("point").get<double>() == doctest::Approx(0.25));
  CHECK(to_string(FrequentistMethod::kAIPW) == "aipw");
}
