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
#include "drbayes/kernel.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace drbayes;
using drbayes::testing::normal_matrix;
using drbayes::testing::uniform;

namespace {

// gamma for a constant propensity of 0.5: +2 when treated, -2 otherwise.
double half_gamma(const Eigen::Ref<const Eigen::VectorXd>& w) {
  return w(0) / 0.5 - (1.0 - w(0)) / 0.5;
}

KernelSpec random_spec(Philox& rng, Eigen::Index dim, bool corrected) {
  KernelSpec s;
  s.nu2 = std::exp(uniform(rng, std::log(0.05), std::log(20.0)));
  s.inv_lengthscales.resize(dim);
  for (Eigen::Index l = 0; l < dim; ++l) {
    s.inv_lengthscales(l) = std::exp(uniform(rng, std::log(1e-3), std::log(30.0)));
  }
  if (corrected) {
    s.sigma_n = uniform(rng, 0.0, 3.0);
    const double c0 = uniform(rng, -2.0, 2.0);
    s.correction = [c0](const Eigen::Ref<const Eigen::VectorXd>& w) {
      return c0 + w(0) * 3.0 - std::sin(w(w.size() - 1));
    };
  }
  return s;
}

Eigen::MatrixXd binary_points(Philox& rng, Eigen::Index n, Eigen::Index p) {
  Eigen::MatrixXd w(n, p + 1);
  w.rightCols(p) = normal_matrix(n, p, rng);
  for (Eigen::Index i = 0; i < n; ++i) w(i, 0) = uniform_open(rng) < 0.5 ? 1.0 : 0.0;
  return w;
}

}  // namespace

TEST_CASE("se_kernel closed-form examples") {
  KernelSpec s = KernelSpec::isotropic(2, 1.0, 1.0, 1.0);
  const Eigen::Vector2d w(1.0, 0.0), z(0.0, 0.0);
  CHECK(se_kernel(w, w, s) == 1.0);
  CHECK(se_kernel(w, z, s) == doctest::Approx(0.60653065971263342).epsilon(1e-14));
  s.nu2 = 2.5;
  CHECK(se_kernel(z, z, s) == 2.5);

  s.inv_lengthscales(0) = 0.0;
  const Eigen::Vector2d a(1.0, 0.3), b(0.0, 0.3);
  CHECK(se_kernel(a, b, s) == 2.5);
  CHECK_THROWS_AS(se_kernel(Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(1, 2, 3), s), ConfigError);
}

TEST_CASE("corrected_kernel examples with pi = 0.5") {
  KernelSpec s = KernelSpec::isotropic(2, 1.3, 0.7, 0.4);
  const Eigen::Vector2d w1(1.0, 0.2), w0(0.0, -0.5);
  CHECK(corrected_kernel(w1, w0, s) == se_kernel(w1, w0, s));
  s.sigma_n = 1.0;
  s.correction = half_gamma;
  CHECK(corrected_kernel(w1, w0, s) == doctest::Approx(se_kernel(w1, w0, s) - 4.0).epsilon(1e-14));
  CHECK(corrected_kernel(w1, w1, s) == doctest::Approx(1.3 + 4.0).epsilon(1e-14));
  CHECK(corrected_kernel(w1, w0, s) == corrected_kernel(w0, w1, s));
}

TEST_CASE("kernel spec validation") {
  KernelSpec s = KernelSpec::isotropic(2, 1.0, 1.0, 1.0);
  CHECK_NOTHROW(s.validate(2));
  CHECK_THROWS_AS(s.validate(3), ConfigError);
  s.sigma_n = 0.5;
  CHECK_THROWS_AS(s.validate(2), ConfigError);
  s.correction = half_gamma;
  CHECK_NOTHROW(s.validate(2));
  s.nu2 = 0.0;
  CHECK_THROWS_AS(s.validate(2), ConfigError);
  s.nu2 = 1.0;
  s.inv_lengthscales(1) = -1.0;
  CHECK_THROWS_AS(s.validate(2), ConfigError);
}

TEST_CASE("gram shapes and jitter placement") {
  KernelSpec s = KernelSpec::isotropic(2, 2.0, 1.0, 1.0);
  Eigen::MatrixXd w(1, 2);
  w << 1.0, 0.5;
  const Eigen::MatrixXd x = w.rightCols(1);
  const GramMatrices g = gram(s, w, treatment_contrast_points(x));
  CHECK(g.train.rows() == 1);
  CHECK(g.train.cols() == 1);
  CHECK(g.cross.rows() == 2);
  CHECK(g.cross.cols() == 1);
  CHECK(g.eval.rows() == 2);
  CHECK(g.eval.cols() == 2);
  CHECK(g.jitter == doctest::Approx(2e-8));
  CHECK(g.train(0, 0) == 2.0 + g.jitter);
  CHECK(g.cross(0, 0) == 2.0);  // (1, x) coincides with the training point
  CHECK(g.eval(0, 0) == 2.0 + g.jitter);
  CHECK(g.eval(0, 1) == doctest::Approx(2.0 * std::exp(-0.5)));
  const Eigen::MatrixXd e = treatment_contrast_points(x);
  CHECK(e(0, 0) == 1.0);
  CHECK(e(1, 0) == 0.0);
  CHECK(e(1, 1) == 0.5);
}

TEST_CASE("gram matches a double-loop oracle") {
  Philox rng = make_stream(17, 0);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::Index n = 3 + rep;
    const Eigen::Index p = 1 + rep % 4;
    KernelSpec s = random_spec(rng, p + 1, rep % 2 == 0);
    const Eigen::MatrixXd w = binary_points(rng, n, p);
    const Eigen::MatrixXd e = treatment_contrast_points(w.rightCols(p));
    const GramMatrices g = gram(s, w, e, 0.0);
    double worst = 0.0;
    auto oracle = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
      double v = oracle::se(a, b, s.nu2, s.inv_lengthscales);
      if (s.sigma_n > 0.0) v += s.sigma_n * s.sigma_n * s.correction(a) * s.correction(b);
      return v;
    };
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        worst = std::max(worst, std::abs(g.train(i, j) - oracle(w.row(i), w.row(j))));
    for (Eigen::Index i = 0; i < e.rows(); ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        worst = std::max(worst, std::abs(g.cross(i, j) - oracle(e.row(i), w.row(j))));
    for (Eigen::Index i = 0; i < e.rows(); ++i)
      for (Eigen::Index j = 0; j < e.rows(); ++j)
        worst = std::max(worst, std::abs(g.eval(i, j) - oracle(e.row(i), e.row(j))));
    CHECK(worst <= 1e-12);
  }
}

TEST_CASE("corrected gram is a rank-one update") {
  Philox rng = make_stream(19, 0);
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::Index n = 5 + 4 * rep;
    KernelSpec s = random_spec(rng, 3, true);
    s.sigma_n = uniform(rng, 0.1, 2.0);
    const Eigen::MatrixXd w = binary_points(rng, n, 2);
    const GramMatrices gc = gram(s, w, Eigen::MatrixXd(), 0.0);
    const GramMatrices gu = gram(s.uncorrected(), w, Eigen::MatrixXd(), 0.0);
    const Eigen::VectorXd g = correction_values(s, w);
    const Eigen::MatrixXd diff = gc.train - gu.train;
    CHECK((diff - s.sigma_n * s.sigma_n * g * g.transpose()).cwiseAbs().maxCoeff() <= 1e-12);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(diff);
    const Eigen::VectorXd ev = es.eigenvalues();
    const double top = s.sigma_n * s.sigma_n * g.squaredNorm();
    CHECK(std::abs(ev(n - 1) - top) <= 1e-8 * top);
    CHECK(ev.head(n - 1).cwiseAbs().maxCoeff() <= 1e-8 * top);
  }
}

TEST_CASE("jittered gram matrices are positive definite for 500 random specs") {
  Philox rng = make_stream(23, 0);
  int failures = 0;
  for (int rep = 0; rep < 500; ++rep) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(uniform_index(rng, 50));
    const Eigen::Index p = 1 + static_cast<Eigen::Index>(uniform_index(rng, 5));
    const KernelSpec s = random_spec(rng, p + 1, rep % 3 != 0);
    Eigen::MatrixXd w = binary_points(rng, n, p);
    if (n > 3) w.row(n - 1) = w.row(0);  // exact duplicate
    const GramMatrices g = gram(s, w, treatment_contrast_points(w.rightCols(p)));
    const bool symmetric = g.train == g.train.transpose() && g.eval == g.eval.transpose();
    Eigen::LLT<Eigen::MatrixXd> a(g.train);
    Eigen::LLT<Eigen::MatrixXd> b(g.eval);
    if (!symmetric || a.info() != Eigen::Success || b.info() != Eigen::Success) ++failures;
  }
  CHECK(failures == 0);
}

TEST_CASE("sigma_n = 0 removes every trace of the correction") {
  Philox rng = make_stream(29, 0);
  const Eigen::MatrixXd w = binary_points(rng, 12, 2);
  KernelSpec a = KernelSpec::isotropic(3, 1.5, 0.8, 0.6);
  KernelSpec b = a;
  b.correction = [](const Eigen::Ref<const Eigen::VectorXd>&) { return 1e6; };
  const Eigen::MatrixXd e = treatment_contrast_points(w.rightCols(2));
  const GramMatrices ga = gram(a, w, e);
  const GramMatrices gb = gram(b, w, e);
  CHECK(ga.train == gb.train);
  CHECK(ga.cross == gb.cross);
  CHECK(ga.eval == gb.eval);
}

TEST_CASE("non-finite kernel values are numeric errors") {
  KernelSpec s = KernelSpec::isotropic(2, 1.0, 1.0, 1.0);
  s.sigma_n = 1.0;
  s.correction = [](const Eigen::Ref<const Eigen::VectorXd>&) { return std::nan(""); };
  Eigen::MatrixXd w(2, 2);
  w << 1, 0, 0, 1;
  CHECK_THROWS_AS(gram(s, w, Eigen::MatrixXd()), NumericError);
}

TEST_CASE("kernel spec JSON round trip") {
  KernelSpec s = KernelSpec::isotropic(4, 1.7, 0.3, 0.0123456789);
  s.sigma_n = 0.25;
  const KernelSpec back = kernel_spec_from_json(to_json(s));
  CHECK(back.nu2 == s.nu2);
  CHECK(back.inv_lengthscales == s.inv_lengthscales);
  CHECK(back.sigma_n == s.sigma_n);
}

TEST_CASE("rescaling rate formula") {
  const double n = 500.0, s = 2.0, p = 3.0;
  const double expected = std::pow(n, 1.0 / (2 * s + p)) * std::pow(std::log(n), -(1 + p) / (2 * s + p));
  CHECK(rescaling_rate(500, 2.0, 3) == doctest::Approx(expected).epsilon(1e-14));
}

namespace {

struct OneDimProblem {
  Eigen::MatrixXd w;
  Eigen::VectorXd y;
};

OneDimProblem one_dim_problem() {
  Philox rng = make_stream(31, 0);
  OneDimProblem pr;
  const int n = 60;
  pr.w.resize(n, 1);
  pr.y.resize(n);
  for (int i = 0; i < n; ++i) {
    pr.w(i, 0) = uniform(rng, -3.0, 3.0);
    pr.y(i) = uniform_open(rng) < oracle::logistic(2.0 * std::sin(1.5 * pr.w(i, 0))) ? 1.0 : 0.0;
  }
  return pr;
}

}  // namespace

TEST_CASE("evidence gradient matches central differences") {
  const OneDimProblem pr = one_dim_problem();
  Philox rng = make_stream(37, 0);
  Eigen::MatrixXd w(pr.w.rows(), 3);
  w.col(0) = pr.w.col(0);
  w.rightCols(2) = normal_matrix(pr.w.rows(), 2, rng);
  for (int rep = 0; rep < 5; ++rep) {
    KernelSpec s = random_spec(rng, 3, false);
    s.inv_lengthscales = s.inv_lengthscales.cwiseMin(3.0).cwiseMax(0.05);
    const MarginalLikelihood ml = laplace_marginal_likelihood(s, w, pr.y, true);
    auto value_at = [&](int k, double h) {
      KernelSpec t = s;
      if (k == 0) t.nu2 *= std::exp(h);
      else t.inv_lengthscales(k - 1) *= std::exp(h);
      return laplace_marginal_likelihood(t, w, pr.y, false).value;
    };
    for (int k = 0; k < 4; ++k) {
      const double h = 1e-5;
      const double fd = (value_at(k, h) - value_at(k, -h)) / (2 * h);
      CHECK(std::abs(fd - ml.gradient(k)) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("hyperparameter search contract") {
  const OneDimProblem pr = one_dim_problem();
  const KernelSpec init = KernelSpec::isotropic(1, 1.0, 1.0, 1.0);
  HyperOptions one;
  one.budget = 1;
  const HyperResult r1 = optimize_hyperparameters(pr.w, pr.y, init, one);
  CHECK(r1.spec.nu2 == init.nu2);
  CHECK(r1.spec.inv_lengthscales == init.inv_lengthscales);
  CHECK(r1.log_ml == r1.init_log_ml);

  for (HyperSearch m : {HyperSearch::kGradient, HyperSearch::kSimplex}) {
    HyperOptions o;
    o.method = m;
    const HyperResult r = optimize_hyperparameters(pr.w, pr.y, init, o);
    CHECK(r.log_ml >= r.init_log_ml);
    CHECK(r.log_ml == doctest::Approx(laplace_marginal_likelihood(r.spec, pr.w, pr.y, false).value));
  }

  KernelSpec bad = init;
  bad.inv_lengthscales(0) = std::nan("");
  CHECK_THROWS(optimize_hyperparameters(pr.w, pr.y, bad, HyperOptions{}));
}

TEST_CASE("hyperparameter search reaches a 20x20 grid maximum") {
  const OneDimProblem pr = one_dim_problem();
  double grid_best = -1e300;
  for (int i = 0; i < 20; ++i) {
    for (int j = 0; j < 20; ++j) {
      KernelSpec s;
      s.nu2 = std::exp(std::log(1e-2) + i * (std::log(1e2) - std::log(1e-2)) / 19.0);
      s.inv_lengthscales = Eigen::VectorXd::Constant(
          1, std::exp(std::log(1e-2) + j * (std::log(1e2) - std::log(1e-2)) / 19.0));
      grid_best = std::max(grid_best, laplace_marginal_likelihood(s, pr.w, pr.y, false).value);
    }
  }
  for (HyperSearch m : {HyperSearch::kGradient, HyperSearch::kSimplex}) {
    HyperOptions o;
    o.method = m;
    o.budget = m == HyperSearch::kGradient ? 60 : 200;
    const HyperResult r =
        optimize_hyperparameters(pr.w, pr.y, KernelSpec::isotropic(1, 1.0, 1.0, 1.0), o);
    CHECK(r.log_ml >= grid_best - 0.1);
  }
}
