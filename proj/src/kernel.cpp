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

#include "drbayes/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

#include "drbayes/data.hpp"
#include "drbayes/error.hpp"
#include "drbayes/gp_laplace.hpp"

namespace drbayes {

void KernelSpec::validate(std::size_t point_dim) const {
  if (!(nu2 > 0.0) || !std::isfinite(nu2)) throw ConfigError("kernel variance must be > 0");
  if (dim() != point_dim) {
    throw ConfigError("kernel has " + std::to_string(dim()) + " inverse lengthscales, points have " +
                      std::to_string(point_dim) + " coordinates");
  }
  if (!inv_lengthscales.allFinite() || (inv_lengthscales.array() < 0.0).any()) {
    throw ConfigError("inverse lengthscales must be finite and >= 0");
  }
  if (!(sigma_n >= 0.0) || !std::isfinite(sigma_n)) throw ConfigError("sigma_n must be >= 0");
  if (sigma_n > 0.0 && !correction) throw ConfigError("sigma_n > 0 requires a correction function");
}

KernelSpec KernelSpec::uncorrected() const {
  KernelSpec out = *this;
  out.sigma_n = 0.0;
  out.correction = nullptr;
  return out;
}

KernelSpec KernelSpec::isotropic(std::size_t dim, double nu2, double treatment_scale,
                                 double covariate_scale) {
  KernelSpec spec;
  spec.nu2 = nu2;
  spec.inv_lengthscales = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dim), covariate_scale);
  if (dim > 0) spec.inv_lengthscales(0) = treatment_scale;
  return spec;
}

double se_kernel(const Eigen::Ref<const Eigen::VectorXd>& w,
                 const Eigen::Ref<const Eigen::VectorXd>& w2, const KernelSpec& spec) {
  if (w.size() != w2.size() || static_cast<std::size_t>(w.size()) != spec.dim()) {
    throw ConfigError("se_kernel: dimension mismatch");
  }
  double q = 0.0;
  for (Eigen::Index l = 0; l < w.size(); ++l) {
    const double diff = w(l) - w2(l);
    const double a = spec.inv_lengthscales(l);
    q += diff * diff * a * a;
  }
  return spec.nu2 * std::exp(-0.5 * q);
}

double corrected_kernel(const Eigen::Ref<const Eigen::VectorXd>& w,
                        const Eigen::Ref<const Eigen::VectorXd>& w2, const KernelSpec& spec) {
  const double base = se_kernel(w, w2, spec);
  if (spec.sigma_n == 0.0) return base;
  return base + spec.sigma_n * spec.sigma_n * spec.correction(w) * spec.correction(w2);
}

Eigen::MatrixXd se_cross(const KernelSpec& spec, const Eigen::MatrixXd& a,
                         const Eigen::MatrixXd& b) {
  const auto dim = static_cast<Eigen::Index>(spec.dim());
  if (a.cols() != dim || b.cols() != dim) throw ConfigError("se_cross: dimension mismatch");
  // Columns are scaled points, so each inner loop runs over contiguous memory.
  const Eigen::MatrixXd ua = (a * spec.inv_lengthscales.asDiagonal()).transpose();
  const Eigen::MatrixXd ub = (b * spec.inv_lengthscales.asDiagonal()).transpose();
  Eigen::MatrixXd out(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    const double* vj = ub.col(j).data();
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double* ui = ua.col(i).data();
      double q = 0.0;
      for (Eigen::Index l = 0; l < dim; ++l) {
        const double diff = ui[l] - vj[l];
        q += diff * diff;
      }
      out(i, j) = spec.nu2 * std::exp(-0.5 * q);
    }
  }
  return out;
}

Eigen::VectorXd correction_values(const KernelSpec& spec, const Eigen::MatrixXd& points) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(points.rows());
  if (spec.sigma_n == 0.0 || !spec.correction) return g;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const Eigen::VectorXd w = points.row(i).transpose();
    g(i) = spec.correction(w);
  }
  return g;
}

Eigen::MatrixXd cross_covariance(const KernelSpec& spec, const Eigen::MatrixXd& a,
                                 const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out = se_cross(spec, a, b);
  if (spec.sigma_n > 0.0) {
    out.noalias() += spec.sigma_n * spec.sigma_n * correction_values(spec, a) *
                     correction_values(spec, b).transpose();
  }
  return out;
}

GramMatrices gram(const KernelSpec& spec, const Eigen::MatrixXd& w_train,
                  const Eigen::MatrixXd& w_eval, double jitter) {
  spec.validate(static_cast<std::size_t>(w_train.cols()));
  if (w_eval.rows() > 0 && w_eval.cols() != w_train.cols()) {
    throw ConfigError("gram: evaluation points have the wrong dimension");
  }
  GramMatrices g;
  const double s2 = spec.sigma_n * spec.sigma_n;
  const Eigen::VectorXd gt = correction_values(spec, w_train);
  const Eigen::VectorXd ge = correction_values(spec, w_eval);

  // Default jitter scales with the largest prior variance, which is nu2 unless
  // the rank-one term dominates.
  const double diag_scale =
      spec.nu2 + s2 * std::max(gt.size() > 0 ? gt.cwiseAbs2().maxCoeff() : 0.0,
                               ge.size() > 0 ? ge.cwiseAbs2().maxCoeff() : 0.0);
  g.jitter = jitter < 0.0 ? 1e-8 * diag_scale : jitter;

  g.train = se_cross(spec, w_train, w_train);
  if (s2 > 0.0) g.train.noalias() += s2 * gt * gt.transpose();
  g.train = 0.5 * (g.train + g.train.transpose()).eval();
  g.train.diagonal().array() += g.jitter;

  if (w_eval.rows() > 0) {
    g.cross = se_cross(spec, w_eval, w_train);
    g.eval = se_cross(spec, w_eval, w_eval);
    if (s2 > 0.0) {
      g.cross.noalias() += s2 * ge * gt.transpose();
      g.eval.noalias() += s2 * ge * ge.transpose();
    }
    g.eval = 0.5 * (g.eval + g.eval.transpose()).eval();
    g.eval.diagonal().array() += g.jitter;
  } else {
    g.cross.resize(0, w_train.rows());
    g.eval.resize(0, 0);
  }
  if (!g.train.allFinite() || !g.cross.allFinite() || !g.eval.allFinite()) {
    throw NumericError("gram: non-finite kernel value");
  }
  return g;
}

Eigen::MatrixXd treatment_contrast_points(const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd w(2 * n, x.cols() + 1);
  w.topLeftCorner(n, 1).setOnes();
  w.bottomLeftCorner(n, 1).setZero();
  w.topRightCorner(n, x.cols()) = x;
  w.bottomRightCorner(n, x.cols()) = x;
  return w;
}

double rescaling_rate(std::size_t n, double smoothness, std::size_t p) {
  if (n < 2 || !(smoothness > 0.0)) throw ConfigError("rescaling_rate: need n >= 2 and s > 0");
  const double nn = static_cast<double>(n);
  const double denom = 2.0 * smoothness + static_cast<double>(p);
  return std::pow(nn, 1.0 / denom) * std::pow(std::log(nn), -(1.0 + static_cast<double>(p)) / denom);
}

MarginalLikelihood laplace_marginal_likelihood(const KernelSpec& spec, const Eigen::MatrixXd& w,
                                               const Eigen::VectorXd& y, bool with_gradient,
                                               Eigen::VectorXd* warm_alpha) {
  const KernelSpec base = spec.uncorrected();
  LaplaceFit fit = fit_laplace(gram(base, w, Eigen::MatrixXd()), y, {}, warm_alpha);
  if (warm_alpha != nullptr) *warm_alpha = fit.alpha;

  MarginalLikelihood out;
  out.value = fit.log_ml;
  out.converged = fit.converged;
  if (!with_gradient) return out;

  // Implicit-mode gradient of the Laplace evidence for the logistic likelihood.
  const Eigen::MatrixXd& k = fit.gram.train;
  const Eigen::Index n = y.size();
  const Eigen::VectorXd sqrt_w = fit.nabla.cwiseSqrt();
  const auto l = fit.b_chol.triangularView<Eigen::Lower>();

  Eigen::MatrixXd m = sqrt_w.asDiagonal() * Eigen::MatrixXd::Identity(n, n);
  l.solveInPlace(m);
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(n, n);  // (K + W^{-1})^{-1}
  r.selfadjointView<Eigen::Lower>().rankUpdate(m.transpose());
  r.triangularView<Eigen::StrictlyUpper>() = r.transpose();
  Eigen::MatrixXd c = sqrt_w.asDiagonal() * k;
  l.solveInPlace(c);

  Eigen::VectorXd third(n);
  Eigen::VectorXd grad_lik(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = link(fit.eta_hat(i));
    third(i) = -p * (1.0 - p) * (1.0 - 2.0 * p);
    grad_lik(i) = y(i) - p;
  }
  const Eigen::VectorXd s2 =
      0.5 * (k.diagonal() - c.colwise().squaredNorm().transpose()).cwiseProduct(third);

  // Every derivative matrix has the form dK = K o E, so each gradient entry is
  // sum_ij E_ij Q_ij with Q_ij = K_ij (a_i a_j / 2 - R_ij / 2 + v_i g_j) and
  // v = s2 - R K s2 folding in the implicit-mode term.
  const Eigen::VectorXd v = s2 - r * (k * s2);
  Eigen::MatrixXd q = 0.5 * fit.alpha * fit.alpha.transpose() - 0.5 * r + v * grad_lik.transpose();
  const auto dim = static_cast<Eigen::Index>(base.dim());
  out.gradient.resize(dim + 1);
  out.gradient(0) = k.cwiseProduct(q).sum();

  // Lengthscales: E_ij = -a_l^2 (w_il - w_jl)^2 on the jitter-free kernel.
  Eigen::MatrixXd k_plain = k;
  k_plain.diagonal().array() -= fit.gram.jitter;
  q = q.cwiseProduct(k_plain);
  q = 0.5 * (q + q.transpose()).eval();
  const Eigen::VectorXd row_sums = q.rowwise().sum();
  const Eigen::MatrixXd qw = q * w;
  for (Eigen::Index l2 = 0; l2 < dim; ++l2) {
    const double a2 = base.inv_lengthscales(l2) * base.inv_lengthscales(l2);
    const double quad = 2.0 * w.col(l2).cwiseAbs2().dot(row_sums) - 2.0 * w.col(l2).dot(qw.col(l2));
    out.gradient(l2 + 1) = -a2 * quad;
  }
  return out;
}

namespace {

// Optimization runs over theta = (log nu2, log a_0, ..., log a_p).
Eigen::VectorXd to_theta(const KernelSpec& spec) {
  Eigen::VectorXd theta(static_cast<Eigen::Index>(spec.dim()) + 1);
  theta(0) = std::log(spec.nu2);
  theta.tail(static_cast<Eigen::Index>(spec.dim())) = spec.inv_lengthscales.array().log();
  return theta;
}

KernelSpec from_theta(const Eigen::VectorXd& theta, const KernelSpec& like) {
  KernelSpec spec = like.uncorrected();
  spec.nu2 = std::exp(theta(0));
  spec.inv_lengthscales = theta.tail(theta.size() - 1).array().exp();
  return spec;
}

class Objective {
 public:
  Objective(const Eigen::MatrixXd& w, const Eigen::VectorXd& y, const KernelSpec& like)
      : w_(w), y_(y), like_(like) {}

  // Negative log evidence; +inf when the evaluation breaks down.
  double operator()(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) {
    ++evaluations;
    try {
      const auto ml = laplace_marginal_likelihood(from_theta(theta, like_), w_, y_,
                                                  grad != nullptr, &warm_);
      if (!std::isfinite(ml.value)) return kInf;
      if (grad != nullptr) {
        if (!ml.gradient.allFinite()) return kInf;
        *grad = -ml.gradient;
      }
      return -ml.value;
    } catch (const NumericError&) {
      warm_.resize(0);
      return kInf;
    }
  }

  void reset_warm_start() { warm_.resize(0); }

  int evaluations = 0;
  static constexpr double kInf = std::numeric_limits<double>::infinity();

 private:
  const Eigen::MatrixXd& w_;
  const Eigen::VectorXd& y_;
  const KernelSpec& like_;
  Eigen::VectorXd warm_;
};

Eigen::VectorXd clamp(Eigen::VectorXd x, double lo, double hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

struct Best {
  Eigen::VectorXd theta;
  double value = std::numeric_limits<double>::infinity();
  void offer(const Eigen::VectorXd& t, double v) {
    if (v < value) {
      value = v;
      theta = t;
    }
  }
};

// Projected L-BFGS with backtracking on the box [lo, hi]^k.
void run_lbfgs(Objective& obj, Eigen::VectorXd x, int budget, double lo, double hi, Best& best) {
  constexpr int kMemory = 7;
  constexpr double kMaxStep = 2.0;
  const int stop_at = obj.evaluations + budget;

  Eigen::VectorXd g;
  double fx = obj(x, &g);
  best.offer(x, fx);
  if (!std::isfinite(fx)) return;

  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> memory;
  while (obj.evaluations < stop_at) {
    // Free variables: not pinned to a bound by the gradient.
    Eigen::VectorXd pg = g;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if ((x(i) <= lo && g(i) > 0.0) || (x(i) >= hi && g(i) < 0.0)) pg(i) = 0.0;
    }
    if (pg.lpNorm<Eigen::Infinity>() < 1e-4) break;

    Eigen::VectorXd q = pg;
    std::vector<double> alphas(memory.size());
    for (std::size_t k = memory.size(); k-- > 0;) {
      const auto& [s, yv] = memory[k];
      alphas[k] = s.dot(q) / yv.dot(s);
      q -= alphas[k] * yv;
    }
    if (!memory.empty()) {
      const auto& [s, yv] = memory.back();
      q *= s.dot(yv) / yv.squaredNorm();
    }
    for (std::size_t k = 0; k < memory.size(); ++k) {
      const auto& [s, yv] = memory[k];
      const double beta = yv.dot(q) / yv.dot(s);
      q += (alphas[k] - beta) * s;
    }
    Eigen::VectorXd dir = -q;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (pg(i) == 0.0) dir(i) = 0.0;
    }
    if (dir.dot(pg) >= 0.0) {
      memory.clear();
      dir = -pg;
    }
    const double dmax = dir.lpNorm<Eigen::Infinity>();
    if (dmax > kMaxStep) dir *= kMaxStep / dmax;

    bool moved = false;
    double t = memory.empty() ? std::min(1.0, 1.0 / std::max(dmax, 1e-12)) : 1.0;
    for (; obj.evaluations < stop_at && t > 1e-8; t *= 0.5) {
      const Eigen::VectorXd xt = clamp(x + t * dir, lo, hi);
      Eigen::VectorXd gt;
      const double ft = obj(xt, &gt);
      best.offer(xt, ft);
      if (std::isfinite(ft) && ft <= fx + 1e-4 * g.dot(xt - x)) {
        const Eigen::VectorXd s = xt - x;
        const Eigen::VectorXd yv = gt - g;
        if (s.dot(yv) > 1e-10) {
          memory.emplace_back(s, yv);
          if (memory.size() > kMemory) memory.pop_front();
        }
        const double decrease = fx - ft;
        x = xt;
        g = gt;
        fx = ft;
        moved = true;
        if (decrease < 1e-7 * (1.0 + std::abs(fx))) return;
        break;
      }
    }
    if (!moved) return;
  }
}

void run_simplex(Objective& obj, const Eigen::VectorXd& x0, int budget, double lo, double hi,
                 Best& best) {
  const Eigen::Index k = x0.size();
  const int stop_at = obj.evaluations + budget;
  std::vector<Eigen::VectorXd> pts{x0};
  std::vector<double> vals{obj(x0, nullptr)};
  best.offer(pts[0], vals[0]);
  for (Eigen::Index i = 0; i < k && obj.evaluations < stop_at; ++i) {
    Eigen::VectorXd p = x0;
    p(i) += (p(i) + 0.5 <= hi) ? 0.5 : -0.5;
    pts.push_back(p);
    vals.push_back(obj(p, nullptr));
    best.offer(p, vals.back());
  }
  if (static_cast<Eigen::Index>(pts.size()) < k + 1) return;

  std::vector<std::size_t> order(pts.size());
  while (obj.evaluations < stop_at) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
    const std::size_t ib = order.front(), iw = order.back(), isw = order[order.size() - 2];
    if (std::abs(vals[iw] - vals[ib]) < 1e-9 * (1.0 + std::abs(vals[ib]))) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(k);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i != iw) centroid += pts[i];
    }
    centroid /= static_cast<double>(k);

    auto eval = [&](const Eigen::VectorXd& p) {
      const double v = obj(p, nullptr);
      best.offer(p, v);
      return v;
    };
    const Eigen::VectorXd xr = clamp(centroid + (centroid - pts[iw]), lo, hi);
    const double fr = eval(xr);
    if (fr < vals[ib]) {
      const Eigen::VectorXd xe = clamp(centroid + 2.0 * (centroid - pts[iw]), lo, hi);
      const double fe = obj.evaluations < stop_at ? eval(xe) : Objective::kInf;
      if (fe < fr) {
        pts[iw] = xe;
        vals[iw] = fe;
      } else {
        pts[iw] = xr;
        vals[iw] = fr;
      }
      continue;
    }
    if (fr < vals[isw]) {
      pts[iw] = xr;
      vals[iw] = fr;
      continue;
    }
    const bool outside = fr < vals[iw];
    const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                                       : Eigen::VectorXd(centroid + 0.5 * (pts[iw] - centroid));
    if (obj.evaluations >= stop_at) break;
    const double fc = eval(xc);
    if (fc < (outside ? fr : vals[iw])) {
      pts[iw] = xc;
      vals[iw] = fc;
      continue;
    }
    for (std::size_t i = 0; i < pts.size() && obj.evaluations < stop_at; ++i) {
      if (i == ib) continue;
      pts[i] = pts[ib] + 0.5 * (pts[i] - pts[ib]);
      vals[i] = eval(pts[i]);
    }
  }
}

}  // namespace

HyperResult optimize_hyperparameters(const Eigen::MatrixXd& w, const Eigen::VectorXd& y,
                                     const KernelSpec& init, const HyperOptions& options) {
  if (options.budget < 1 || options.starts < 1) {
    throw ConfigError("hyperparameter search needs budget >= 1 and starts >= 1");
  }
  const KernelSpec base = init.uncorrected();
  base.validate(static_cast<std::size_t>(w.cols()));
  const double lo = std::log(options.lower);
  const double hi = std::log(options.upper);

  Objective obj(w, y, base);
  const Eigen::VectorXd theta0 = to_theta(base);
  const double f0 = obj(theta0, nullptr);
  if (!std::isfinite(f0)) {
    throw NumericError("hyperparameter search: non-finite objective at the initial point");
  }
  HyperResult result;
  result.init_log_ml = -f0;
  Best best;
  best.offer(theta0, f0);

  if (options.budget > 1) {
    // Start k shifts the lengthscales and variance in opposite directions.
    static constexpr double kShifts[] = {0.0, -0.7, 0.7, -1.4, 1.4};
    for (int s = 0; s < options.starts; ++s) {
      const double shift = kShifts[s % 5] * (1 + s / 5);
      Eigen::VectorXd start = theta0;
      start(0) -= shift;
      start.tail(start.size() - 1).array() += shift;
      start = clamp(start, lo, hi);
      obj.reset_warm_start();
      if (options.method == HyperSearch::kGradient) {
        run_lbfgs(obj, start, options.budget, lo, hi, best);
      } else {
        run_simplex(obj, start, options.budget, lo, hi, best);
      }
    }
  }

  result.spec = from_theta(best.theta, base);
  result.spec.sigma_n = init.sigma_n;
  result.spec.correction = init.correction;
  result.log_ml = -best.value;
  result.evaluations = obj.evaluations;
  return result;
}

HyperResult optimize_hyperparameters(const Dataset& data, const KernelSpec& init,
                                     const HyperOptions& options) {
  return optimize_hyperparameters(data.design(), data.y(), init, options);
}

nlohmann::json to_json(const KernelSpec& spec) {
  return {
      {"nu2", spec.nu2},
      {"inv_lengthscales", std::vector<double>(spec.inv_lengthscales.data(),
                                               spec.inv_lengthscales.data() +
                                                   spec.inv_lengthscales.size())},
      {"sigma_n", spec.sigma_n},
  };
}

KernelSpec kernel_spec_from_json(const nlohmann::json& j) {
  KernelSpec spec;
  try {
    spec.nu2 = j.at("nu2").get<double>();
    const auto a = j.at("inv_lengthscales").get<std::vector<double>>();
    spec.inv_lengthscales = Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
    spec.sigma_n = j.value("sigma_n", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("kernel spec: ") + e.what());
  }
  return spec;
}

}  // namespace drbayes
