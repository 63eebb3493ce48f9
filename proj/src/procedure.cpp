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

#include "drbayes/procedure.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "drbayes/concurrency.hpp"
#include "drbayes/error.hpp"
#include "drbayes/gp_laplace.hpp"

namespace drbayes {

namespace {

constexpr std::uint64_t kWeightDomain = 0xB0;

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

Eigen::MatrixXd design_for(Functional f, const Dataset& data) {
  Eigen::MatrixXd w = data.design();
  if (f == Functional::kAPE) w.col(0).setZero();
  return w;
}

// Evaluation grid for the inference sample. Row blocks of size n:
//   ATE, MAR: (1, X) | (0, X)
//   AD:       (D + h, X) | (D - h, X) | (D, X)
//   APE:      (0, X) | quadrature points (0, Z)
struct EvaluationGrid {
  Eigen::MatrixXd points;
  Eigen::Index n = 0;
  double step = 0.0;
};

EvaluationGrid make_grid(const ProcedureConfig& cfg, const Dataset& data) {
  EvaluationGrid grid;
  grid.n = static_cast<Eigen::Index>(data.n());
  const Eigen::Index n = grid.n;
  const Eigen::Index p = static_cast<Eigen::Index>(data.p());
  switch (cfg.functional) {
    case Functional::kATE:
    case Functional::kMAR:
      grid.points = treatment_contrast_points(data.x());
      break;
    case Functional::kAD: {
      const double mean = data.d().mean();
      const double sd =
          std::sqrt((data.d().array() - mean).square().sum() / static_cast<double>(n - 1));
      if (!(sd > 0.0)) throw NumericError("average derivative: treatment has zero variance");
      grid.step = 1e-3 * sd;
      grid.points.resize(3 * n, p + 1);
      grid.points.middleRows(0, n) = data.design();
      grid.points.middleRows(n, n) = data.design();
      grid.points.middleRows(2 * n, n) = data.design();
      grid.points.col(0).segment(0, n).array() += grid.step;
      grid.points.col(0).segment(n, n).array() -= grid.step;
      break;
    }
    case Functional::kAPE: {
      const Eigen::Index q = cfg.quadrature_points.rows();
      if (q > 0 && (cfg.quadrature_points.cols() != p || cfg.quadrature_weights.size() != q)) {
        throw ConfigError("APE quadrature points/weights do not match the covariates");
      }
      grid.points = Eigen::MatrixXd::Zero(n + q, p + 1);
      grid.points.block(0, 1, n, p) = data.x();
      if (q > 0) grid.points.block(n, 1, q, p) = cfg.quadrature_points;
      break;
    }
  }
  return grid;
}

// Per-draw functional arithmetic on grid values.
class FunctionalEvaluator {
 public:
  FunctionalEvaluator(const ProcedureConfig& cfg, const EvaluationGrid& grid,
                      const Dataset& data, Eigen::VectorXd gamma_obs)
      : cfg_(cfg), grid_(grid), d_(data.d()), gamma_(std::move(gamma_obs)) {}

  double plug_in(const Eigen::Ref<const Eigen::VectorXd>& m,
                 const Eigen::VectorXd& weights) const {
    const Eigen::Index n = grid_.n;
    switch (cfg_.functional) {
      case Functional::kATE:
        return weights.dot(m.segment(0, n) - m.segment(n, n));
      case Functional::kMAR:
        return weights.dot(m.segment(0, n));
      case Functional::kAD:
        return weights.dot(m.segment(0, n) - m.segment(n, n)) / (2.0 * grid_.step);
      case Functional::kAPE:
        return integral(m);
    }
    return 0.0;
  }

  double recentering(const Eigen::Ref<const Eigen::VectorXd>& delta) const {
    const Eigen::Index n = grid_.n;
    double total = 0.0;
    switch (cfg_.functional) {
      case Functional::kATE:
        for (Eigen::Index i = 0; i < n; ++i) {
          const double at_obs = d_(i) == 1.0 ? delta(i) : delta(n + i);
          total += delta(i) - delta(n + i) - gamma_(i) * at_obs;
        }
        return total / static_cast<double>(n);
      case Functional::kMAR:
        for (Eigen::Index i = 0; i < n; ++i) {
          const double at_obs = d_(i) == 1.0 ? delta(i) : delta(n + i);
          total += delta(i) - gamma_(i) * at_obs;
        }
        return total / static_cast<double>(n);
      case Functional::kAD:
        for (Eigen::Index i = 0; i < n; ++i) {
          total += (delta(i) - delta(n + i)) / (2.0 * grid_.step) - gamma_(i) * delta(2 * n + i);
        }
        return total / static_cast<double>(n);
      case Functional::kAPE:
        return integral(delta) - gamma_.dot(delta.segment(0, n)) / static_cast<double>(n);
    }
    return 0.0;
  }

 private:
  // Integral of h against G1 - G0: quadrature when supplied, otherwise the
  // sample average of h(X_i) (g1 - g0)(X_i) / f_hat(X_i).
  double integral(const Eigen::Ref<const Eigen::VectorXd>& h) const {
    const Eigen::Index n = grid_.n;
    const Eigen::Index q = cfg_.quadrature_weights.size();
    if (q > 0) return cfg_.quadrature_weights.dot(h.segment(n, q));
    return gamma_.dot(h.segment(0, n)) / static_cast<double>(n);
  }

  const ProcedureConfig& cfg_;
  const EvaluationGrid& grid_;
  Eigen::VectorXd d_;
  Eigen::VectorXd gamma_;
};

RieszRepresenter build_riesz(const ProcedureConfig& cfg, const Dataset& pilot,
                             nlohmann::json* propensity_json) {
  switch (cfg.functional) {
    case Functional::kATE:
    case Functional::kMAR: {
      const PropensityModel pm = fit_propensity(pilot, cfg.propensity, cfg.hyper);
      *propensity_json = pm.to_json();
      return cfg.functional == Functional::kATE ? riesz_ate(pm) : riesz_mar(pm);
    }
    case Functional::kAD:
      *propensity_json = {{"kind", "gaussian-location"}};
      return riesz_ad(pilot);
    case Functional::kAPE:
      if (!cfg.policy_g1 || !cfg.policy_g0) {
        throw ConfigError("APE needs both policy densities g1 and g0");
      }
      *propensity_json = {{"kind", cfg.covariate_density ? "user-density" : "kde"}};
      if (cfg.covariate_density) {
        return riesz_ape(cfg.policy_g1, cfg.policy_g0, cfg.covariate_density);
      }
      return riesz_ape(cfg.policy_g1, cfg.policy_g0, pilot);
  }
  throw ConfigError("unknown functional");
}

void check_treatment(const ProcedureConfig& cfg, const Dataset& data) {
  const bool continuous = data.treatment() == TreatmentKind::kContinuous;
  if (cfg.functional == Functional::kAD && !continuous) {
    throw ConfigError("the average derivative needs a continuous treatment");
  }
  if ((cfg.functional == Functional::kATE || cfg.functional == Functional::kMAR) && continuous) {
    throw ConfigError(to_string(cfg.functional) + " needs a binary treatment");
  }
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kUncorrected: return "uncorrected";
    case Variant::kPriorCorrected: return "prior-corrected";
    case Variant::kDoublyRobust: return "doubly-robust";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "uncorrected") return Variant::kUncorrected;
  if (s == "prior-corrected") return Variant::kPriorCorrected;
  if (s == "doubly-robust") return Variant::kDoublyRobust;
  throw ConfigError("variant must be uncorrected, prior-corrected or doubly-robust; got '" + s +
                    "'");
}

Eigen::VectorXd bootstrap_weights(std::size_t n, Philox& rng) {
  Eigen::VectorXd e(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = standard_exponential(rng);
  return e / e.sum();
}

Eigen::VectorXd bootstrap_weights(std::size_t n, std::uint64_t seed, std::uint64_t draw) {
  Philox rng = make_stream(seed, draw, kWeightDomain);
  return bootstrap_weights(n, rng);
}

double plug_in_draw(const OutcomeFunction& m_s, const Eigen::VectorXd& weights,
                    const Eigen::MatrixXd& x) {
  if (weights.size() != x.rows()) throw ConfigError("plug_in_draw: weight length mismatch");
  Eigen::VectorXd w(x.cols() + 1);
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    w.tail(x.cols()) = x.row(i).transpose();
    w(0) = 1.0;
    const double treated = m_s(w);
    w(0) = 0.0;
    total += weights(i) * (treated - m_s(w));
  }
  return total;
}

double recentering_term(const OutcomeFunction& m_s, const OutcomeFunction& m_hat,
                        const RieszRepresenter& gamma, const Dataset& data) {
  const Eigen::MatrixXd& x = data.x();
  Eigen::VectorXd w(x.cols() + 1);
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    w.tail(x.cols()) = x.row(i).transpose();
    w(0) = 1.0;
    const double delta1 = m_s(w) - m_hat(w);
    w(0) = 0.0;
    const double delta0 = m_s(w) - m_hat(w);
    w(0) = data.d()(i);
    total += delta1 - delta0 + gamma(w) * (m_hat(w) - m_s(w));
  }
  return total / static_cast<double>(x.rows());
}

double quantile(std::vector<double> values, double a) {
  if (values.empty()) throw ConfigError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * a;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

CredibleSummary summarize(const Eigen::VectorXd& values, double alpha) {
  if (values.size() < 2) throw ConfigError("summarize needs at least 2 draws");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  std::vector<double> v(values.data(), values.data() + values.size());
  CredibleSummary s;
  s.alpha = alpha;
  s.point = values.mean();
  s.median = quantile(v, 0.5);
  s.lower = quantile(v, alpha / 2.0);
  s.upper = quantile(std::move(v), 1.0 - alpha / 2.0);
  return s;
}

CredibleSummary summarize(const FunctionalDraws& draws, double alpha) {
  return summarize(draws.values, alpha);
}

const FunctionalDraws& ProcedureOutput::draws(Variant v) const {
  switch (v) {
    case Variant::kUncorrected: return uncorrected;
    case Variant::kPriorCorrected: return prior_corrected;
    case Variant::kDoublyRobust: return doubly_robust;
  }
  return doubly_robust;
}

ProcedureOutput run_all_variants(const Dataset& data, const ProcedureConfig& cfg) {
  if (cfg.draws < 1) throw ConfigError("need at least one posterior draw");
  check_treatment(cfg, data);

  ProcedureOutput out;
  Diagnostics& diag = out.diagnostics;
  const SplitPlan plan = make_split(data.n(), cfg.split, cfg.seed, cfg.swap_split_roles);
  const bool reuse = cfg.split == SplitMode::kFullReuse;
  const Dataset pilot = reuse ? data : data.subset(plan.pilot_indices);
  const Dataset inference = reuse ? data : data.subset(plan.inference_indices);
  out.inference_indices = plan.inference_indices;
  diag.n_pilot = pilot.n();
  diag.n_inference = inference.n();

  // Pilot stage: representer, hyperparameters, uncorrected outcome fit.
  RieszRepresenter riesz = build_riesz(cfg, pilot, &diag.propensity);
  const Eigen::MatrixXd w_pilot = design_for(cfg.functional, pilot);
  const Eigen::MatrixXd w_inf = reuse ? w_pilot : design_for(cfg.functional, inference);
  KernelSpec spec;
  if (cfg.kernel) {
    spec = cfg.kernel->uncorrected();
  } else {
    const double scale = 1.0 / std::sqrt(static_cast<double>(pilot.p()));
    const HyperResult hr = optimize_hyperparameters(
        w_pilot, pilot.y(), KernelSpec::isotropic(pilot.p() + 1, 1.0, 1.0, scale), cfg.hyper);
    spec = hr.spec;
    diag.hyper_evaluations = hr.evaluations;
  }
  diag.kernel = spec;

  const EvaluationGrid grid = make_grid(cfg, inference);
  auto count_fit = [&diag](const LaplaceFit& f) {
    ++diag.laplace_fits;
    if (!f.converged) ++diag.nonconverged_fits;
  };

  const LaplaceFit pilot_fit =
      fit_laplace(gram(spec, w_pilot, reuse ? grid.points : Eigen::MatrixXd()), pilot.y());
  count_fit(pilot_fit);
  diag.pilot_log_ml = pilot_fit.log_ml;
  diag.pilot_converged = pilot_fit.converged;
  const OutcomeModel m_hat = outcome_from_fit(spec, w_pilot, pilot_fit);
  const Eigen::VectorXd m_hat_grid = m_hat.evaluate_rows(grid.points);

  std::optional<LaplaceFit> inf_fit_storage;
  if (!reuse) {
    inf_fit_storage = fit_laplace(gram(spec, w_inf, grid.points), inference.y());
    count_fit(*inf_fit_storage);
  }
  const LaplaceFit& uncorrected_fit = reuse ? pilot_fit : *inf_fit_storage;

  // Corrected prior on the inference sample.
  const Eigen::MatrixXd w_obs = w_inf;
  const Eigen::VectorXd gamma_obs = riesz.scan(w_obs);
  diag.gamma_sup = riesz.sup_bound();
  diag.gamma_abs_sum = gamma_obs.cwiseAbs().sum();
  diag.sigma_n = diag.gamma_abs_sum > 0.0
                     ? sigma_rule(inference.p(), inference.n(), diag.gamma_abs_sum, cfg.c_sigma)
                     : 0.0;

  const PredictiveGaussian pred_u = predict(uncorrected_fit);
  std::optional<LaplaceFit> corrected_storage;
  std::optional<PredictiveGaussian> pred_c_storage;
  if (diag.sigma_n > 0.0) {
    KernelSpec corrected = spec;
    corrected.sigma_n = diag.sigma_n;
    corrected.correction = riesz.function();
    corrected_storage = fit_laplace(gram(corrected, w_inf, grid.points), inference.y(), {},
                                    &uncorrected_fit.alpha);
    count_fit(*corrected_storage);
    pred_c_storage = predict(*corrected_storage);
  }
  const LaplaceFit& corrected_fit = corrected_storage ? *corrected_storage : uncorrected_fit;
  const PredictiveGaussian& pred_c = pred_c_storage ? *pred_c_storage : pred_u;
  diag.corrected_log_ml = corrected_fit.log_ml;
  diag.corrected_converged = corrected_fit.converged;

  if (static_cast<double>(diag.nonconverged_fits) >
      0.01 * static_cast<double>(diag.laplace_fits)) {
    throw BudgetError(std::to_string(diag.nonconverged_fits) + " of " +
                      std::to_string(diag.laplace_fits) + " Laplace fits did not converge");
  }

  // Posterior draws. Both variants use the same function-draw streams.
  const Eigen::MatrixXd latent_u = sample_functions(pred_u, cfg.draws, cfg.seed);
  const Eigen::MatrixXd latent_c =
      pred_c_storage ? sample_functions(pred_c, cfg.draws, cfg.seed) : latent_u;
  const FunctionalEvaluator evaluator(cfg, grid, inference, gamma_obs);

  const auto b = static_cast<Eigen::Index>(cfg.draws);
  for (FunctionalDraws* fd : {&out.uncorrected, &out.prior_corrected, &out.doubly_robust}) {
    fd->plug_in.resize(b);
    fd->recenterings = Eigen::VectorXd::Zero(b);
    fd->seed = cfg.seed;
  }
  out.uncorrected.variant = Variant::kUncorrected;
  out.prior_corrected.variant = Variant::kPriorCorrected;
  out.doubly_robust.variant = Variant::kDoublyRobust;

  parallel_for(cfg.draws, cfg.workers, [&](std::size_t s) {
    const auto row = static_cast<Eigen::Index>(s);
    const Eigen::VectorXd weights = bootstrap_weights(inference.n(), cfg.seed, s);
    const Eigen::VectorXd m_u = latent_u.row(row).transpose().unaryExpr([](double t) { return link(t); });
    const Eigen::VectorXd m_c = latent_c.row(row).transpose().unaryExpr([](double t) { return link(t); });
    out.uncorrected.plug_in(row) = evaluator.plug_in(m_u, weights);
    const double pc = evaluator.plug_in(m_c, weights);
    out.prior_corrected.plug_in(row) = pc;
    out.doubly_robust.plug_in(row) = pc;
    out.doubly_robust.recenterings(row) = evaluator.recentering(m_c - m_hat_grid);
  });
  out.uncorrected.values = out.uncorrected.plug_in;
  out.prior_corrected.values = out.prior_corrected.plug_in;
  out.doubly_robust.values = out.doubly_robust.plug_in - out.doubly_robust.recenterings;

  out.pilot_outcome = m_hat;
  out.riesz = std::move(riesz);
  return out;
}

ProcedureResult run_procedure(const Dataset& data, const ProcedureConfig& config) {
  ProcedureOutput all = run_all_variants(data, config);
  ProcedureResult r;
  r.draws = all.draws(config.variant);
  r.summary = summarize(r.draws.values.size() >= 2 ? r.draws.values
                                                    : Eigen::VectorXd(r.draws.values.replicate(2, 1)),
                        config.alpha);
  r.diagnostics = std::move(all.diagnostics);
  return r;
}

void write_draws_csv(const std::filesystem::path& path, const FunctionalDraws& draws) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "s,plug_in,recentering,value\n";
  for (Eigen::Index s = 0; s < draws.values.size(); ++s) {
    out << (s + 1) << ',' << format_double(draws.plug_in(s)) << ','
        << format_double(draws.recenterings(s)) << ',' << format_double(draws.values(s)) << '\n';
  }
}

FunctionalDraws read_draws_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty draws file");
  std::vector<double> plug, rec, val;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    std::stringstream ss(line);
    std::string cell;
    double v[4];
    for (int c = 0; c < 4; ++c) {
      if (!std::getline(ss, cell, ',')) {
        throw IoError(path.string() + ": row " + std::to_string(row) + " has fewer than 4 columns");
      }
      if (!cell.empty() && cell.back() == '\r') cell.pop_back();
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v[c]);
      if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        throw IoError(path.string() + ": row " + std::to_string(row) + ": cannot parse '" + cell + "'");
      }
    }
    plug.push_back(v[1]);
    rec.push_back(v[2]);
    val.push_back(v[3]);
  }
  if (val.empty()) throw IoError(path.string() + ": no draws");
  FunctionalDraws d;
  const auto b = static_cast<Eigen::Index>(val.size());
  d.plug_in = Eigen::Map<Eigen::VectorXd>(plug.data(), b);
  d.recenterings = Eigen::Map<Eigen::VectorXd>(rec.data(), b);
  d.values = Eigen::Map<Eigen::VectorXd>(val.data(), b);
  return d;
}

nlohmann::json to_json(const CredibleSummary& s) {
  return {{"point", s.point}, {"median", s.median}, {"lower", s.lower},
          {"upper", s.upper}, {"alpha", s.alpha},   {"length", s.length()}};
}

nlohmann::json to_json(const Diagnostics& d) {
  return {{"kernel", to_json(d.kernel)},
          {"sigma_n", d.sigma_n},
          {"gamma_abs_sum", d.gamma_abs_sum},
          {"gamma_sup", d.gamma_sup},
          {"pilot_log_ml", d.pilot_log_ml},
          {"corrected_log_ml", d.corrected_log_ml},
          {"pilot_converged", d.pilot_converged},
          {"corrected_converged", d.corrected_converged},
          {"laplace_fits", d.laplace_fits},
          {"nonconverged_fits", d.nonconverged_fits},
          {"hyper_evaluations", d.hyper_evaluations},
          {"n_pilot", d.n_pilot},
          {"n_inference", d.n_inference},
          {"propensity", d.propensity}};
}

}  // namespace drbayes
