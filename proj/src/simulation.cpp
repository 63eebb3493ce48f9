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

#include "drbayes/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <sstream>
#include <tuple>

#include "drbayes/concurrency.hpp"
#include "drbayes/error.hpp"
#include "drbayes/frequentist.hpp"
#include "drbayes/gp_laplace.hpp"
#include "drbayes/rng.hpp"

namespace drbayes {

namespace {

constexpr std::uint64_t kDataDomain = 0xDA7A;
constexpr std::uint64_t kTruthDomain = 0x7E57;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

}  // namespace

std::string to_string(Design d) { return d == Design::kI ? "I" : "II"; }

Design design_from_string(const std::string& s) {
  if (s == "I" || s == "1" || s == "i") return Design::kI;
  if (s == "II" || s == "2" || s == "ii") return Design::kII;
  throw ConfigError("design must be I or II, got '" + s + "'");
}

void DesignSpec::validate() const {
  const std::size_t min_p = design == Design::kI ? 5 : 3;
  if (p < min_p) {
    throw ConfigError("design " + to_string(design) + " needs p >= " + std::to_string(min_p) +
                      ", got " + std::to_string(p));
  }
  if (n < 2) throw ConfigError("design needs n >= 2");
}

double design_propensity_index(const Eigen::Ref<const Eigen::VectorXd>& x) {
  double g = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) g += x(j) / static_cast<double>(j + 1);
  return g;
}

double design_mu(Design d, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (d == Design::kI) return -2.0 + 0.2 * x.sum();
  double s = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    s += std::sin(x(j)) / std::cbrt(static_cast<double>(j + 1));
  }
  return -2.0 + 0.4 * s;
}

double design_tau(Design d, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (d == Design::kI) return 1.0 + 0.1 * x.head(5).sum();
  double s = 0.0;
  for (Eigen::Index j = 0; j < 3; ++j) s += std::cos(x(j)) / static_cast<double>(j + 1);
  return s;
}

double design_outcome(const DesignSpec& spec, double d,
                      const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double tau = spec.zero_effect ? 0.0 : design_tau(spec.design, x);
  return link(design_mu(spec.design, x) + d * tau);
}

Dataset generate(const DesignSpec& spec) {
  spec.validate();
  const auto n = static_cast<Eigen::Index>(spec.n);
  const auto p = static_cast<Eigen::Index>(spec.p);
  Philox rng = make_stream(spec.seed, kDataDomain);
  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd d(n);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = standard_normal(rng);
    const Eigen::VectorXd xi = x.row(i).transpose();
    d(i) = uniform_open(rng) < link(design_propensity_index(xi)) ? 1.0 : 0.0;
    y(i) = uniform_open(rng) < design_outcome(spec, d(i), xi) ? 1.0 : 0.0;
  }
  return Dataset(std::move(y), std::move(d), std::move(x));
}

TruthEstimate true_ate(const DesignSpec& spec, std::size_t mc_points, std::uint64_t seed,
                       bool antithetic) {
  spec.validate();
  if (mc_points < 2) throw ConfigError("true_ate needs at least 2 points");
  Philox rng = make_stream(seed, kTruthDomain, spec.p);
  const auto p = static_cast<Eigen::Index>(spec.p);
  Eigen::VectorXd x(p);
  auto effect = [&spec](const Eigen::VectorXd& v) {
    return design_outcome(spec, 1.0, v) - design_outcome(spec, 0.0, v);
  };
  // Each unit is a single point, or the average over an antithetic pair.
  const std::size_t units = antithetic ? mc_points / 2 : mc_points;
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t k = 0; k < units; ++k) {
    for (Eigen::Index j = 0; j < p; ++j) x(j) = standard_normal(rng);
    double v = effect(x);
    if (antithetic) v = 0.5 * (v + effect(-x));
    const double delta = v - mean;
    mean += delta / static_cast<double>(k + 1);
    m2 += delta * (v - mean);
  }
  TruthEstimate t;
  t.value = mean;
  t.std_error = std::sqrt(m2 / static_cast<double>(units - 1) / static_cast<double>(units));
  t.points = antithetic ? 2 * units : units;
  return t;
}

double cached_true_ate(const DesignSpec& spec) {
  static std::mutex mutex;
  static std::map<std::tuple<int, std::size_t, bool>, double> cache;
  const auto key = std::make_tuple(static_cast<int>(spec.design), spec.p, spec.zero_effect);
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, true_ate(spec, 1000000).value).first;
  return it->second;
}

std::string to_string(Method m) {
  switch (m) {
    case Method::kUncorrected: return "uncorrected";
    case Method::kPriorCorrected: return "prior-corrected";
    case Method::kDoublyRobust: return "doubly-robust";
    case Method::kAIPW: return "aipw";
    case Method::kPlugIn: return "plug-in";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  for (Method m : {Method::kUncorrected, Method::kPriorCorrected, Method::kDoublyRobust,
                   Method::kAIPW, Method::kPlugIn}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown method '" + s + "'");
}

std::vector<MCRow> aggregate(const std::vector<ReplicationRecord>& records,
                             const std::vector<Method>& methods, double truth) {
  std::vector<ReplicationRecord> sorted = records;
  std::sort(sorted.begin(), sorted.end(),
            [](const ReplicationRecord& a, const ReplicationRecord& b) { return a.index < b.index; });
  std::vector<MCRow> rows;
  for (std::size_t k = 0; k < methods.size(); ++k) {
    MCRow row;
    row.method = methods[k];
    row.label = to_string(methods[k]);
    row.truth = truth;
    row.replications = sorted.size();
    double err = 0.0;
    double len = 0.0;
    std::size_t hits = 0;
    for (const ReplicationRecord& r : sorted) {
      if (r.failed) {
        ++row.failures;
        continue;
      }
      ++row.successes;
      err += r.estimates[k] - truth;
      len += r.upper[k] - r.lower[k];
      if (r.lower[k] <= truth && truth <= r.upper[k]) ++hits;
    }
    if (row.successes > 0) {
      const double s = static_cast<double>(row.successes);
      row.bias = err / s;
      row.cil = len / s;
      row.cp = static_cast<double>(hits) / s;
      row.cp_se = std::sqrt(row.cp * (1.0 - row.cp) / s);
    }
    rows.push_back(row);
  }
  return rows;
}

MCReport run_mc(const DesignSpec& spec, const MCConfig& config) {
  spec.validate();
  if (config.replications < 1) throw ConfigError("replications must be at least 1");
  if (config.methods.empty()) throw ConfigError("no methods requested");
  const bool frequentist =
      std::any_of(config.methods.begin(), config.methods.end(),
                  [](Method m) { return m == Method::kAIPW || m == Method::kPlugIn; });
  if (frequentist && config.procedure.functional != Functional::kATE) {
    throw ConfigError("frequentist comparators are only wired for the ate");
  }
  const double truth = cached_true_ate(spec);

  MCReport report;
  report.records.resize(config.replications);
  parallel_for(config.replications, config.workers, [&](std::size_t r) {
    ReplicationRecord& rec = report.records[r];
    rec.index = r;
    DesignSpec rs = spec;
    rs.seed = spec.seed + r;
    ProcedureConfig pc = config.procedure;
    pc.seed = rs.seed;
    pc.workers = 1;
    try {
      const Dataset data = generate(rs);
      const ProcedureOutput out = run_all_variants(data, pc);
      const Dataset inference = pc.split == SplitMode::kFullReuse
                                    ? data
                                    : data.subset(out.inference_indices);
      for (Method m : config.methods) {
        double est = 0.0;
        double lo = 0.0;
        double hi = 0.0;
        if (m == Method::kAIPW || m == Method::kPlugIn) {
          const OutcomeModel& mh = *out.pilot_outcome;
          const FrequentistEstimate fe =
              m == Method::kAIPW ? aipw(inference, mh, *out.riesz, pc.alpha)
                                 : plug_in(inference, mh, pc.alpha);
          est = fe.estimate;
          lo = fe.ci_lower;
          hi = fe.ci_upper;
        } else {
          const Variant v = m == Method::kUncorrected      ? Variant::kUncorrected
                            : m == Method::kPriorCorrected ? Variant::kPriorCorrected
                                                           : Variant::kDoublyRobust;
          const CredibleSummary cs = summarize(out.draws(v), pc.alpha);
          est = cs.point;
          lo = cs.lower;
          hi = cs.upper;
        }
        rec.estimates.push_back(est);
        rec.lower.push_back(lo);
        rec.upper.push_back(hi);
      }
    } catch (const Error& e) {
      if (e.category() == Error::Category::kConfig) throw;
      rec.failed = true;
      rec.error = e.what();
      rec.estimates.clear();
      rec.lower.clear();
      rec.upper.clear();
    }
  });

  report.rows = aggregate(report.records, config.methods, truth);
  std::size_t failures = 0;
  for (const ReplicationRecord& r : report.records) failures += r.failed ? 1 : 0;
  report.budget_exceeded = static_cast<double>(failures) >
                           config.failure_budget * static_cast<double>(config.replications);
  for (MCRow& row : report.rows) {
    row.design = spec.design;
    row.n = spec.n;
    row.p = spec.p;
    row.c_sigma = config.procedure.c_sigma;
    row.split = config.procedure.split;
  }
  return report;
}

MCReport merge(const std::vector<MCReport>& reports) {
  MCReport out;
  for (const MCReport& r : reports) {
    out.rows.insert(out.rows.end(), r.rows.begin(), r.rows.end());
    out.records.insert(out.records.end(), r.records.begin(), r.records.end());
    out.budget_exceeded = out.budget_exceeded || r.budget_exceeded;
  }
  return out;
}

std::string MCReport::to_csv() const {
  std::ostringstream os;
  os << "method,design,n,p,c_sigma,split,truth,bias,cp,cp_se,cil,replications,successes,failures\n";
  for (const MCRow& r : rows) {
    os << r.label << ',' << to_string(r.design) << ',' << r.n << ',' << r.p << ','
       << fmt("%.6g", r.c_sigma) << ',' << to_string(r.split) << ',' << fmt("%.6f", r.truth)
       << ',' << fmt("%.6f", r.bias) << ',' << fmt("%.6f", r.cp) << ',' << fmt("%.6f", r.cp_se)
       << ',' << fmt("%.6f", r.cil) << ',' << r.replications << ',' << r.successes << ','
       << r.failures << '\n';
  }
  return os.str();
}

std::string MCReport::to_table() const {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "%-16s %-6s %6s %4s %7s %-10s %9s %7s %7s %7s %6s %5s\n",
                "Method", "Design", "n", "p", "c_sigma", "split", "Bias", "CP", "CP_se", "CIL",
                "reps", "fail");
  os << line;
  for (const MCRow& r : rows) {
    std::snprintf(line, sizeof(line),
                  "%-16s %-6s %6zu %4zu %7.3g %-10s %9.4f %7.3f %7.3f %7.3f %6zu %5zu\n",
                  r.label.c_str(), to_string(r.design).c_str(), r.n, r.p, r.c_sigma,
                  to_string(r.split).c_str(), r.bias, r.cp, r.cp_se, r.cil, r.replications,
                  r.failures);
    os << line;
  }
  return os.str();
}

}  // namespace drbayes
