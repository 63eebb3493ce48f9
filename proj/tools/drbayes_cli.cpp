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

// drbayes command-line interface: estimate | simulate | plot.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "drbayes/config.hpp"
#include "drbayes/data.hpp"
#include "drbayes/error.hpp"
#include "drbayes/frequentist.hpp"
#include "drbayes/nuisance.hpp"
#include "drbayes/plot.hpp"
#include "drbayes/procedure.hpp"
#include "drbayes/simulation.hpp"

namespace fs = std::filesystem;
using drbayes::RunConfig;

namespace {

// Flags are parsed into a scratch RunConfig; only flags the user actually
// passed are copied over the JSON-loaded config.
class Overrides {
 public:
  template <typename T>
  void add(CLI::App* app, const std::string& flag, T RunConfig::*field, const std::string& help) {
    CLI::Option* opt = app->add_option(flag, scratch_.*field, help);
    entries_.push_back({opt, [field](RunConfig& dst, const RunConfig& src) {
                          dst.*field = src.*field;
                        }});
  }
  void add_flag(CLI::App* app, const std::string& flag, bool RunConfig::*field,
                const std::string& help) {
    CLI::Option* opt = app->add_flag(flag, scratch_.*field, help);
    entries_.push_back({opt, [field](RunConfig& dst, const RunConfig& src) {
                          dst.*field = src.*field;
                        }});
  }
  void add_reference(CLI::App* app) {
    CLI::Option* opt = app->add_option("--reference", scratch_.reference,
                                       "Vertical reference line, e.g. the true effect");
    entries_.push_back({opt, [](RunConfig& dst, const RunConfig& src) {
                          dst.reference = src.reference;
                          dst.has_reference = true;
                        }});
  }
  void apply(RunConfig& dst) const {
    for (const auto& e : entries_) {
      if (e.option->count() > 0) e.copy(dst, scratch_);
    }
  }

 private:
  struct Entry {
    CLI::Option* option;
    std::function<void(RunConfig&, const RunConfig&)> copy;
  };
  RunConfig scratch_;
  std::vector<Entry> entries_;
};

void add_procedure_flags(CLI::App* app, Overrides& o) {
  o.add(app, "--functional", &RunConfig::functional, "ate | mar | ad");
  o.add(app, "--variant", &RunConfig::variant, "uncorrected | prior-corrected | doubly-robust");
  o.add(app, "-B,--draws", &RunConfig::draws, "Posterior draws");
  o.add(app, "--alpha", &RunConfig::alpha, "1 - credible level");
  o.add(app, "--c-sigma", &RunConfig::c_sigma, "Scale of the prior correction");
  o.add(app, "--split", &RunConfig::split, "full-reuse | half-split");
  o.add_flag(app, "--swap-split-roles", &RunConfig::swap_split_roles, "Swap pilot/inference halves");
  o.add(app, "--seed", &RunConfig::seed, "Base seed");
  o.add(app, "--workers", &RunConfig::workers, "Worker threads");
  o.add(app, "--propensity", &RunConfig::propensity, "logistic | gp");
  o.add(app, "--hyper-method", &RunConfig::hyper_method, "gradient | simplex");
  o.add(app, "--hyper-starts", &RunConfig::hyper_starts, "Hyperparameter search restarts");
  o.add(app, "--hyper-budget", &RunConfig::hyper_budget, "Evaluations per restart");
  o.add(app, "--hyper-lower", &RunConfig::hyper_lower, "Lower hyperparameter bound");
  o.add(app, "--hyper-upper", &RunConfig::hyper_upper, "Upper hyperparameter bound");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw drbayes::IoError("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

std::string timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void prepare_out(const RunConfig& c) {
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec) throw drbayes::IoError("cannot create output directory " + c.out + ": " + ec.message());
  write_json(fs::path(c.out) / "effective_config.json", drbayes::to_json(c));
}

int cmd_estimate(const RunConfig& c) {
  using namespace drbayes;
  if (c.data.empty()) throw ConfigError("estimate needs --data");
  ProcedureConfig pc = c.procedure();
  if (pc.functional == Functional::kAPE) {
    throw ConfigError("ape needs policy densities and is only available through the library");
  }
  const DataSchema schema = c.data_schema();
  if (!fs::exists(c.data)) throw IoError("input file not found: " + c.data);
  Dataset data = load_csv(c.data, schema);
  prepare_out(c);

  nlohmann::json summary;
  summary["metadata"] = {{"timestamp", timestamp()}, {"input", c.data}};
  summary["n_input"] = data.n();

  const bool binary = data.treatment() == TreatmentKind::kBinary;
  if (c.trim && binary) {
    const PropensityModel pm = fit_propensity(data, pc.propensity, pc.hyper);
    const TrimResult tr = trim_by_overlap(data, pm.evaluate_rows(data.x()), c.trim_lo, c.trim_hi);
    summary["trimming"] = {{"lo", c.trim_lo},
                           {"hi", c.trim_hi},
                           {"kept", tr.kept.size()},
                           {"dropped", data.n() - tr.kept.size()}};
    if (!tr.data) throw NumericError("trimming left fewer than 2 rows");
    data = *tr.data;
  }
  summary["n"] = data.n();

  const ProcedureOutput out = run_all_variants(data, pc);
  summary["functional"] = c.functional;
  summary["variant"] = c.variant;
  summary["summary"] = to_json(summarize(out.draws(pc.variant), pc.alpha));
  nlohmann::json variants;
  for (Variant v : {Variant::kUncorrected, Variant::kPriorCorrected, Variant::kDoublyRobust}) {
    variants[to_string(v)] = to_json(summarize(out.draws(v), pc.alpha));
    write_draws_csv(fs::path(c.out) / ("draws_" + to_string(v) + ".csv"), out.draws(v));
  }
  summary["variants"] = variants;
  summary["diagnostics"] = to_json(out.diagnostics);
  write_draws_csv(fs::path(c.out) / "draws.csv", out.draws(pc.variant));

  if (binary && (pc.functional == Functional::kATE || pc.functional == Functional::kMAR)) {
    const Dataset inference =
        pc.split == SplitMode::kFullReuse ? data : data.subset(out.inference_indices);
    summary["frequentist"] = {
        {"aipw", to_json(aipw(inference, *out.pilot_outcome, *out.riesz, pc.alpha, pc.functional))},
        {"plug_in", to_json(plug_in(inference, *out.pilot_outcome, pc.alpha, pc.functional))}};
  }
  write_json(fs::path(c.out) / "summary.json", summary);

  const CredibleSummary s = summarize(out.draws(pc.variant), pc.alpha);
  std::cout << c.functional << " (" << c.variant << "): " << s.point << "  ["
            << s.lower << ", " << s.upper << "]\n";
  return 0;
}

int cmd_simulate(const RunConfig& c) {
  using namespace drbayes;
  const DesignSpec spec = c.design_spec();
  spec.validate();
  const std::vector<double> sigmas = c.c_sigma_list.empty() ? std::vector<double>{c.c_sigma}
                                                            : c.c_sigma_list;
  const std::vector<std::string> splits =
      c.split_list.empty() ? std::vector<std::string>{c.split} : c.split_list;
  prepare_out(c);
  std::vector<MCReport> reports;
  for (const std::string& split : splits) {
    for (double cs : sigmas) {
      MCConfig mc = c.mc_config();
      mc.procedure.c_sigma = cs;
      mc.procedure.split = split_mode_from_string(split);
      reports.push_back(run_mc(spec, mc));
      std::cerr << "finished split=" << split << " c_sigma=" << cs << "\n";
    }
  }
  const MCReport report = merge(reports);
  write_text(fs::path(c.out) / "report.csv", report.to_csv());
  write_text(fs::path(c.out) / "report.txt", report.to_table());
  std::cout << report.to_table();
  if (report.budget_exceeded) {
    std::cerr << "error: more than " << c.failure_budget * 100.0
              << "% of replications failed; see report.csv\n";
    return static_cast<int>(Error::Category::kBudget);
  }
  return 0;
}

int cmd_plot(const RunConfig& c) {
  using namespace drbayes;
  if (c.draws_files.empty()) throw ConfigError("plot needs at least one --draws-file");
  std::vector<HistogramSeries> series;
  for (std::size_t k = 0; k < c.draws_files.size(); ++k) {
    const std::string& f = c.draws_files[k];
    if (!fs::exists(f)) throw IoError("draws file not found: " + f);
    std::string label = k < c.labels.size() ? c.labels[k] : fs::path(f).stem().string();
    series.push_back({label, read_draws_csv(f).values});
  }
  HistogramOptions opt;
  opt.bins = c.bins;
  if (c.has_reference) opt.reference = c.reference;
  prepare_out(c);
  write_histogram_svg(fs::path(c.out) / c.svg, series, opt);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Doubly robust Bayesian inference for average treatment effects"};
  app.require_subcommand(1);
  std::string config_path;
  Overrides o;

  CLI::App* est = app.add_subcommand("estimate", "Estimate a functional on a CSV dataset");
  CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo study on Design I or II");
  CLI::App* plt = app.add_subcommand("plot", "Overlaid histogram of posterior draws");
  for (CLI::App* sub : {est, sim, plt}) {
    sub->add_option("--config", config_path, "JSON config; flags override its values");
    o.add(sub, "--out", &RunConfig::out, "Output directory");
  }
  for (CLI::App* sub : {est, sim}) add_procedure_flags(sub, o);

  o.add(est, "--data", &RunConfig::data, "Input CSV");
  o.add(est, "--schema", &RunConfig::schema, "Column schema JSON");
  o.add(est, "--y", &RunConfig::y_column, "Outcome column");
  o.add(est, "--d", &RunConfig::d_column, "Treatment column");
  o.add(est, "--covariates", &RunConfig::covariates, "Covariate columns");
  o.add(est, "--treatment", &RunConfig::treatment, "binary | continuous");
  o.add(est, "--trim", &RunConfig::trim, "Trim by estimated propensity (true/false)");
  o.add(est, "--trim-lo", &RunConfig::trim_lo, "Lower propensity bound");
  o.add(est, "--trim-hi", &RunConfig::trim_hi, "Upper propensity bound");

  o.add(sim, "--design", &RunConfig::design, "I | II");
  o.add(sim, "-n", &RunConfig::n, "Sample size");
  o.add(sim, "-p", &RunConfig::p, "Covariate dimension");
  o.add(sim, "--replications", &RunConfig::replications, "Monte Carlo replications");
  o.add(sim, "--c-sigma-list", &RunConfig::c_sigma_list, "Sweep over c_sigma values");
  o.add(sim, "--split-list", &RunConfig::split_list, "Sweep over split modes");
  o.add(sim, "--methods", &RunConfig::methods,
        "uncorrected prior-corrected doubly-robust aipw plug-in");
  o.add(sim, "--failure-budget", &RunConfig::failure_budget, "Tolerated failure fraction");

  o.add(plt, "--draws-file", &RunConfig::draws_files, "draws.csv files to overlay");
  o.add(plt, "--labels", &RunConfig::labels, "Legend labels");
  o.add_reference(plt);
  o.add(plt, "--bins", &RunConfig::bins, "Histogram bins");
  o.add(plt, "--svg", &RunConfig::svg, "SVG file name inside --out");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(drbayes::Error::Category::kConfig);
  }

  try {
    RunConfig c = config_path.empty() ? RunConfig{} : drbayes::load_run_config(config_path);
    o.apply(c);
    c.validate();
    if (est->parsed()) return cmd_estimate(c);
    if (sim->parsed()) return cmd_simulate(c);
    return cmd_plot(c);
  } catch (const drbayes::Error& e) {
    std::cerr << "error[" << e.exit_code() << "]: " << e.what() << "\n";
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error[3]: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error[4]: " << e.what() << "\n";
    return 4;
  }
}
