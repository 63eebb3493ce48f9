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

#include "drbayes/config.hpp"

#include <fstream>
#include <set>

#include "drbayes/error.hpp"

namespace drbayes {

namespace {

template <typename T>
void read(const nlohmann::json& j, const char* key, T& field) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    field = it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "functional", "variant", "draws", "alpha", "c_sigma", "split", "swap_split_roles",
      "seed", "workers", "propensity", "hyper_method", "hyper_starts", "hyper_budget",
      "hyper_lower", "hyper_upper", "data", "schema", "y_column", "d_column", "covariates",
      "treatment", "trim", "trim_lo", "trim_hi", "design", "n", "p", "replications",
      "c_sigma_list", "split_list", "methods", "failure_budget", "draws_files", "labels",
      "reference", "bins", "svg", "out"};
  return keys;
}

HyperSearch hyper_method_from_string(const std::string& s) {
  if (s == "gradient") return HyperSearch::kGradient;
  if (s == "simplex") return HyperSearch::kSimplex;
  throw ConfigError("hyper_method must be gradient or simplex, got '" + s + "'");
}

PropensityKind propensity_from_string(const std::string& s) {
  if (s == "logistic") return PropensityKind::kLogistic;
  if (s == "gp") return PropensityKind::kGaussianProcess;
  throw ConfigError("propensity must be logistic or gp, got '" + s + "'");
}

}  // namespace

void RunConfig::validate() const {
  functional_from_string(functional);
  variant_from_string(variant);
  split_mode_from_string(split);
  propensity_from_string(propensity);
  hyper_method_from_string(hyper_method);
  design_from_string(design);
  for (const auto& s : split_list) split_mode_from_string(s);
  for (const auto& m : methods) method_from_string(m);
  if (draws < 2) throw ConfigError("draws must be at least 2");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (!(c_sigma >= 0.0)) throw ConfigError("c_sigma must be non-negative");
  for (double c : c_sigma_list) {
    if (!(c >= 0.0)) throw ConfigError("c_sigma_list entries must be non-negative");
  }
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (hyper_starts < 1 || hyper_budget < 1) throw ConfigError("hyper_starts/budget must be >= 1");
  if (!(hyper_lower > 0.0 && hyper_lower < hyper_upper)) {
    throw ConfigError("need 0 < hyper_lower < hyper_upper");
  }
  if (!(0.0 <= trim_lo && trim_lo < trim_hi && trim_hi <= 1.0)) {
    throw ConfigError("need 0 <= trim_lo < trim_hi <= 1");
  }
  if (treatment != "binary" && treatment != "continuous") {
    throw ConfigError("treatment must be binary or continuous");
  }
  if (replications < 1) throw ConfigError("replications must be at least 1");
  if (!(failure_budget >= 0.0 && failure_budget <= 1.0)) {
    throw ConfigError("failure_budget must lie in [0, 1]");
  }
  if (bins < 1) throw ConfigError("bins must be at least 1");
}

ProcedureConfig RunConfig::procedure() const {
  ProcedureConfig pc;
  pc.functional = functional_from_string(functional);
  pc.variant = variant_from_string(variant);
  pc.draws = draws;
  pc.alpha = alpha;
  pc.c_sigma = c_sigma;
  pc.split = split_mode_from_string(split);
  pc.swap_split_roles = swap_split_roles;
  pc.seed = seed;
  pc.workers = workers;
  pc.propensity = propensity_from_string(propensity);
  pc.hyper.method = hyper_method_from_string(hyper_method);
  pc.hyper.starts = hyper_starts;
  pc.hyper.budget = hyper_budget;
  pc.hyper.lower = hyper_lower;
  pc.hyper.upper = hyper_upper;
  return pc;
}

DataSchema RunConfig::data_schema() const {
  if (!schema.empty()) return load_schema(schema);
  DataSchema s;
  s.y = y_column;
  s.d = d_column;
  s.covariates = covariates;
  s.treatment = treatment == "continuous" ? TreatmentKind::kContinuous : TreatmentKind::kBinary;
  return s;
}

DesignSpec RunConfig::design_spec() const {
  DesignSpec s;
  s.design = design_from_string(design);
  s.n = n;
  s.p = p;
  s.seed = seed;
  return s;
}

MCConfig RunConfig::mc_config() const {
  MCConfig mc;
  mc.procedure = procedure();
  mc.procedure.workers = 1;
  mc.methods.clear();
  for (const auto& m : methods) mc.methods.push_back(method_from_string(m));
  mc.replications = replications;
  mc.workers = workers;
  mc.failure_budget = failure_budget;
  return mc;
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j = {{"functional", c.functional},
                      {"variant", c.variant},
                      {"draws", c.draws},
                      {"alpha", c.alpha},
                      {"c_sigma", c.c_sigma},
                      {"split", c.split},
                      {"swap_split_roles", c.swap_split_roles},
                      {"seed", c.seed},
                      {"workers", c.workers},
                      {"propensity", c.propensity},
                      {"hyper_method", c.hyper_method},
                      {"hyper_starts", c.hyper_starts},
                      {"hyper_budget", c.hyper_budget},
                      {"hyper_lower", c.hyper_lower},
                      {"hyper_upper", c.hyper_upper},
                      {"data", c.data},
                      {"schema", c.schema},
                      {"y_column", c.y_column},
                      {"d_column", c.d_column},
                      {"covariates", c.covariates},
                      {"treatment", c.treatment},
                      {"trim", c.trim},
                      {"trim_lo", c.trim_lo},
                      {"trim_hi", c.trim_hi},
                      {"design", c.design},
                      {"n", c.n},
                      {"p", c.p},
                      {"replications", c.replications},
                      {"c_sigma_list", c.c_sigma_list},
                      {"split_list", c.split_list},
                      {"methods", c.methods},
                      {"failure_budget", c.failure_budget},
                      {"draws_files", c.draws_files},
                      {"labels", c.labels},
                      {"bins", c.bins},
                      {"svg", c.svg},
                      {"out", c.out}};
  j["reference"] = c.has_reference ? nlohmann::json(c.reference) : nlohmann::json(nullptr);
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& item : j.items()) {
    if (!known_keys().count(item.key())) throw ConfigError("unknown config key '" + item.key() + "'");
  }
  RunConfig c;
  read(j, "functional", c.functional);
  read(j, "variant", c.variant);
  read(j, "draws", c.draws);
  read(j, "alpha", c.alpha);
  read(j, "c_sigma", c.c_sigma);
  read(j, "split", c.split);
  read(j, "swap_split_roles", c.swap_split_roles);
  read(j, "seed", c.seed);
  read(j, "workers", c.workers);
  read(j, "propensity", c.propensity);
  read(j, "hyper_method", c.hyper_method);
  read(j, "hyper_starts", c.hyper_starts);
  read(j, "hyper_budget", c.hyper_budget);
  read(j, "hyper_lower", c.hyper_lower);
  read(j, "hyper_upper", c.hyper_upper);
  read(j, "data", c.data);
  read(j, "schema", c.schema);
  read(j, "y_column", c.y_column);
  read(j, "d_column", c.d_column);
  read(j, "covariates", c.covariates);
  read(j, "treatment", c.treatment);
  read(j, "trim", c.trim);
  read(j, "trim_lo", c.trim_lo);
  read(j, "trim_hi", c.trim_hi);
  read(j, "design", c.design);
  read(j, "n", c.n);
  read(j, "p", c.p);
  read(j, "replications", c.replications);
  read(j, "c_sigma_list", c.c_sigma_list);
  read(j, "split_list", c.split_list);
  read(j, "methods", c.methods);
  read(j, "failure_budget", c.failure_budget);
  read(j, "draws_files", c.draws_files);
  read(j, "labels", c.labels);
  read(j, "bins", c.bins);
  read(j, "svg", c.svg);
  read(j, "out", c.out);
  if (auto it = j.find("reference"); it != j.end() && !it->is_null()) {
    read(j, "reference", c.reference);
    c.has_reference = true;
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace drbayes
