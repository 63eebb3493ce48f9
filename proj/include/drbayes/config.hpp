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


#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "drbayes/data.hpp"
#include "drbayes/procedure.hpp"
#include "drbayes/simulation.hpp"

namespace drbayes {

/// Every knob of the three commands, with defaults. Loaded from JSON, then
/// overridden by command-line flags; the result is echoed as
/// effective_config.json and can be fed back unchanged.
struct RunConfig {
  // Procedure.
  std::string functional = "ate";
  std::string variant = "doubly-robust";
  std::size_t draws = 1000;
  double alpha = 0.05;
  double c_sigma = 1.0;
  std::string split = "full-reuse";
  bool swap_split_roles = false;
  std::uint64_t seed = 1;
  int workers = 1;
  std::string propensity = "logistic";
  std::string hyper_method = "gradient";
  int hyper_starts = 3;
  int hyper_budget = 60;
  double hyper_lower = 1e-3;
  double hyper_upper = 1e3;

  // estimate
  std::string data;
  std::string schema;
  std::string y_column = "y";
  std::string d_column = "d";
  std::vector<std::string> covariates;
  std::string treatment = "binary";
  bool trim = true;
  double trim_lo = 0.05;
  double trim_hi = 0.95;

  // simulate
  std::string design = "I";
  std::size_t n = 250;
  std::size_t p = 15;
  std::size_t replications = 200;
  std::vector<double> c_sigma_list;
  std::vector<std::string> split_list;
  std::vector<std::string> methods = {"uncorrected", "prior-corrected", "doubly-robust"};
  double failure_budget = 0.05;

  // plot
  std::vector<std::string> draws_files;
  std::vector<std::string> labels;
  double reference = 0.0;
  bool has_reference = false;
  int bins = 40;
  std::string svg = "posterior.svg";

  std::string out = "out";

  void validate() const;
  ProcedureConfig procedure() const;
  DataSchema data_schema() const;
  DesignSpec design_spec() const;
  MCConfig mc_config() const;
};

nlohmann::json to_json(const RunConfig& c);
/// Missing keys keep their defaults; unknown keys are configuration errors.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace drbayes
