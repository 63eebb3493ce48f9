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

#include <string>

#include <json.hpp>

#include "drbayes/data.hpp"
#include "drbayes/nuisance.hpp"
#include "drbayes/procedure.hpp"

namespace drbayes {

enum class FrequentistMethod { kAIPW, kPlugIn };

std::string to_string(FrequentistMethod m);

struct FrequentistEstimate {
  double estimate = 0.0;
  double se = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double alpha = 0.05;
  FrequentistMethod method = FrequentistMethod::kAIPW;
  double length() const { return ci_upper - ci_lower; }
  bool covers(double value) const { return ci_lower <= value && value <= ci_upper; }
};

/// Standard normal quantile function.
double normal_quantile(double p);

/// Augmented inverse-propensity-weighted estimate of the ATE (or the MAR mean)
/// with an influence-function standard error. The standard error uses the
/// 1/n variance of the per-observation influence terms.
FrequentistEstimate aipw(const Dataset& data, const OutcomeFunction& m_hat,
                         const RieszRepresenter& gamma_hat, double alpha = 0.05,
                         Functional functional = Functional::kATE);

/// Mean contrast of m_hat with a Wald interval from the contrast's spread.
FrequentistEstimate plug_in(const Dataset& data, const OutcomeFunction& m_hat, double alpha = 0.05,
                            Functional functional = Functional::kATE);

nlohmann::json to_json(const FrequentistEstimate& e);

}  // namespace drbayes
