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

#include <array>
#include <cstdint>
#include <limits>

namespace drbayes {

/// Philox4x32-10 counter-based generator.
///
/// A stream is identified by a 64-bit key and a 64-bit stream id; the
/// remaining 64 counter bits index blocks inside the stream. Two streams with
/// distinct (key, stream id) never overlap, which is what makes parallel
/// replications reproducible regardless of scheduling.
class Philox {
 public:
  using result_type = std::uint64_t;

  Philox(std::uint64_t key, std::uint64_t stream);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Position the generator at block `block` of its stream.
  void seek(std::uint64_t block);

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
};

/// Derive a child stream for `(key, a, b)`; used to key per-replication and
/// per-draw generators.
Philox make_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

/// Uniform on the open interval (0, 1) with 53 bits of resolution.
double uniform_open(Philox& rng);

/// Standard normal via Box-Muller; one variate per call.
double standard_normal(Philox& rng);

/// Exp(1) draw.
double standard_exponential(Philox& rng);

/// Uniform integer on [0, bound).
std::uint64_t uniform_index(Philox& rng, std::uint64_t bound);

}  // namespace drbayes
