// Copyright 2026 The HGA Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace hga {

/// Counter-based generator: output i is a keyed mix of (key, i), so any draw
/// can be reproduced from the seed and the draw index alone.
///
/// Draw order inside the engine is fixed per operation (row-major over the
/// tensor being sampled) which makes every training run reproducible.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed = 0) : key_(mix(seed ^ 0x9E3779B97F4A7C15ULL)) {}

  std::uint64_t next_u64() { return mix(key_ + 0xD1B54A32D192ED03ULL * ++counter_); }

  /// Uniform in the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Lemire's multiply-shift; bias is < 2^-64 * n and irrelevant here.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Standard normal via Box-Muller (one value per call, no caching, so the
  /// stream position stays a simple function of the number of draws).
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Gumbel(0, 1).
  double gumbel() { return -std::log(-std::log(uniform())); }

  /// Independent child stream, e.g. one per finetuning trial.
  CounterRng split(std::uint64_t stream) const {
    CounterRng child(0);
    child.key_ = mix(key_ ^ mix(stream + 0x632BE59BD9B4E019ULL));
    return child;
  }

  std::uint64_t draws() const { return counter_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace hga
