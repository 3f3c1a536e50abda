// Copyright 2026 The fairguide Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "fairguide/common.hpp"

namespace fairguide {

/*! One round of the splitmix64 output function; advances the state. */
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/*!
 * Deterministic random stream.
 *
 * All randomness in the library flows through this class: mt19937_64 as the
 * source, with uniform/normal transforms implemented here rather than via
 * std::distributions (whose output sequences are not pinned by the standard).
 * Substreams derived from the same (seed, stream id) pair are identical;
 * distinct ids give empirically independent streams.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(mix_seed(seed)) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return gen_(); }

  /*! Uniform draw in [0, 1) with 53-bit resolution. */
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /*! Uniform draw in (0, 1]; never zero, safe under log(). */
  double uniform_pos() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  /*! Standard normal via Box–Muller; the paired draw is cached. */
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
    const double theta = 2.0 * M_PI * uniform();
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /*! Unbiased uniform integer in [0, n). */
  int uniform_int(int n) {
    require(n > 0, "uniform_int: n must be positive");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * bound;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < bound) {
      const std::uint64_t t = (-bound) % bound;
      while (lo < t) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * bound;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<int>(m >> 64);
  }

  /*! Vector of iid standard normals. */
  Vec normal_vec(int d) {
    Vec z(d);
    for (int i = 0; i < d; ++i) z[i] = normal();
    return z;
  }

  void fill_normal(Vec& z) {
    for (int i = 0; i < z.size(); ++i) z[i] = normal();
  }

  /*!
   * Independent substream for (this stream's seed, id). Derivation mixes the
   * parent seed and the id through two splitmix64 rounds, so nested
   * derivations (chain/job trees) stay decorrelated.
   */
  Rng substream(std::uint64_t id) const {
    std::uint64_t s = seed_;
    const std::uint64_t a = splitmix64_next(s);
    s = a ^ (0xD1B54A32D192ED03ull * (id + 1));
    return Rng(splitmix64_next(s));
  }

 private:
  static std::uint64_t mix_seed(std::uint64_t seed) {
    // Decouples the engine's internal seeding from the raw user seed so that
    // seeds 0 and 1 do not share low-entropy state.
    std::uint64_t s = seed;
    return splitmix64_next(s);
  }

  std::uint64_t seed_;
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fairguide
