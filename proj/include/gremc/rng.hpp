// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "gremc/common.hpp"

namespace gremc {

/// SplitMix64 generator. Chosen over std::mt19937 + distributions because the
/// output stream here must be bit-identical across standard library versions;
/// every artifact reproducibility guarantee rests on it.
struct Rng {
  uint64_t state = 0;

  explicit Rng(uint64_t seed) : state(seed) {}

  uint64_t next() {
    uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1); safe under log().
  double uniform_open01() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  /// Box-Muller without the cached spare, so draw count stays predictable.
  double normal() {
    double u1 = uniform_open01();
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// Standard Gumbel(0,1): -log(-log u).
  double gumbel() { return -std::log(-std::log(uniform_open01())); }

  /// Unbiased integer in [0, n) via rejection.
  uint64_t below(uint64_t n) {
    if (n <= 1) return 0;
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t r;
    do {
      r = next();
    } while (r >= limit);
    return r % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }
};

/// Derives an independent named stream from a master seed. Changing how one
/// stage consumes randomness must not perturb any other stage, so each stage
/// pulls from its own stream ("mask", "synth", "init", "gumbel", ...).
inline Rng derive_stream(uint64_t master_seed, std::string_view name) {
  Rng mix(master_seed ^ fnv1a64(name));
  return Rng(mix.next());
}

/// Counter-suffixed variant for per-index streams (e.g. one per query).
inline Rng derive_stream(uint64_t master_seed, std::string_view name, uint64_t counter) {
  Rng mix(master_seed ^ fnv1a64(name));
  mix.state ^= 0x6A09E667F3BCC909ull * (counter + 1);
  return Rng(mix.next());
}

}  // namespace gremc
