/* Copyright 2026 The Motion Scaling Lab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Deterministic random utilities. The standard library distributions are
// implementation-defined, so all transforms from raw engine output to
// uniform/normal/categorical draws are written out here; a given seed
// produces the same stream on every platform.

#ifndef MSL_RANDOM_HPP_
#define MSL_RANDOM_HPP_

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "msl/common.hpp"

namespace msl {

// SplitMix64 step; used to derive independent sub-seeds from (seed, tags).
inline u64 splitmix64(u64 x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline u64 mix_seed(u64 seed, u64 a, u64 b = 0, u64 c = 0) {
  u64 s = splitmix64(seed ^ 0x6d736c5f726e67ull);  // tag so raw seeds do not collide
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ b);
  return splitmix64(s ^ c);
}

class Rng {
 public:
  explicit Rng(u64 seed) : engine_(seed) {}

  u64 next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n); n must be positive. Rejection sampling keeps
  // the draw unbiased.
  i64 uniform_int(i64 n) {
    const u64 un = static_cast<u64>(n);
    const u64 limit = std::numeric_limits<u64>::max() - std::numeric_limits<u64>::max() % un;
    u64 v = engine_();
    while (v >= limit) v = engine_();
    return static_cast<i64>(v % un);
  }

  // Box-Muller without state caching so the stream stays position-independent.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Index draw from unnormalized non-negative weights by inverse CDF.
  int categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    const double u = uniform() * total;
    double acc = 0.0;
    for (size_t i = 0; i + 1 < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (i64 i = static_cast<i64>(v.size()) - 1; i > 0; --i) {
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(uniform_int(i + 1))]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace msl

#endif  // MSL_RANDOM_HPP_
