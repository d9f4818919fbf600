// Copyright (c) 2026 The streamg2p Authors
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
#include <string_view>
#include <utility>

namespace streamg2p {

// 64-bit FNV-1a, used to derive stream seeds from purpose strings and to
// fingerprint vocabularies in file headers.
inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// SplitMix64 step; used for seed derivation and stateless hashing.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Stateless hash of a small tuple of integers. Deterministic across platforms.
inline uint64_t hash_combine(uint64_t seed, uint64_t v) {
  uint64_t s = seed ^ (v + 0x9e3779b97f4a7c15ull);
  return splitmix64(s);
}

// Deterministic random source: a Mersenne Twister (mt19937_64, whose raw
// output sequence is fixed by the C++ standard) seeded through SplitMix64.
// Distributions are implemented here rather than with <random> adaptors,
// because the standard leaves those implementation-defined; this generator
// produces identical draws on every platform for a given seed.
//
// Streams are split by purpose ("init", "dropout", "data", ...) so that e.g.
// changing the dropout schedule cannot perturb parameter initialization.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed) {
    uint64_t s = seed;
    gen_.seed(splitmix64(s));
  }

  uint64_t seed() const { return seed_; }

  // Derives an independent stream for a named purpose.
  Rng stream(std::string_view purpose) const {
    return Rng(hash_combine(seed_, fnv1a64(purpose)));
  }

  // Derives an independent stream for an index (per-sentence generators).
  Rng substream(uint64_t index) const {
    return Rng(hash_combine(seed_ ^ 0x5bf0363546e41397ull, index));
  }

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], inclusive; rejection sampling keeps the
  // distribution exact and the draw sequence platform-independent.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<int64_t>(next_u64());  // full range
    uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return lo + static_cast<int64_t>(v % range);
  }

  // Standard normal via Box-Muller; the second draw of each pair is cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  // Fisher-Yates with uniform_int (std::shuffle is implementation-defined).
  template <typename It>
  void shuffle(It first, It last) {
    auto n = last - first;
    for (auto i = n - 1; i > 0; --i) {
      auto j = uniform_int(0, i);
      std::swap(first[i], first[j]);
    }
  }

 private:
  uint64_t seed_;
  std::mt19937_64 gen_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace streamg2p
