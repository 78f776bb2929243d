/*
 * Copyright 2026 The SpotDiff Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SPOTDIFF_RNG_H_
#define SPOTDIFF_RNG_H_

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace spotdiff {

// Seeded pseudo-random stream. Identical (seed, stream_id) pairs produce
// identical draw sequences on every platform: the engine is mt19937_64 and
// all distributions below are implemented here rather than taken from
// <random>, whose distributions are implementation-defined.
class RngStream {
 public:
  RngStream(uint64_t seed, uint64_t stream_id);

  uint64_t seed() const { return seed_; }
  uint64_t stream_id() const { return stream_id_; }

  // Child stream keyed by `key`; does not advance this stream.
  RngStream Fork(uint64_t key) const;

  uint64_t NextU64() { return engine_(); }
  // Uniform in [0, 1) with 53 bits of resolution.
  double Uniform01();
  // Uniform in [lo, hi]; returns lo when lo == hi.
  double Uniform(double lo, double hi);
  // Log-uniform in [lo, hi], lo > 0.
  double LogUniform(double lo, double hi);
  // Uniform integer in [lo, hi] inclusive, unbiased.
  int64_t UniformInt(int64_t lo, int64_t hi);
  bool Bernoulli(double p);
  double Normal(double mean, double stddev);

  template <typename T>
  void Shuffle(std::span<T> items) {
    for (size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<size_t>(UniformInt(0, static_cast<int64_t>(i) - 1));
      std::swap(items[i - 1], items[j]);
    }
  }
  template <typename T>
  void Shuffle(std::vector<T>& items) {
    Shuffle(std::span<T>(items));
  }

 private:
  uint64_t seed_;
  uint64_t stream_id_;
  std::mt19937_64 engine_;
};

// SplitMix64 finalizer; used to derive stream keys.
uint64_t MixBits(uint64_t x);
uint64_t HashCombine(uint64_t a, uint64_t b);

}  // namespace spotdiff

#endif  // SPOTDIFF_RNG_H_
