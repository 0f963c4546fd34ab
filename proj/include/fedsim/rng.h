/*
 * Copyright 2026 The fedsim Authors.
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
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fedsim {

// Purpose tags mixed into stream ids so that independent consumers of the
// same seed never share a sequence. Values are part of the reproducibility
// contract: never renumber.
enum class StreamPurpose : uint64_t {
  kClientSizes = 1,
  kClientModel = 2,
  kClientFeatures = 3,
  kTestSplit = 4,
  kLabelShards = 5,
  kCapabilities = 6,
  kSelection = 7,
  kEpochShuffle = 8,
  kInit = 9,
  kLipschitzProbe = 10,
};

// splitmix64 finalizer; used for seeding and for hashing stream ids.
uint64_t Mix64(uint64_t x);

// Stream id = Mix64 chain over (seed, purpose, a, b). Order-sensitive.
uint64_t StreamId(uint64_t seed, StreamPurpose purpose, uint64_t a = 0, uint64_t b = 0);

// xoshiro256** with splitmix64 state expansion. All derived distributions
// are implemented here (not via <random>) so sequences are identical across
// standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  // Independent stream for (seed, purpose, a, b).
  static Rng ForStream(uint64_t seed, StreamPurpose purpose, uint64_t a = 0, uint64_t b = 0) {
    return Rng(StreamId(seed, purpose, a, b));
  }

  uint64_t NextU64();

  // Uniform in [0, 1) with 53 random bits.
  double Uniform();

  // Uniform integer in [0, n). n must be > 0. Lemire's nearly-divisionless method.
  uint64_t UniformInt(uint64_t n);

  // Standard normal via the Marsaglia polar method (spare value cached).
  double Normal();
  double Normal(double mean, double stddev) { return mean + stddev * Normal(); }

  double LogNormal(double mu, double sigma);

  // Fisher-Yates permutation of [0, n).
  std::vector<size_t> Permutation(size_t n);

  template <typename T>
  void Shuffle(std::span<T> items) {
    for (size_t i = items.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(UniformInt(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fedsim
