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
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsim/data.h"
#include "fedsim/model.h"

namespace fedsim {

// How pairwise gradient dissimilarity is measured:
//   kExact          ||grad_j(w) - grad_k(w)||, full parameter gradients
//   kEuclidProxy    ||x_j - x_k||, raw features; independent of w
//   kLastLayerProxy ||dL_j/dz - dL_k/dz||, gradients w.r.t. the logits
enum class DistanceKind { kExact, kEuclidProxy, kLastLayerProxy };

std::string ToString(DistanceKind kind);
DistanceKind ParseDistanceKind(const std::string& name);

class CoresetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense symmetric n x n distance matrix with zero diagonal.
class DistMatrix {
 public:
  DistMatrix() = default;
  DistMatrix(size_t n, DistanceKind kind) : n_(n), kind_(kind), d_(n * n, 0.0) {}

  // Validates symmetry, zero diagonal and finite non-negative entries.
  static DistMatrix FromEntries(size_t n, DistanceKind kind, std::vector<double> entries);

  size_t n() const { return n_; }
  DistanceKind kind() const { return kind_; }
  double operator()(size_t i, size_t j) const { return d_[i * n_ + j]; }
  const double* row(size_t i) const { return &d_[i * n_]; }
  void SetSymmetric(size_t i, size_t j, double v) {
    d_[i * n_ + j] = v;
    d_[j * n_ + i] = v;
  }

 private:
  size_t n_ = 0;
  DistanceKind kind_ = DistanceKind::kExact;
  std::vector<double> d_;
};

// Weighted coreset over a client's index set V. `weights[p]` is the size of
// the cluster of `medoids[p]`; `assignment[j]` is the position (into
// `medoids`) that sample j maps to.
struct Coreset {
  std::vector<size_t> medoids;
  std::vector<int> weights;
  std::vector<size_t> assignment;
  double objective = 0.0;
  DistanceKind kind = DistanceKind::kExact;

  size_t size() const { return medoids.size(); }
  WeightedView View() const;
};

// Coreset size that fits the deadline after one full epoch:
// min(floor((c*tau - m) / (E - 1)), m). Non-positive means the client cannot
// afford the full first epoch plus any coreset epoch. Infinite tau gives m.
int64_t Budget(size_t m, double c, double tau, int epochs);

DistMatrix DistExact(std::span<const GradVector> grads);
DistMatrix DistEuclidProxy(std::span<const std::vector<double>> features);
DistMatrix DistEuclidProxy(std::span<const Sample> samples);
DistMatrix DistLastLayerProxy(std::span<const LastLayerGrad> last_layer_grads);

// sum_j min_{s in medoids} d(j, s).
double KMedoidsObjective(const DistMatrix& dist, std::span<const size_t> medoids);

struct WeightAssignment {
  std::vector<int> weights;
  std::vector<size_t> assignment;
};

// Every medoid is assigned to itself; every other point to its nearest
// medoid, ties to the lowest position in `medoids`.
WeightAssignment CoresetWeights(const DistMatrix& dist, std::span<const size_t> medoids);

// Greedy BUILD followed by eager single-swap local search (the FasterPAM
// swap rule). Deterministic. Returns medoids in ascending index order.
Coreset KMedoids(const DistMatrix& dist, size_t k);

// Relative tolerance below which a swap is not counted as an improvement.
inline constexpr double kSwapRelTol = 1e-9;

// (1/m) * || sum_j g_j - sum_p weights[p] * g_{medoids[p]} ||.
double CoresetGradientError(std::span<const GradVector> full_grads, const Coreset& coreset);

// The same quantity evaluated directly at `params` in one pass over the
// samples: (1/m) * || sum_j (1 - delta_j) grad CE_j ||, delta_j = 0 for
// non-medoids. The ridge term cancels because the weights sum to m.
double CoresetGradientError(const ParamVector& params, std::span<const Sample> samples,
                            const Coreset& coreset);

// Debug dumps, one line per row / medoid.
std::string Dump(const DistMatrix& dist);
std::string Dump(const Coreset& coreset);

}  // namespace fedsim
