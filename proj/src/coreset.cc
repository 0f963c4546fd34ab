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

#include "fedsim/coreset.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include <fmt/format.h>

namespace fedsim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <typename Vec>
DistMatrix PairwiseL2(std::span<const Vec> vectors, DistanceKind kind) {
  const size_t n = vectors.size();
  DistMatrix dist(n, kind);
  if (n == 0) return dist;
  const size_t len = vectors[0].size();
  for (const auto& v : vectors) {
    if (v.size() != len) throw CoresetError("pairwise distances over vectors of unequal length");
  }
  for (size_t i = 0; i < n; ++i) {
    const double* a = vectors[i].data();
    for (size_t j = i + 1; j < n; ++j) {
      const double* b = vectors[j].data();
      double s = 0.0;
      for (size_t t = 0; t < len; ++t) {
        const double diff = a[t] - b[t];
        s += diff * diff;
      }
      dist.SetSymmetric(i, j, std::sqrt(s));
    }
  }
  return dist;
}

// Nearest and second-nearest medoid (by position) for every point.
struct NearestCache {
  std::vector<size_t> near;
  std::vector<double> dnear;
  std::vector<double> dsec;

  void Rebuild(const DistMatrix& dist, const std::vector<size_t>& medoids) {
    const size_t n = dist.n();
    near.assign(n, 0);
    dnear.assign(n, kInf);
    dsec.assign(n, kInf);
    for (size_t p = 0; p < medoids.size(); ++p) {
      const double* row = dist.row(medoids[p]);
      for (size_t j = 0; j < n; ++j) {
        const double d = row[j];
        if (d < dnear[j]) {
          dsec[j] = dnear[j];
          dnear[j] = d;
          near[j] = p;
        } else if (d < dsec[j]) {
          dsec[j] = d;
        }
      }
    }
  }

  double Objective() const { return std::accumulate(dnear.begin(), dnear.end(), 0.0); }
};

}  // namespace

std::string ToString(DistanceKind kind) {
  switch (kind) {
    case DistanceKind::kExact:
      return "exact";
    case DistanceKind::kEuclidProxy:
      return "euclid_proxy";
    case DistanceKind::kLastLayerProxy:
      return "lastlayer_proxy";
  }
  return "unknown";
}

DistanceKind ParseDistanceKind(const std::string& name) {
  if (name == "exact") return DistanceKind::kExact;
  if (name == "euclid_proxy") return DistanceKind::kEuclidProxy;
  if (name == "lastlayer_proxy") return DistanceKind::kLastLayerProxy;
  throw CoresetError("unknown distance kind '" + name + "'");
}

DistMatrix DistMatrix::FromEntries(size_t n, DistanceKind kind, std::vector<double> entries) {
  if (entries.size() != n * n) throw CoresetError("distance entries do not form an n x n matrix");
  for (size_t i = 0; i < n; ++i) {
    if (entries[i * n + i] != 0.0) throw CoresetError("distance matrix diagonal must be zero");
    for (size_t j = 0; j < n; ++j) {
      const double v = entries[i * n + j];
      if (!std::isfinite(v) || v < 0.0) throw CoresetError("distances must be finite and non-negative");
      if (v != entries[j * n + i]) throw CoresetError("distance matrix must be symmetric");
    }
  }
  DistMatrix dist(n, kind);
  dist.d_ = std::move(entries);
  return dist;
}

WeightedView Coreset::View() const {
  WeightedView view(medoids.size());
  for (size_t p = 0; p < medoids.size(); ++p) view[p] = {medoids[p], weights[p]};
  return view;
}

int64_t Budget(size_t m, double c, double tau, int epochs) {
  if (epochs < 2) throw CoresetError("coreset budget needs E >= 2");
  if (!(c > 0.0) || !(tau > 0.0)) throw CoresetError("coreset budget needs c > 0 and tau > 0");
  const auto full = static_cast<int64_t>(m);
  const double capacity = c * tau;
  if (!std::isfinite(capacity)) return full;
  const double b = std::floor((capacity - static_cast<double>(m)) / static_cast<double>(epochs - 1));
  if (b >= static_cast<double>(full)) return full;
  return static_cast<int64_t>(b);
}

DistMatrix DistExact(std::span<const GradVector> grads) {
  return PairwiseL2(grads, DistanceKind::kExact);
}

DistMatrix DistEuclidProxy(std::span<const std::vector<double>> features) {
  return PairwiseL2(features, DistanceKind::kEuclidProxy);
}

DistMatrix DistEuclidProxy(std::span<const Sample> samples) {
  std::vector<std::span<const double>> rows;
  rows.reserve(samples.size());
  for (const auto& s : samples) rows.emplace_back(s.features);
  return PairwiseL2(std::span<const std::span<const double>>(rows), DistanceKind::kEuclidProxy);
}

DistMatrix DistLastLayerProxy(std::span<const LastLayerGrad> last_layer_grads) {
  return PairwiseL2(last_layer_grads, DistanceKind::kLastLayerProxy);
}

double KMedoidsObjective(const DistMatrix& dist, std::span<const size_t> medoids) {
  if (medoids.empty()) throw CoresetError("objective needs at least one medoid");
  double total = 0.0;
  for (size_t j = 0; j < dist.n(); ++j) {
    double best = kInf;
    for (size_t s : medoids) best = std::min(best, dist(j, s));
    total += best;
  }
  return total;
}

WeightAssignment CoresetWeights(const DistMatrix& dist, std::span<const size_t> medoids) {
  const size_t n = dist.n();
  if (medoids.empty()) throw CoresetError("coreset weights need at least one medoid");
  std::vector<long> position_of(n, -1);
  for (size_t p = 0; p < medoids.size(); ++p) {
    if (medoids[p] >= n) throw CoresetError("medoid index out of range");
    if (position_of[medoids[p]] >= 0) throw CoresetError("duplicate medoid index");
    position_of[medoids[p]] = static_cast<long>(p);
  }

  WeightAssignment out{std::vector<int>(medoids.size(), 0), std::vector<size_t>(n, 0)};
  for (size_t j = 0; j < n; ++j) {
    size_t best = 0;
    if (position_of[j] >= 0) {
      best = static_cast<size_t>(position_of[j]);
    } else {
      double dbest = dist(j, medoids[0]);
      for (size_t p = 1; p < medoids.size(); ++p) {
        const double d = dist(j, medoids[p]);
        if (d < dbest) {
          dbest = d;
          best = p;
        }
      }
    }
    out.assignment[j] = best;
    ++out.weights[best];
  }
  return out;
}

Coreset KMedoids(const DistMatrix& dist, size_t k) {
  const size_t n = dist.n();
  if (k < 1 || k > n) throw CoresetError(fmt::format("k-medoids needs 1 <= k <= n (k={}, n={})", k, n));

  std::vector<size_t> medoids;
  medoids.reserve(k);
  std::vector<bool> is_medoid(n, false);

  // BUILD. The first medoid minimizes the row sum; each later one maximizes
  // the reduction sum_j max(0, dnear_j - d(c, j)). Reductions only shrink as
  // medoids are added, so stale values are upper bounds and are refreshed
  // lazily; the pick equals a full rescan (ties to the lowest index).
  std::vector<double> dnear(n, kInf);
  {
    size_t first = 0;
    double best_sum = kInf;
    for (size_t c = 0; c < n; ++c) {
      const double* row = dist.row(c);
      double sum = 0.0;
      for (size_t j = 0; j < n; ++j) sum += row[j];
      if (sum < best_sum) {
        best_sum = sum;
        first = c;
      }
    }
    medoids.push_back(first);
    is_medoid[first] = true;
    std::copy(dist.row(first), dist.row(first) + n, dnear.begin());
  }
  auto gain_of = [&](size_t c) {
    const double* row = dist.row(c);
    double gain = 0.0;
    for (size_t j = 0; j < n; ++j) {
      if (row[j] < dnear[j]) gain += dnear[j] - row[j];
    }
    return gain;
  };
  struct Entry {
    double gain;
    size_t index;
    size_t stamp;
  };
  auto lower_priority = [](const Entry& a, const Entry& b) {
    return a.gain < b.gain || (a.gain == b.gain && a.index > b.index);
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(lower_priority)> queue(lower_priority);
  if (k > 1) {
    for (size_t c = 0; c < n; ++c) {
      if (!is_medoid[c]) queue.push({gain_of(c), c, 1});
    }
  }
  for (size_t step = 1; step < k; ++step) {
    while (queue.top().stamp != step) {
      Entry e = queue.top();
      queue.pop();
      queue.push({gain_of(e.index), e.index, step});
    }
    const size_t pick = queue.top().index;
    queue.pop();
    medoids.push_back(pick);
    is_medoid[pick] = true;
    const double* row = dist.row(pick);
    for (size_t j = 0; j < n; ++j) dnear[j] = std::min(dnear[j], row[j]);
  }

  // Swap phase. Candidates are scanned cyclically in ascending index order;
  // for each candidate the best medoid to drop is found in O(n) from the
  // nearest/second-nearest cache, and the swap is applied immediately if it
  // strictly improves the objective. Stops after n consecutive candidates
  // without an improving swap.
  if (k < n) {
    NearestCache cache;
    cache.Rebuild(dist, medoids);
    double objective = cache.Objective();

    std::vector<double> removal_loss(k, 0.0);
    auto rebuild_removal = [&]() {
      std::fill(removal_loss.begin(), removal_loss.end(), 0.0);
      if (k == 1) return;
      for (size_t j = 0; j < n; ++j) removal_loss[cache.near[j]] += cache.dsec[j] - cache.dnear[j];
    };
    rebuild_removal();

    std::vector<double> delta(k);
    size_t since_last_swap = 0;
    size_t candidate = 0;
    const size_t max_swaps = 100 * n * k + 1000;
    size_t swaps = 0;
    while (since_last_swap < n && swaps < max_swaps) {
      const size_t x = candidate;
      candidate = (candidate + 1) % n;
      ++since_last_swap;
      if (is_medoid[x]) continue;

      const double* row = dist.row(x);
      double shared = 0.0;
      if (k == 1) {
        for (size_t j = 0; j < n; ++j) shared += row[j] - cache.dnear[j];
        delta[0] = 0.0;
      } else {
        delta = removal_loss;
        for (size_t j = 0; j < n; ++j) {
          const double dxj = row[j];
          if (dxj < cache.dnear[j]) {
            shared += dxj - cache.dnear[j];
            delta[cache.near[j]] += cache.dnear[j] - cache.dsec[j];
          } else if (dxj < cache.dsec[j]) {
            delta[cache.near[j]] += dxj - cache.dsec[j];
          }
        }
      }
      size_t drop = 0;
      for (size_t p = 1; p < k; ++p) {
        if (delta[p] < delta[drop]) drop = p;
      }
      const double change = delta[drop] + shared;
      if (change < -kSwapRelTol * objective) {
        is_medoid[medoids[drop]] = false;
        medoids[drop] = x;
        is_medoid[x] = true;
        cache.Rebuild(dist, medoids);
        objective = cache.Objective();
        rebuild_removal();
        since_last_swap = 0;
        ++swaps;
      }
    }
  }

  std::sort(medoids.begin(), medoids.end());
  Coreset out;
  auto wa = CoresetWeights(dist, medoids);
  out.medoids = std::move(medoids);
  out.weights = std::move(wa.weights);
  out.assignment = std::move(wa.assignment);
  out.objective = KMedoidsObjective(dist, out.medoids);
  out.kind = dist.kind();
  return out;
}

double CoresetGradientError(std::span<const GradVector> full_grads, const Coreset& coreset) {
  const size_t m = full_grads.size();
  if (m == 0) throw CoresetError("coreset error over an empty set");
  const size_t len = full_grads[0].size();
  std::vector<double> diff(len, 0.0);
  for (const auto& g : full_grads) {
    if (g.size() != len) throw CoresetError("gradients of unequal length");
    for (size_t i = 0; i < len; ++i) diff[i] += g[i];
  }
  for (size_t p = 0; p < coreset.medoids.size(); ++p) {
    if (coreset.medoids[p] >= m) throw CoresetError("coreset index out of range");
    const auto& g = full_grads[coreset.medoids[p]];
    const double w = coreset.weights[p];
    for (size_t i = 0; i < len; ++i) diff[i] -= w * g[i];
  }
  return Norm(diff) / static_cast<double>(m);
}

double CoresetGradientError(const ParamVector& params, std::span<const Sample> samples,
                            const Coreset& coreset) {
  const size_t m = samples.size();
  if (m == 0) throw CoresetError("coreset error over an empty set");
  std::vector<double> coeff(m, 1.0);
  for (size_t p = 0; p < coreset.medoids.size(); ++p) {
    if (coreset.medoids[p] >= m) throw CoresetError("coreset index out of range");
    coeff[coreset.medoids[p]] -= coreset.weights[p];
  }
  std::vector<double> diff(params.values.size(), 0.0);
  for (size_t j = 0; j < m; ++j) {
    if (coeff[j] != 0.0) AccumulateDataGrad(params, samples[j], coeff[j], diff);
  }
  return Norm(diff) / static_cast<double>(m);
}

std::string Dump(const DistMatrix& dist) {
  std::string out = fmt::format("distmatrix kind={} n={}\n", ToString(dist.kind()), dist.n());
  for (size_t i = 0; i < dist.n(); ++i) {
    for (size_t j = 0; j < dist.n(); ++j) {
      if (j > 0) out += ' ';
      out += fmt::format("{}", dist(i, j));
    }
    out += '\n';
  }
  return out;
}

std::string Dump(const Coreset& coreset) {
  std::string out = fmt::format("coreset kind={} size={} objective={}\n", ToString(coreset.kind),
                                coreset.size(), coreset.objective);
  for (size_t p = 0; p < coreset.medoids.size(); ++p) {
    out += fmt::format("medoid {} weight {}\n", coreset.medoids[p], coreset.weights[p]);
  }
  return out;
}

}  // namespace fedsim
