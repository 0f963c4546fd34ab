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

// Reference implementations for the tests: plain loops that do not call the
// library's numerical kernels.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "fedsim/coreset.h"
#include "fedsim/data.h"
#include "fedsim/model.h"
#include "fedsim/rng.h"

namespace fedsim::oracle {

// Logits of the model at `x`, computed from the documented layout.
inline std::vector<double> NaiveLogits(const ParamVector& p, const std::vector<double>& x) {
  const ModelSpec& s = p.spec;
  const int d = s.d_feat;
  if (s.kind == ModelKind::kLogistic) {
    std::vector<double> z(s.n_classes);
    for (int r = 0; r < s.n_classes; ++r) {
      double acc = p.values[static_cast<size_t>(r) * (d + 1) + d];
      for (int j = 0; j < d; ++j) acc += p.values[static_cast<size_t>(r) * (d + 1) + j] * x[j];
      z[r] = acc;
    }
    return z;
  }
  const int h = s.hidden;
  std::vector<double> hid(h);
  for (int r = 0; r < h; ++r) {
    double acc = p.values[static_cast<size_t>(r) * (d + 1) + d];
    for (int j = 0; j < d; ++j) acc += p.values[static_cast<size_t>(r) * (d + 1) + j] * x[j];
    hid[r] = std::tanh(acc);
  }
  const size_t off = static_cast<size_t>(h) * (d + 1);
  std::vector<double> z(s.n_classes);
  for (int r = 0; r < s.n_classes; ++r) {
    double acc = p.values[off + static_cast<size_t>(r) * (h + 1) + h];
    for (int j = 0; j < h; ++j) acc += p.values[off + static_cast<size_t>(r) * (h + 1) + j] * hid[j];
    z[r] = acc;
  }
  return z;
}

inline std::vector<double> NaiveSoftmax(const std::vector<double>& z) {
  const double mx = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - mx);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

// Cross-entropy plus (l2/2)||w||^2.
inline double NaiveLoss(const ParamVector& p, const Sample& s) {
  const auto z = NaiveLogits(p, s.features);
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - mx);
  const double ce = std::log(sum) + mx - z[s.label];
  double sq = 0.0;
  for (double v : p.values) sq += v * v;
  return ce + 0.5 * p.spec.l2 * sq;
}

// Central differences of `f` at `w`, step h.
inline std::vector<double> CentralDifferences(const std::function<double(const ParamVector&)>& f,
                                              const ParamVector& w, double h) {
  std::vector<double> g(w.values.size());
  ParamVector probe = w;
  for (size_t i = 0; i < g.size(); ++i) {
    const double keep = probe.values[i];
    probe.values[i] = keep + h;
    const double up = f(probe);
    probe.values[i] = keep - h;
    const double down = f(probe);
    probe.values[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double RelativeError(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += std::max(a[i] * a[i], b[i] * b[i]);
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

// Pairwise Euclidean distances, double loop with explicit subtraction.
inline std::vector<std::vector<double>> NaiveDistances(const std::vector<std::vector<double>>& v) {
  const size_t n = v.size();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (size_t t = 0; t < v[i].size(); ++t) s += (v[i][t] - v[j][t]) * (v[i][t] - v[j][t]);
      d[i][j] = std::sqrt(s);
    }
  }
  return d;
}

inline double Objective(const DistMatrix& d, const std::vector<size_t>& medoids) {
  double total = 0.0;
  for (size_t j = 0; j < d.n(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (size_t m : medoids) best = std::min(best, d(j, m));
    total += best;
  }
  return total;
}

// Minimum objective over all C(n, k) medoid sets.
inline double BruteForceOptimum(const DistMatrix& d, size_t k) {
  const size_t n = d.n();
  std::vector<bool> pick(n, false);
  std::fill(pick.begin(), pick.begin() + static_cast<long>(k), true);
  double best = std::numeric_limits<double>::infinity();
  do {
    std::vector<size_t> s;
    for (size_t i = 0; i < n; ++i) {
      if (pick[i]) s.push_back(i);
    }
    best = std::min(best, Objective(d, s));
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return best;
}

// True if no (medoid, non-medoid) exchange lowers the objective by more than
// `rel_tol` times its value.
inline bool SingleSwapOptimal(const DistMatrix& d, const std::vector<size_t>& medoids, double rel_tol) {
  const double base = Objective(d, medoids);
  std::vector<bool> in(d.n(), false);
  for (size_t m : medoids) in[m] = true;
  for (size_t p = 0; p < medoids.size(); ++p) {
    for (size_t x = 0; x < d.n(); ++x) {
      if (in[x]) continue;
      std::vector<size_t> s = medoids;
      s[p] = x;
      if (Objective(d, s) < base - rel_tol * base) return false;
    }
  }
  return true;
}

inline DistMatrix RandomSymmetric(size_t n, Rng& rng) {
  std::vector<double> e(n * n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      const double v = rng.Uniform() * 10.0;
      e[i * n + j] = v;
      e[j * n + i] = v;
    }
  }
  return DistMatrix::FromEntries(n, DistanceKind::kExact, std::move(e));
}

inline std::vector<Sample> RandomSamples(size_t m, int d, int n_classes, Rng& rng) {
  std::vector<Sample> out(m);
  for (auto& s : out) {
    s.features.resize(d);
    for (auto& v : s.features) v = rng.Normal();
    s.label = static_cast<int>(rng.UniformInt(static_cast<uint64_t>(n_classes)));
  }
  return out;
}

inline ParamVector RandomParams(const ModelSpec& spec, double scale, Rng& rng) {
  ParamVector p{std::vector<double>(spec.ParamCount()), spec};
  for (auto& v : p.values) v = rng.Normal(0.0, scale);
  return p;
}

inline std::vector<double> Ranks(const std::vector<double>& v) {
  std::vector<size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j);
    for (size_t t = i; t <= j; ++t) r[idx[t]] = avg;
    i = j + 1;
  }
  return r;
}

inline double Spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = Ranks(a), rb = Ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double num = 0.0, da = 0.0, db = 0.0;
  for (size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  return num / std::sqrt(da * db);
}

}  // namespace fedsim::oracle
