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

#include "fedsim/analysis.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <ostream>

#include <fmt/format.h>
#include <json.hpp>

namespace fedsim {

namespace {

bool FiniteNonNegative(double v) { return std::isfinite(v) && v >= 0.0; }

double Dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Ridge-regularized mean loss and its gradient in one pass.
double LossAndGrad(const ParamVector& w, std::span<const Sample> samples, std::vector<double>& grad) {
  grad.assign(w.values.size(), 0.0);
  double ce = 0.0;
  for (const auto& s : samples) ce += AccumulateDataGrad(w, s, 1.0, grad);
  const auto m = static_cast<double>(samples.size());
  const double l2 = w.spec.l2;
  for (size_t i = 0; i < grad.size(); ++i) grad[i] = grad[i] / m + l2 * w.values[i];
  return ce / m + 0.5 * l2 * Dot(w.values, w.values);
}

void RequireConvex(const ModelSpec& spec) {
  spec.Validate();
  if (spec.kind != ModelKind::kLogistic) throw AnalysisError("bound analysis needs the convex (logistic) model");
  if (!(spec.l2 > 0.0)) throw AnalysisError("bound analysis needs l2 > 0 for strong convexity");
}

nlohmann::json ToJson(const TheoryConstants& c) {
  return {{"mu", c.mu},       {"L", c.L},         {"eps", c.eps}, {"D", c.D},   {"Gamma", c.Gamma},
          {"E", c.E},         {"R", c.R},         {"K", c.K},     {"w_star_dist0", c.w_star_dist0},
          {"alpha", c.alpha}, {"beta", c.beta},   {"A1", c.A1},   {"A2", c.A2}, {"A3", c.A3},
          {"A4", c.A4},       {"A5", c.A5}};
}

nlohmann::json ToJson(const BoundReport& r) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : r.steps) {
    steps.push_back({{"round", s.round}, {"t", s.t}, {"empirical", s.empirical}, {"bound", s.bound},
                     {"margin", s.margin}});
  }
  return {{"constants", ToJson(r.constants)},
          {"final_bound", TheoreticalBound(r.constants, r.constants.R)},
          {"identities_hold", ConstantIdentitiesHold(r.constants)},
          {"steps", steps},
          {"verdict", r.pass ? "pass" : "fail"}};
}

}  // namespace

TheoryConstants TheoryConstants::Compute(double mu, double L, double eps, double D, double Gamma, int E,
                                         int R, size_t K, double w_star_dist0) {
  if (!(mu > 0.0) || !(L >= mu) || !std::isfinite(L)) throw AnalysisError("constants need 0 < mu <= L");
  if (!FiniteNonNegative(eps) || !FiniteNonNegative(D) || !FiniteNonNegative(Gamma) ||
      !FiniteNonNegative(w_star_dist0)) {
    throw AnalysisError("eps, D, Gamma and the initial distance must be finite and >= 0");
  }
  if (E < 1 || R < 0 || K < 1) throw AnalysisError("constants need E >= 1, R >= 0, K >= 1");
  TheoryConstants c;
  c.mu = mu;
  c.L = L;
  c.eps = eps;
  c.D = D;
  c.Gamma = Gamma;
  c.E = E;
  c.R = R;
  c.K = K;
  c.w_star_dist0 = w_star_dist0;

  const double e = E;
  c.alpha = 2.0 / mu;
  c.beta = std::max(e, 8.0 * L / mu);
  c.A1 = 2.0 * eps * D / (mu * mu);
  c.A3 = 2.0 * eps * D / mu;
  c.A4 = 8.0 * (e - 1.0) * (e - 1.0) * D * D + 6.0 * L * Gamma + eps * eps + 2.0 * eps * D;
  c.A5 = 4.0 * e * e * D * D / static_cast<double>(K) + c.A4;
  c.A2 = std::max(c.beta * w_star_dist0, 4.0 * c.A5 / (mu * mu));
  return c;
}

double TheoryConstants::BoundAt(double t) const { return A1 + A2 / (t + beta); }

double TheoreticalBound(const TheoryConstants& consts, int R) {
  return consts.BoundAt(static_cast<double>(consts.E) * static_cast<double>(R));
}

bool ConstantIdentitiesHold(const TheoryConstants& c, double tol) {
  const double target = c.mu * c.A1;
  const bool a3 = std::abs(c.A3 - target) <= tol * std::max(std::abs(target), 1e-300);
  const double floor = 4.0 * c.A5 / (c.mu * c.mu);
  return a3 && c.A2 >= floor * (1.0 - tol);
}

SmoothnessEstimate EstimateMuL(const ModelSpec& spec, std::span<const Sample> samples, size_t pairs,
                               uint64_t seed) {
  RequireConvex(spec);
  if (samples.empty()) throw AnalysisError("smoothness estimate over an empty sample set");
  if (pairs == 0) throw AnalysisError("smoothness estimate needs at least one pair");
  constexpr size_t kGroup = 10;
  constexpr double kBaseScale = 0.1;
  constexpr double kStep = 1e-2;

  Rng rng = Rng::ForStream(seed, StreamPurpose::kLipschitzProbe);
  const size_t n = spec.ParamCount();
  ParamVector w1{std::vector<double>(n), spec};
  ParamVector w2 = w1;
  std::vector<double> g1, g2, dir(n);
  double best = 0.0;

  for (size_t pair = 0; pair < pairs; ++pair) {
    if (pair % kGroup == 0) {
      for (auto& v : w1.values) v = rng.Normal(0.0, kBaseScale);
      for (auto& v : dir) v = rng.Normal();
      const double norm = Norm(dir);
      for (auto& v : dir) v /= norm;
      LossAndGrad(w1, samples, g1);
    }
    for (size_t i = 0; i < n; ++i) w2.values[i] = w1.values[i] + kStep * dir[i];
    LossAndGrad(w2, samples, g2);
    const double dw = std::sqrt(SquaredDistance(w1.values, w2.values));
    std::vector<double> dg(n);
    for (size_t i = 0; i < n; ++i) dg[i] = g2[i] - g1[i];
    const double ng = Norm(dg);
    if (dw > 0.0) best = std::max(best, ng / dw);
    if (ng > 0.0) {
      for (size_t i = 0; i < n; ++i) dir[i] = dg[i] / ng;
    }
  }
  best = std::max(best, spec.l2);
  return {spec.l2, kLSafety * best, best};
}

SmoothnessEstimate EstimateMuL(const ModelSpec& spec, const FederatedDataset& data, size_t pairs_per_client,
                               uint64_t seed) {
  SmoothnessEstimate out{spec.l2, 0.0, 0.0};
  for (size_t i = 0; i < data.n_clients(); ++i) {
    if (data.clients[i].m() == 0) continue;
    const auto est = EstimateMuL(spec, data.clients[i].samples, pairs_per_client,
                                 StreamId(seed, StreamPurpose::kLipschitzProbe, i + 1));
    out.L = std::max(out.L, est.L);
    out.L_raw = std::max(out.L_raw, est.L_raw);
  }
  if (out.L_raw == 0.0) throw AnalysisError("no client data for the smoothness estimate");
  return out;
}

Minimizer MinimizeLoss(const ModelSpec& spec, std::span<const Sample> samples, double tol, int max_iterations) {
  spec.Validate();
  if (samples.empty()) throw AnalysisError("minimization over an empty sample set");
  constexpr size_t kHistory = 10;
  constexpr double kArmijo = 1e-4;
  constexpr int kMaxBacktracks = 60;

  const size_t n = spec.ParamCount();
  Minimizer out;
  out.w = ParamVector{std::vector<double>(n, 0.0), spec};
  std::vector<double> g, g_new;
  double f = LossAndGrad(out.w, samples, g);
  std::deque<std::pair<std::vector<double>, std::vector<double>>> history;  // (s, y)
  std::vector<double> d(n), rho_alpha;
  ParamVector trial = out.w;

  for (int it = 0;; ++it) {
    const double gnorm = Norm(g);
    if (gnorm <= tol) {
      out.value = f;
      out.grad_norm = gnorm;
      out.iterations = it;
      return out;
    }
    if (it >= max_iterations) {
      throw AnalysisError(fmt::format("minimizer did not reach gradient norm {} in {} iterations (at {})", tol,
                                      max_iterations, gnorm));
    }

    // Two-loop recursion.
    for (size_t i = 0; i < n; ++i) d[i] = -g[i];
    rho_alpha.assign(history.size(), 0.0);
    for (size_t h = history.size(); h-- > 0;) {
      const auto& [s, y] = history[h];
      const double a = Dot(s, d) / Dot(y, s);
      rho_alpha[h] = a;
      for (size_t i = 0; i < n; ++i) d[i] -= a * y[i];
    }
    double step = 1.0;
    if (!history.empty()) {
      const auto& [s, y] = history.back();
      const double scale = Dot(s, y) / Dot(y, y);
      for (auto& v : d) v *= scale;
    } else {
      step = std::min(1.0, 1.0 / gnorm);
    }
    for (size_t h = 0; h < history.size(); ++h) {
      const auto& [s, y] = history[h];
      const double b = Dot(y, d) / Dot(y, s);
      for (size_t i = 0; i < n; ++i) d[i] += (rho_alpha[h] - b) * s[i];
    }
    double slope = Dot(g, d);
    if (!(slope < 0.0)) {
      history.clear();
      for (size_t i = 0; i < n; ++i) d[i] = -g[i];
      slope = -gnorm * gnorm;
      step = std::min(1.0, 1.0 / gnorm);
    }

    bool accepted = false;
    double f_new = f;
    for (int bt = 0; bt < kMaxBacktracks; ++bt) {
      for (size_t i = 0; i < n; ++i) trial.values[i] = out.w.values[i] + step * d[i];
      f_new = LossAndGrad(trial, samples, g_new);
      // Also accept a step that leaves f flat to rounding but shrinks the gradient.
      const bool armijo = f_new <= f + kArmijo * step * slope;
      const bool flat = f_new <= f + 1e-14 * std::abs(f) && Norm(g_new) < gnorm;
      if (armijo || flat) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      throw AnalysisError(fmt::format("line search failed at gradient norm {} after {} iterations", gnorm, it));
    }

    std::vector<double> s(n), y(n);
    for (size_t i = 0; i < n; ++i) {
      s[i] = trial.values[i] - out.w.values[i];
      y[i] = g_new[i] - g[i];
    }
    if (Dot(s, y) > 1e-300) {
      history.emplace_back(std::move(s), std::move(y));
      if (history.size() > kHistory) history.pop_front();
    }
    std::swap(out.w.values, trial.values);
    std::swap(g, g_new);
    f = f_new;
  }
}

GammaEstimate EstimateGamma(const FederatedDataset& data, const ModelSpec& spec, double tol) {
  RequireConvex(spec);
  const auto total = static_cast<double>(data.TotalTrainSamples());
  if (total <= 0.0) throw AnalysisError("no training samples");
  std::vector<Sample> pooled;
  pooled.reserve(data.TotalTrainSamples());
  for (const auto& c : data.clients) pooled.insert(pooled.end(), c.samples.begin(), c.samples.end());

  GammaEstimate out;
  out.global = MinimizeLoss(spec, pooled, tol);
  double weighted = 0.0;
  for (const auto& c : data.clients) {
    if (c.m() == 0) {
      out.client_minima.push_back(0.0);
      continue;
    }
    const Minimizer local = MinimizeLoss(spec, c.samples, tol);
    out.client_minima.push_back(local.value);
    weighted += static_cast<double>(c.m()) / total * local.value;
  }
  out.gamma = std::max(0.0, out.global.value - weighted);
  return out;
}

EpsD MeasureEpsD(std::span<const RunLog> runs) {
  EpsD out;
  bool any = false;
  for (const auto& run : runs) {
    for (const auto& r : run.rounds) {
      for (double e : r.epsilon) out.eps = std::max(out.eps, e);
      for (const auto& p : r.probes) {
        any = true;
        out.eps = std::max(out.eps, p.eps);
        out.D = std::max({out.D, p.g_norm, p.full_norm});
      }
    }
  }
  if (!any) throw AnalysisError("runs carry no gradient probes");
  return out;
}

BoundReport CheckBound(std::span<const RunLog> runs, const TheoryConstants& consts, const ParamVector& w_star,
                       bool check_schedule) {
  if (runs.empty()) throw AnalysisError("bound check needs at least one run");
  for (const auto& run : runs) {
    const auto& cfg = run.config;
    if (check_schedule && (cfg.lr.kind != LrScheduleKind::kTheorem || cfg.lr.mu != consts.mu ||
                           cfg.lr.L != consts.L || cfg.epochs != consts.E)) {
      throw AnalysisError("schedule mismatch: runs must use the theorem schedule with the same mu, L and E");
    }
    if (cfg.batch_size != 0) throw AnalysisError("bound check needs full-batch epochs");
    if (static_cast<int>(run.rounds.size()) != consts.R || run.trajectory.size() != run.rounds.size()) {
      throw AnalysisError("runs must cover R rounds with a recorded trajectory");
    }
    if (run.initial.values.size() != w_star.values.size()) throw AnalysisError("w* shape mismatch");
  }

  BoundReport report;
  report.constants = consts;
  report.pass = true;
  for (int r = 0; r <= consts.R; ++r) {
    double sum = 0.0;
    for (const auto& run : runs) {
      const ParamVector& w = r == 0 ? run.initial : run.trajectory[static_cast<size_t>(r - 1)];
      sum += SquaredDistance(w.values, w_star.values);
    }
    BoundStep step;
    step.round = r;
    step.t = static_cast<int64_t>(r) * consts.E;
    step.empirical = sum / static_cast<double>(runs.size());
    step.bound = consts.BoundAt(static_cast<double>(step.t));
    step.margin = step.bound - step.empirical;
    if (!(step.margin >= 0.0)) report.pass = false;
    report.steps.push_back(step);
  }
  return report;
}

void WriteBoundReport(const BoundReport& report, const BoundReport& raw, std::ostream& out) {
  nlohmann::json j = ToJson(report);
  j["eps_plugin"] = "maximum over the visited trajectory";
  j["raw_L"] = ToJson(raw);
  out << j.dump(2) << '\n';
}

BoundCheck RunBoundCheck(const FederatedDataset& data, const std::vector<ClientProfile>& profiles,
                         RoundConfig base, const ModelSpec& spec, std::span<const uint64_t> run_seeds,
                         size_t pairs_per_client, uint64_t probe_seed) {
  RequireConvex(spec);
  if (run_seeds.empty()) throw AnalysisError("bound check needs at least one run seed");
  BoundCheck out;
  out.smoothness = EstimateMuL(spec, data, pairs_per_client, probe_seed);
  out.gamma = EstimateGamma(data, spec, 1e-10);

  base.lr = {LrScheduleKind::kTheorem, 0.0, out.smoothness.mu, out.smoothness.L, base.epochs};
  base.batch_size = 0;
  base.probes = true;
  base.record_trajectory = true;
  for (uint64_t seed : run_seeds) out.runs.push_back(Run(data, profiles, base, spec, RunSeeds{0, 0, seed}));

  out.eps_d = MeasureEpsD(out.runs);
  const ParamVector& w_star = out.gamma.global.w;
  const double dist0 = SquaredDistance(out.runs.front().initial.values, w_star.values);
  for (const auto& run : out.runs) {
    if (SquaredDistance(run.initial.values, w_star.values) != dist0) {
      throw AnalysisError("runs start from different initial parameters");
    }
  }
  const auto consts = TheoryConstants::Compute(out.smoothness.mu, out.smoothness.L, out.eps_d.eps, out.eps_d.D,
                                               out.gamma.gamma, base.epochs, base.rounds,
                                               base.clients_per_round, dist0);
  const auto raw = TheoryConstants::Compute(out.smoothness.mu, out.smoothness.L_raw, out.eps_d.eps,
                                            out.eps_d.D, out.gamma.gamma, base.epochs, base.rounds,
                                            base.clients_per_round, dist0);
  out.report = CheckBound(out.runs, consts, w_star);
  out.raw = CheckBound(out.runs, raw, w_star, false);
  return out;
}

}  // namespace fedsim
