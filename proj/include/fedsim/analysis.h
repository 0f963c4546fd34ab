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
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedsim/data.h"
#include "fedsim/federation.h"
#include "fedsim/model.h"

namespace fedsim {

class AnalysisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Convergence constants for the strongly convex case, with step size
// eta_t = alpha / (t + beta).
struct TheoryConstants {
  double mu = 0.0;
  double L = 0.0;
  double eps = 0.0;
  double D = 0.0;
  double Gamma = 0.0;
  int E = 1;
  int R = 0;
  size_t K = 1;
  double w_star_dist0 = 0.0;  // ||w_0 - w*||^2

  double alpha = 0.0;  // 2 / mu
  double beta = 0.0;   // max(E, 8L / mu)
  double A1 = 0.0;     // 2 eps D / mu^2
  double A2 = 0.0;     // max(beta * w_star_dist0, 4 A5 / mu^2)
  double A3 = 0.0;     // 2 eps D / mu
  double A4 = 0.0;     // 8 (E-1)^2 D^2 + 6 L Gamma + eps^2 + 2 eps D
  double A5 = 0.0;     // 4 E^2 D^2 / K + A4

  // Fills alpha..A5 from the measured inputs. Throws unless 0 < mu <= L and
  // the remaining inputs are finite and non-negative.
  static TheoryConstants Compute(double mu, double L, double eps, double D, double Gamma, int E, int R,
                                 size_t K, double w_star_dist0);

  // A1 + A2 / (t + beta).
  double BoundAt(double t) const;
};

// A1 + A2 / (E*R + beta).
double TheoreticalBound(const TheoryConstants& consts, int R);

struct SmoothnessEstimate {
  double mu = 0.0;     // the ridge coefficient
  double L = 0.0;      // kLSafety * L_raw
  double L_raw = 0.0;  // largest observed gradient-difference quotient
};

inline constexpr double kLSafety = 1.2;

// mu = l2; L from `pairs` gradient-difference quotients
// ||grad(w1) - grad(w2)|| / ||w1 - w2|| of the mean loss over `samples`.
// Pairs come in groups of ten sharing a random base point; within a group
// the direction w2 - w1 follows power iteration on the observed gradient
// differences, so the quotients approach the top curvature.
SmoothnessEstimate EstimateMuL(const ModelSpec& spec, std::span<const Sample> samples, size_t pairs,
                               uint64_t seed);
// Largest per-client estimate (every local objective must be L-smooth).
SmoothnessEstimate EstimateMuL(const ModelSpec& spec, const FederatedDataset& data, size_t pairs_per_client,
                               uint64_t seed);

struct Minimizer {
  ParamVector w;
  double value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
};

// Minimizes the ridge-regularized mean loss by L-BFGS with Armijo
// backtracking until ||grad|| <= tol. Throws AnalysisError after
// `max_iterations`.
Minimizer MinimizeLoss(const ModelSpec& spec, std::span<const Sample> samples, double tol,
                       int max_iterations = 20000);

struct GammaEstimate {
  double gamma = 0.0;  // max(0, L(w*) - sum_i p_i L_i(w_i*))
  Minimizer global;
  std::vector<double> client_minima;
};

// The global objective is sum_i p_i L_i with p_i = m_i / total, i.e. the
// pooled mean over every training sample.
GammaEstimate EstimateGamma(const FederatedDataset& data, const ModelSpec& spec, double tol);

struct EpsD {
  double eps = 0.0;
  double D = 0.0;
};

// eps: largest coreset gradient error over all probes and recorded coreset
// builds; D: largest probed gradient norm. Throws if no run carries probes.
EpsD MeasureEpsD(std::span<const RunLog> runs);

struct BoundStep {
  int round = 0;
  int64_t t = 0;
  double empirical = 0.0;  // mean over runs of ||w_t - w*||^2
  double bound = 0.0;
  double margin = 0.0;  // bound - empirical
};

struct BoundReport {
  TheoryConstants constants;
  std::vector<BoundStep> steps;
  bool pass = false;
};

// Compares the mean squared distance to w* at every synchronization step
// t = rE (r = 0..R) against A1 + A2/(t + beta). Runs must use the theorem
// schedule with the same (mu, L, E), full-batch epochs, and recorded
// trajectories. With `check_schedule` false the (mu, L) match is skipped, which
// allows re-scoring the same runs against alternative constants.
BoundReport CheckBound(std::span<const RunLog> runs, const TheoryConstants& consts, const ParamVector& w_star,
                       bool check_schedule = true);

// Constant identities: A3 == mu * A1 and A2 >= 4 A5 / mu^2, to `tol`
// relative.
bool ConstantIdentitiesHold(const TheoryConstants& consts, double tol = 1e-12);

// bound_report.json. `raw` is the same check with L_raw in place of L.
void WriteBoundReport(const BoundReport& report, const BoundReport& raw, std::ostream& out);

struct BoundCheck {
  SmoothnessEstimate smoothness;
  GammaEstimate gamma;
  EpsD eps_d;
  BoundReport report;
  BoundReport raw;  // same runs scored with L_raw in place of L
  std::vector<RunLog> runs;
};

// End-to-end check on a convex setup: estimates (mu, L) and (Gamma, w*),
// runs `base` once per run seed with the theorem schedule, full-batch
// epochs, probes and trajectories, measures (eps, D), and scores the runs.
BoundCheck RunBoundCheck(const FederatedDataset& data, const std::vector<ClientProfile>& profiles,
                         RoundConfig base, const ModelSpec& spec, std::span<const uint64_t> run_seeds,
                         size_t pairs_per_client = 100, uint64_t probe_seed = 0);

}  // namespace fedsim
