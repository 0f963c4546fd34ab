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
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/coreset.h"
#include "fedsim/data.h"
#include "fedsim/model.h"
#include "fedsim/rng.h"

namespace fedsim {

enum class Strategy { kFedAvg, kFedAvgDs, kFedProx, kFedCore };

std::string ToString(Strategy strategy);
// Accepts "fedavg", "fedavg_ds", "fedprox", "fedcore".
Strategy ParseStrategy(const std::string& name);

class FederationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kInfiniteDeadline = std::numeric_limits<double>::infinity();

struct ClientProfile {
  int client_id = 0;
  size_t m = 0;
  double c = 1.0;  // samples per simulated second
  double p = 0.0;  // m / total
};

// c ~ N(1, 0.5^2), redrawn until c >= kMinCapability.
inline constexpr double kMinCapability = 0.1;
std::vector<double> Capabilities(size_t n_clients, uint64_t seed);

std::vector<ClientProfile> MakeProfiles(const FederatedDataset& data, std::span<const double> capabilities);

// E * m / c.
double FullWorkTime(const ClientProfile& client, int epochs);

// Nearest-rank (100 - s)th percentile of the full-work times, so roughly s%
// of clients cannot finish E full epochs before the deadline.
double DeadlineForStragglers(std::span<const ClientProfile> clients, int epochs, double s_percent);

// K iid categorical draws over client positions with probabilities p.
std::vector<size_t> SelectClients(std::span<const ClientProfile> clients, size_t k, Rng& rng);

enum class LrScheduleKind { kConstant, kTheorem };

struct LrSchedule {
  LrScheduleKind kind = LrScheduleKind::kConstant;
  double lr = 0.001;  // kConstant
  double mu = 0.0;    // kTheorem
  double L = 0.0;     // kTheorem
  int epochs = 1;     // kTheorem

  // Step size for local iteration t = round * E + epoch.
  double At(int64_t t) const;
};

// (2/mu) / (t + max(E, 8L/mu)).
double TheoremLearningRate(int64_t t, double mu, double L, int epochs);

struct RoundConfig {
  Strategy strategy = Strategy::kFedAvg;
  int epochs = 10;
  int rounds = 100;
  size_t clients_per_round = 10;
  double tau = kInfiniteDeadline;
  LrSchedule lr;
  size_t batch_size = 8;  // 0 = full batch
  double mu_prox = 0.1;
  DistanceKind distance = DistanceKind::kEuclidProxy;
  double gamma = 0.0;  // coreset build surcharge, in full epochs
  bool probes = false;
  bool record_trajectory = false;

  void Validate() const;
};

// How a selected client spends its round.
enum class ClientPath { kFull, kCoreset, kFallback, kPartial, kDropped };
std::string ToString(ClientPath path);

struct ClientPlan {
  ClientPath path = ClientPath::kFull;
  int full_epochs = 0;       // epochs over the whole local set
  int coreset_epochs = 0;    // epochs over the weighted coreset
  int64_t coreset_size = 0;  // b, or the fallback size
  int64_t partial_samples = 0;  // fedprox: samples of a cut-short single epoch
  double time = 0.0;         // simulated seconds
};

// Per-strategy work plan and simulated time for one client:
//   fedavg     E full epochs, time E*m/c (may exceed tau)
//   fedavg_ds  dropped if E*m/c > tau, recorded time min(E*m/c, tau)
//   fedprox    min(E, floor(c*tau/m)) full epochs; a client that cannot
//              finish one epoch processes floor(c*tau) samples of it instead
//   fedcore    full path if E*m <= c*tau; otherwise one full epoch then E-1
//              epochs on a coreset of size b; if b <= 0 (or E = 1), E epochs on
//              a feature-distance coreset of size max(1, floor(c*tau/E)).
// gamma adds gamma*m/c build time whenever a coreset is built and shrinks
// the coreset to keep the total within tau.
ClientPlan PlanClient(Strategy strategy, size_t m, double c, int epochs, double tau, double gamma = 0.0);
inline double ClientRoundTime(Strategy strategy, size_t m, double c, int epochs, double tau,
                              double gamma = 0.0) {
  return PlanClient(strategy, m, c, epochs, tau, gamma).time;
}

// One probe per local epoch, taken at the epoch's starting parameters:
// G is the full local gradient, g the gradient the epoch actually follows
// (coreset or full), both including the ridge term; eps = ||G - g||.
struct GradientProbe {
  size_t slot = 0;
  int epoch = 0;
  double g_norm = 0.0;
  double full_norm = 0.0;
  double eps = 0.0;
};

struct RoundRecord {
  int round = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double test_acc = 0.0;
  std::vector<size_t> selected;
  std::vector<ClientPlan> plans;
  // Coreset gradient error at the parameters the coreset was built for;
  // negative for clients that did not build one.
  std::vector<double> epsilon;
  size_t dropped = 0;
  std::vector<GradientProbe> probes;

  double MeanClientTime() const;
  double MaxClientTime() const;
  // Mean over clients that built a coreset; 0 if none did.
  double MeanEpsilon() const;
};

struct RunSeeds {
  uint64_t data = 0;
  uint64_t capabilities = 0;
  uint64_t run = 0;
};

struct RunLog {
  RoundConfig config;
  ModelSpec spec;
  RunSeeds seeds;
  ParamVector initial;
  ParamVector final;
  std::vector<RoundRecord> rounds;
  // Global parameters after each round (only with record_trajectory).
  std::vector<ParamVector> trajectory;
};

// Round engine. Holds per-client coreset caches for w-independent distances,
// so one Simulator should serve a single (dataset, profiles, config).
class Simulator {
 public:
  Simulator(const FederatedDataset& data, std::vector<ClientProfile> profiles, RoundConfig config,
            ModelSpec spec, uint64_t run_seed);

  std::pair<ParamVector, RoundRecord> RunRound(const ParamVector& global, int round);
  RunLog Run(const ParamVector& initial);

  const std::vector<ClientProfile>& profiles() const { return profiles_; }
  const RoundConfig& config() const { return config_; }

  // Pooled training objective sum_i p_i L^i(w), ridge included.
  double TrainLoss(const ParamVector& params) const;

 private:
  ParamVector TrainClient(const ParamVector& global, int round, size_t slot, size_t client,
                          const ClientPlan& plan, RoundRecord& record);
  const Coreset& CachedFeatureCoreset(size_t client, size_t k);

  const FederatedDataset& data_;
  std::vector<ClientProfile> profiles_;
  RoundConfig config_;
  ModelSpec spec_;
  uint64_t run_seed_;
  std::map<std::pair<size_t, size_t>, Coreset> feature_coresets_;
};

// Convenience: capabilities/profiles are supplied, initial parameters come
// from InitParams(spec, StreamId(run seed, kInit)).
RunLog Run(const FederatedDataset& data, std::vector<ClientProfile> profiles, const RoundConfig& config,
           const ModelSpec& spec, const RunSeeds& seeds);

// metrics.csv: round,strategy,train_loss,test_loss,test_acc,mean_client_time,
// max_client_time,tau,dropped,mean_epsilon. Reals use the shortest
// round-trip representation; an infinite tau is written "inf".
inline constexpr const char* kMetricsHeader =
    "round,strategy,train_loss,test_loss,test_acc,mean_client_time,max_client_time,tau,dropped,mean_epsilon";
void WriteMetricsCsv(const RunLog& log, std::ostream& out);

// client_times.csv: round,slot,client,path,full_epochs,coreset_epochs,
// coreset_size,partial_samples,time,epsilon (empty epsilon when no coreset
// was built).
inline constexpr const char* kClientTimesHeader =
    "round,slot,client,path,full_epochs,coreset_epochs,coreset_size,partial_samples,time,epsilon";
void WriteClientTimesCsv(const RunLog& log, std::ostream& out);

}  // namespace fedsim
