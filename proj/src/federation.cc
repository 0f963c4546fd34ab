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

#include "fedsim/federation.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

namespace fedsim {

namespace {

bool IsDeadline(double tau) { return tau > 0.0 && !std::isnan(tau); }

GradVector Subtract(const GradVector& a, const GradVector& b) {
  GradVector out(a.size());
  for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

}  // namespace

std::string ToString(Strategy strategy) {
  switch (strategy) {
    case Strategy::kFedAvg:
      return "fedavg";
    case Strategy::kFedAvgDs:
      return "fedavg_ds";
    case Strategy::kFedProx:
      return "fedprox";
    case Strategy::kFedCore:
      return "fedcore";
  }
  return "unknown";
}

Strategy ParseStrategy(const std::string& name) {
  if (name == "fedavg") return Strategy::kFedAvg;
  if (name == "fedavg_ds") return Strategy::kFedAvgDs;
  if (name == "fedprox") return Strategy::kFedProx;
  if (name == "fedcore") return Strategy::kFedCore;
  throw FederationError("unknown strategy '" + name + "'");
}

std::string ToString(ClientPath path) {
  switch (path) {
    case ClientPath::kFull:
      return "full";
    case ClientPath::kCoreset:
      return "coreset";
    case ClientPath::kFallback:
      return "fallback";
    case ClientPath::kPartial:
      return "partial";
    case ClientPath::kDropped:
      return "dropped";
  }
  return "unknown";
}

std::vector<double> Capabilities(size_t n_clients, uint64_t seed) {
  Rng rng = Rng::ForStream(seed, StreamPurpose::kCapabilities);
  std::vector<double> caps(n_clients);
  for (auto& c : caps) {
    do {
      c = rng.Normal(1.0, 0.5);
    } while (c < kMinCapability);
  }
  return caps;
}

std::vector<ClientProfile> MakeProfiles(const FederatedDataset& data, std::span<const double> capabilities) {
  if (capabilities.size() != data.n_clients()) {
    throw FederationError(fmt::format("{} capabilities for {} clients", capabilities.size(), data.n_clients()));
  }
  const auto total = static_cast<double>(data.TotalTrainSamples());
  if (total <= 0.0) throw FederationError("dataset has no training samples");
  std::vector<ClientProfile> out(data.n_clients());
  for (size_t i = 0; i < out.size(); ++i) {
    if (!(capabilities[i] > 0.0)) throw FederationError("capabilities must be positive");
    out[i] = {data.clients[i].client_id, data.clients[i].m(), capabilities[i],
              static_cast<double>(data.clients[i].m()) / total};
  }
  return out;
}

double FullWorkTime(const ClientProfile& client, int epochs) {
  return static_cast<double>(epochs) * static_cast<double>(client.m) / client.c;
}

double DeadlineForStragglers(std::span<const ClientProfile> clients, int epochs, double s_percent) {
  if (clients.empty()) throw FederationError("deadline over an empty population");
  if (!(s_percent >= 0.0 && s_percent < 100.0)) throw FederationError("straggler percentage must be in [0, 100)");
  std::vector<double> times;
  times.reserve(clients.size());
  for (const auto& c : clients) times.push_back(FullWorkTime(c, epochs));
  std::sort(times.begin(), times.end());
  const auto n = static_cast<double>(times.size());
  auto rank = static_cast<size_t>(std::ceil((100.0 - s_percent) * n / 100.0));
  rank = std::clamp<size_t>(rank, 1, times.size());
  return times[rank - 1];
}

std::vector<size_t> SelectClients(std::span<const ClientProfile> clients, size_t k, Rng& rng) {
  if (clients.empty()) throw FederationError("selection from an empty population");
  std::vector<double> cumulative(clients.size());
  double total = 0.0;
  for (size_t i = 0; i < clients.size(); ++i) {
    if (!(clients[i].p >= 0.0)) throw FederationError("selection probabilities must be non-negative");
    total += clients[i].p;
    cumulative[i] = total;
  }
  if (!(total > 0.0)) throw FederationError("selection probabilities sum to zero");
  std::vector<size_t> picks(k);
  for (auto& pick : picks) {
    const double u = rng.Uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    pick = std::min(static_cast<size_t>(it - cumulative.begin()), clients.size() - 1);
  }
  return picks;
}

double TheoremLearningRate(int64_t t, double mu, double L, int epochs) {
  if (!(mu > 0.0) || !(L > 0.0) || epochs < 1) throw FederationError("theorem schedule needs mu, L > 0 and E >= 1");
  const double beta = std::max(static_cast<double>(epochs), 8.0 * L / mu);
  return (2.0 / mu) / (static_cast<double>(t) + beta);
}

double LrSchedule::At(int64_t t) const {
  if (kind == LrScheduleKind::kConstant) return lr;
  return TheoremLearningRate(t, mu, L, epochs);
}

void RoundConfig::Validate() const {
  if (epochs < 1) throw FederationError("epochs must be >= 1");
  if (rounds < 0) throw FederationError("rounds must be >= 0");
  if (clients_per_round < 1) throw FederationError("clients per round must be >= 1");
  if (!IsDeadline(tau)) throw FederationError("deadline must be positive or infinite");
  if (lr.kind == LrScheduleKind::kConstant && !(lr.lr >= 0.0 && std::isfinite(lr.lr))) {
    throw FederationError("learning rate must be finite and non-negative");
  }
  if (lr.kind == LrScheduleKind::kTheorem && !(lr.mu > 0.0 && lr.L >= lr.mu && lr.epochs == epochs)) {
    throw FederationError("theorem schedule needs 0 < mu <= L and matching E");
  }
  if (!(mu_prox >= 0.0 && std::isfinite(mu_prox))) throw FederationError("mu_prox must be finite and >= 0");
  if (!(gamma >= 0.0 && std::isfinite(gamma))) throw FederationError("gamma must be finite and >= 0");
}

ClientPlan PlanClient(Strategy strategy, size_t m, double c, int epochs, double tau, double gamma) {
  if (m == 0 || !(c > 0.0) || epochs < 1 || !IsDeadline(tau) || !(gamma >= 0.0)) {
    throw FederationError("invalid client plan inputs");
  }
  const auto md = static_cast<double>(m);
  const auto ed = static_cast<double>(epochs);
  const double full_time = ed * md / c;
  const ClientPlan full{ClientPath::kFull, epochs, 0, 0, 0, full_time};

  switch (strategy) {
    case Strategy::kFedAvg:
      return full;
    case Strategy::kFedAvgDs:
      if (full_time > tau) return {ClientPath::kDropped, 0, 0, 0, 0, tau};
      return full;
    case Strategy::kFedProx: {
      if (full_time <= tau) return full;
      const double fit = std::floor(c * tau / md);
      if (fit >= 1.0) {
        const int done = static_cast<int>(std::min(ed, fit));
        return {ClientPath::kPartial, done, 0, 0, 0, static_cast<double>(done) * md / c};
      }
      const double samples = std::floor(c * tau);
      return {ClientPath::kPartial, 0, 0, 0, static_cast<int64_t>(samples), samples / c};
    }
    case Strategy::kFedCore:
      break;
  }

  if (ed * md <= c * tau) return full;
  const double surcharge = gamma * md;
  if (epochs >= 2) {
    const double capacity = c * tau - surcharge;
    int64_t b = 0;
    if (capacity > 0.0) b = gamma == 0.0 ? Budget(m, c, tau, epochs) : Budget(m, c, capacity / c, epochs);
    if (b >= 1) {
      const double samples = md + surcharge + static_cast<double>(epochs - 1) * static_cast<double>(b);
      return {ClientPath::kCoreset, 1, epochs - 1, b, 0, samples / c};
    }
  }
  const double fit = std::floor(c * tau / ed);
  const auto k = static_cast<int64_t>(std::clamp(fit, 1.0, md));
  return {ClientPath::kFallback, 0, epochs, k, 0, ed * static_cast<double>(k) / c};
}

double RoundRecord::MeanClientTime() const {
  if (plans.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : plans) sum += p.time;
  return sum / static_cast<double>(plans.size());
}

double RoundRecord::MaxClientTime() const {
  double best = 0.0;
  for (const auto& p : plans) best = std::max(best, p.time);
  return best;
}

double RoundRecord::MeanEpsilon() const {
  double sum = 0.0;
  size_t count = 0;
  for (double e : epsilon) {
    if (e >= 0.0) {
      sum += e;
      ++count;
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

Simulator::Simulator(const FederatedDataset& data, std::vector<ClientProfile> profiles, RoundConfig config,
                     ModelSpec spec, uint64_t run_seed)
    : data_(data), profiles_(std::move(profiles)), config_(config), spec_(spec), run_seed_(run_seed) {
  config_.Validate();
  spec_.Validate();
  if (profiles_.size() != data_.n_clients()) throw FederationError("one profile per client required");
  if (spec_.d_feat != data_.d_feat || spec_.n_classes != data_.n_classes) {
    throw FederationError("model shape does not match the dataset");
  }
  for (size_t i = 0; i < profiles_.size(); ++i) {
    if (profiles_[i].m != data_.clients[i].m()) throw FederationError("profile m does not match client data");
  }
}

double Simulator::TrainLoss(const ParamVector& params) const {
  double loss = 0.0;
  for (size_t i = 0; i < profiles_.size(); ++i) {
    if (data_.clients[i].m() == 0) continue;
    loss += profiles_[i].p * Evaluate(params, data_.clients[i].samples).loss;
  }
  return loss;
}

const Coreset& Simulator::CachedFeatureCoreset(size_t client, size_t k) {
  const auto key = std::make_pair(client, k);
  auto it = feature_coresets_.find(key);
  if (it != feature_coresets_.end()) return it->second;
  const auto& samples = data_.clients[client].samples;
  Coreset cs = KMedoids(DistEuclidProxy(std::span<const Sample>(samples)), k);
  return feature_coresets_.emplace(key, std::move(cs)).first->second;
}

ParamVector Simulator::TrainClient(const ParamVector& global, int round, size_t slot, size_t client,
                                   const ClientPlan& plan, RoundRecord& record) {
  if (plan.path == ClientPath::kDropped) return global;

  const std::span<const Sample> samples(data_.clients[client].samples);
  const size_t m = samples.size();
  Rng rng = Rng::ForStream(run_seed_, StreamPurpose::kEpochShuffle, static_cast<uint64_t>(round), slot);
  const WeightedView full_view = FullView(m);
  std::optional<Proximal> prox;
  if (config_.strategy == Strategy::kFedProx) prox = Proximal{config_.mu_prox, &global};
  const int64_t t0 = static_cast<int64_t>(round) * config_.epochs;
  auto batch_for = [&](size_t view_size) { return config_.batch_size == 0 ? view_size : config_.batch_size; };

  ParamVector w = global;
  int epoch = 0;
  auto probe = [&](const WeightedView* coreset_view) {
    if (!config_.probes) return;
    const GradVector full = MeanGradient(w, samples, full_view);
    GradientProbe p{slot, epoch, 0.0, Norm(full), 0.0};
    if (coreset_view == nullptr) {
      p.g_norm = p.full_norm;
    } else {
      const GradVector g = MeanGradient(w, samples, *coreset_view);
      p.g_norm = Norm(g);
      p.eps = Norm(Subtract(full, g));
    }
    record.probes.push_back(p);
  };
  auto run_full_epoch = [&](const SampleVisitor& visit) {
    probe(nullptr);
    w = SgdEpoch(w, samples, full_view, config_.lr.At(t0 + epoch), batch_for(m), prox, rng, visit);
    ++epoch;
  };
  auto run_coreset_epochs = [&](const Coreset& cs, int count) {
    const WeightedView view = cs.View();
    for (int e = 0; e < count; ++e) {
      probe(&view);
      w = SgdEpoch(w, samples, view, config_.lr.At(t0 + epoch), batch_for(view.size()), prox, rng);
      ++epoch;
    }
  };

  switch (plan.path) {
    case ClientPath::kFull:
    case ClientPath::kPartial:
      for (int e = 0; e < plan.full_epochs; ++e) run_full_epoch({});
      if (plan.partial_samples > 0) {
        const std::vector<size_t> order = rng.Permutation(m);
        WeightedView prefix(static_cast<size_t>(plan.partial_samples));
        for (size_t i = 0; i < prefix.size(); ++i) prefix[i] = {order[i], 1};
        probe(&prefix);
        w = SgdEpoch(w, samples, prefix, config_.lr.At(t0 + epoch), batch_for(prefix.size()), prox, rng);
        ++epoch;
      }
      break;
    case ClientPath::kCoreset: {
      const auto b = static_cast<size_t>(plan.coreset_size);
      if (config_.distance == DistanceKind::kEuclidProxy) {
        run_full_epoch({});
        const Coreset& cs = CachedFeatureCoreset(client, b);
        record.epsilon[slot] = CoresetGradientError(w, samples, cs);
        run_coreset_epochs(cs, plan.coreset_epochs);
      } else {
        std::vector<std::vector<double>> inputs(m);
        const bool exact = config_.distance == DistanceKind::kExact;
        run_full_epoch([&](size_t j, const ParamVector& at) {
          inputs[j] = exact ? PerSampleGrad(at, samples[j]) : LastLayerInputGrad(at, samples[j]);
        });
        const DistMatrix dist = exact ? DistExact(inputs) : DistLastLayerProxy(inputs);
        const Coreset cs = KMedoids(dist, b);
        record.epsilon[slot] = CoresetGradientError(w, samples, cs);
        run_coreset_epochs(cs, plan.coreset_epochs);
      }
      break;
    }
    case ClientPath::kFallback: {
      const Coreset& cs = CachedFeatureCoreset(client, static_cast<size_t>(plan.coreset_size));
      record.epsilon[slot] = CoresetGradientError(w, samples, cs);
      run_coreset_epochs(cs, plan.coreset_epochs);
      break;
    }
    case ClientPath::kDropped:
      break;
  }
  return w;
}

std::pair<ParamVector, RoundRecord> Simulator::RunRound(const ParamVector& global, int round) {
  if (global.spec != spec_ || global.values.size() != spec_.ParamCount()) {
    throw FederationError("global parameters do not match the model spec");
  }
  Rng select_rng = Rng::ForStream(run_seed_, StreamPurpose::kSelection, static_cast<uint64_t>(round));
  RoundRecord record;
  record.round = round;
  record.selected = SelectClients(profiles_, config_.clients_per_round, select_rng);
  record.epsilon.assign(record.selected.size(), -1.0);

  std::vector<double> sum(global.values.size(), 0.0);
  size_t completed = 0;
  for (size_t slot = 0; slot < record.selected.size(); ++slot) {
    const size_t client = record.selected[slot];
    const ClientProfile& prof = profiles_[client];
    const ClientPlan plan = PlanClient(config_.strategy, prof.m, prof.c, config_.epochs, config_.tau, config_.gamma);
    record.plans.push_back(plan);
    if (plan.path == ClientPath::kDropped) {
      ++record.dropped;
      continue;
    }
    const ParamVector local = TrainClient(global, round, slot, client, plan, record);
    for (size_t i = 0; i < sum.size(); ++i) sum[i] += local.values[i];
    ++completed;
  }

  ParamVector next = global;
  if (completed > 0) {
    const auto count = static_cast<double>(completed);
    for (size_t i = 0; i < sum.size(); ++i) next.values[i] = sum[i] / count;
  }
  record.train_loss = TrainLoss(next);
  if (!data_.test_set.empty()) {
    const Evaluation ev = Evaluate(next, data_.test_set);
    record.test_loss = ev.loss;
    record.test_acc = ev.accuracy;
  }
  return {std::move(next), std::move(record)};
}

RunLog Simulator::Run(const ParamVector& initial) {
  RunLog log;
  log.config = config_;
  log.spec = spec_;
  log.seeds.run = run_seed_;
  log.initial = initial;
  ParamVector w = initial;
  for (int r = 0; r < config_.rounds; ++r) {
    auto [next, record] = RunRound(w, r);
    w = std::move(next);
    log.rounds.push_back(std::move(record));
    if (config_.record_trajectory) log.trajectory.push_back(w);
  }
  log.final = std::move(w);
  return log;
}

RunLog Run(const FederatedDataset& data, std::vector<ClientProfile> profiles, const RoundConfig& config,
           const ModelSpec& spec, const RunSeeds& seeds) {
  Simulator sim(data, std::move(profiles), config, spec, seeds.run);
  RunLog log = sim.Run(InitParams(spec, StreamId(seeds.run, StreamPurpose::kInit)));
  log.seeds = seeds;
  return log;
}

void WriteMetricsCsv(const RunLog& log, std::ostream& out) {
  out << kMetricsHeader << '\n';
  const std::string strategy = ToString(log.config.strategy);
  for (const auto& r : log.rounds) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.round, strategy, r.train_loss, r.test_loss, r.test_acc,
                       r.MeanClientTime(), r.MaxClientTime(), log.config.tau, r.dropped, r.MeanEpsilon());
  }
}

void WriteClientTimesCsv(const RunLog& log, std::ostream& out) {
  out << kClientTimesHeader << '\n';
  for (const auto& r : log.rounds) {
    for (size_t slot = 0; slot < r.plans.size(); ++slot) {
      const ClientPlan& p = r.plans[slot];
      const std::string eps = r.epsilon[slot] >= 0.0 ? fmt::format("{}", r.epsilon[slot]) : "";
      out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.round, slot, r.selected[slot], ToString(p.path),
                         p.full_epochs, p.coreset_epochs, p.coreset_size, p.partial_samples, p.time, eps);
    }
  }
}

}  // namespace fedsim
