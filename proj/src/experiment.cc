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

#include "fedsim/experiment.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "fedsim/idx.h"

namespace fedsim {

namespace fs = std::filesystem;

namespace {

// JSON has no infinity; an unbounded deadline is written as null.
nlohmann::json JsonReal(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

void EnsureDirectory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create directory {}: {}", dir.string(), ec.message()));
}

}  // namespace

void ExperimentConfig::Validate() const {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (benchmark == Benchmark::kSynthetic && !(alpha >= 0.0 && beta >= 0.0 && std::isfinite(alpha) &&
                                              std::isfinite(beta))) {
    fail("alpha and beta must be finite and >= 0");
  }
  if (benchmark == Benchmark::kMnist) {
    if (mnist_images.empty() || mnist_labels.empty()) fail("mnist needs --mnist-images and --mnist-labels");
    if (labels_per_client < 1 || labels_per_client > 10) fail("labels per client must be in [1, 10]");
  }
  if (n_clients < 1) fail("clients must be >= 1");
  if (strategies.empty()) fail("at least one strategy is required");
  if (std::set<Strategy>(strategies.begin(), strategies.end()).size() != strategies.size()) {
    fail("strategies must not repeat");
  }
  if (!(s_percent >= 0.0 && s_percent < 100.0)) fail("stragglers must be in [0, 100)");
  if (epochs < 1) fail("epochs must be >= 1");
  if (rounds < 0) fail("rounds must be >= 0");
  if (clients_per_round < 1) fail("k must be >= 1");
  if (lr_schedule == LrScheduleKind::kConstant && !(lr > 0.0 && std::isfinite(lr))) fail("lr must be > 0");
  if (!(mu_prox >= 0.0 && std::isfinite(mu_prox))) fail("mu-prox must be >= 0");
  if (!(l2 >= 0.0 && std::isfinite(l2))) fail("l2 must be >= 0");
  if (model == ModelKind::kMlp && hidden < 1) fail("hidden must be >= 1 for the mlp");
  if (!(gamma >= 0.0 && std::isfinite(gamma))) fail("gamma must be >= 0");
  if (out_dir.empty()) fail("output directory must be set");
  const bool convex = model == ModelKind::kLogistic && l2 > 0.0;
  if (lr_schedule == LrScheduleKind::kTheorem && !convex) fail("the theorem schedule needs the logistic model with l2 > 0");
  if (bound_report) {
    if (!convex) fail("the bound report needs the logistic model with l2 > 0");
    if (batch_size != 0) fail("the bound report needs full-batch epochs (--batch 0)");
    if (bound_runs < 1) fail("bound runs must be >= 1");
  }
}

ModelSpec ExperimentConfig::Spec(int d_feat, int n_classes) const {
  return {model, d_feat, n_classes, model == ModelKind::kMlp ? hidden : 0, l2};
}

DistanceKind ExperimentConfig::Distance() const {
  if (distance) return *distance;
  return model == ModelKind::kLogistic ? DistanceKind::kEuclidProxy : DistanceKind::kLastLayerProxy;
}

Setup Prepare(const ExperimentConfig& config) {
  Setup setup;
  if (config.benchmark == Benchmark::kSynthetic) {
    setup.data = GenerateSynthetic(config.alpha, config.beta, config.n_clients, config.data_seed);
  } else {
    const LabeledMatrix pool = LoadMnistIdx(config.mnist_images, config.mnist_labels);
    setup.data = PartitionLabelShards(pool, config.n_clients, config.labels_per_client, config.data_seed);
  }
  setup.profiles = MakeProfiles(setup.data, Capabilities(setup.data.n_clients(), config.cap_seed));
  setup.tau = DeadlineForStragglers(setup.profiles, config.epochs, config.s_percent);
  setup.spec = config.Spec(setup.data.d_feat, setup.data.n_classes);
  if (config.lr_schedule == LrScheduleKind::kTheorem) {
    setup.smoothness = EstimateMuL(setup.spec, setup.data, 100, config.run_seed);
  }
  return setup;
}

RoundConfig MakeRoundConfig(const ExperimentConfig& config, const Setup& setup, Strategy strategy) {
  RoundConfig rc;
  rc.strategy = strategy;
  rc.epochs = config.epochs;
  rc.rounds = config.rounds;
  rc.clients_per_round = config.clients_per_round;
  rc.tau = setup.tau;
  if (config.lr_schedule == LrScheduleKind::kTheorem) {
    if (!setup.smoothness) throw ConfigError("theorem schedule without a smoothness estimate");
    rc.lr = {LrScheduleKind::kTheorem, 0.0, setup.smoothness->mu, setup.smoothness->L, config.epochs};
  } else {
    rc.lr = {LrScheduleKind::kConstant, config.lr, 0.0, 0.0, config.epochs};
  }
  rc.batch_size = config.batch_size;
  rc.mu_prox = config.mu_prox;
  rc.distance = config.Distance();
  rc.gamma = config.gamma;
  rc.probes = config.probes;
  return rc;
}

StrategySummary Summarize(const RunLog& log) {
  StrategySummary s;
  s.strategy = log.config.strategy;
  if (log.rounds.empty()) return s;
  s.final_test_acc = log.rounds.back().test_acc;
  s.final_train_loss = log.rounds.back().train_loss;
  double mean_time = 0.0;
  double norm = 0.0;
  for (const auto& r : log.rounds) {
    mean_time += r.MeanClientTime();
    norm += r.MaxClientTime() / log.config.tau;
    s.max_client_time = std::max(s.max_client_time, r.MaxClientTime());
  }
  const auto n = static_cast<double>(log.rounds.size());
  s.mean_client_time = mean_time / n;
  s.normalized_round_time = norm / n;
  return s;
}

void WriteFileAtomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " to " + path);
  }
}

std::string RunJson(const ExperimentConfig& config, const Setup& setup, const RunLog& log) {
  using nlohmann::json;
  const auto& prov = setup.data.provenance;
  json cfg = {
      {"benchmark", config.benchmark == Benchmark::kSynthetic ? "synthetic" : "mnist"},
      {"alpha", config.alpha},
      {"beta", config.beta},
      {"labels_per_client", config.labels_per_client},
      {"clients", config.n_clients},
      {"strategy", ToString(log.config.strategy)},
      {"stragglers", config.s_percent},
      {"epochs", config.epochs},
      {"rounds", config.rounds},
      {"k", config.clients_per_round},
      {"batch", config.batch_size},
      {"lr_schedule", config.lr_schedule == LrScheduleKind::kConstant ? "constant" : "theorem"},
      {"lr", config.lr},
      {"mu_prox", config.mu_prox},
      {"l2", config.l2},
      {"model", ToString(config.model)},
      {"hidden", setup.spec.hidden},
      {"distance", ToString(log.config.distance)},
      {"gamma", config.gamma},
      {"probes", config.probes},
  };
  if (config.lr_schedule == LrScheduleKind::kTheorem) {
    cfg["theorem_mu"] = log.config.lr.mu;
    cfg["theorem_L"] = log.config.lr.L;
  }
  const StrategySummary s = Summarize(log);
  json doc = {
      {"config", cfg},
      {"seeds", {{"data", config.data_seed}, {"capabilities", config.cap_seed}, {"run", config.run_seed}}},
      {"dataset",
       {{"kind", prov.kind},
        {"alpha", prov.alpha},
        {"beta", prov.beta},
        {"seed", prov.seed},
        {"labels_per_client", prov.labels_per_client},
        {"clients", setup.data.n_clients()},
        {"train_samples", setup.data.TotalTrainSamples()},
        {"test_samples", setup.data.test_set.size()},
        {"d_feat", setup.data.d_feat},
        {"n_classes", setup.data.n_classes}}},
      {"tau", JsonReal(setup.tau)},
      {"param_count", setup.spec.ParamCount()},
      {"summary",
       {{"rounds_run", log.rounds.size()},
        {"final_test_acc", s.final_test_acc},
        {"final_train_loss", s.final_train_loss},
        {"mean_client_time", s.mean_client_time},
        {"normalized_round_time", s.normalized_round_time},
        {"max_client_time", s.max_client_time}}},
  };
  return doc.dump(2) + "\n";
}

std::vector<StrategySummary> RunExperiment(const ExperimentConfig& config, std::ostream& console) {
  config.Validate();
  const Setup setup = Prepare(config);
  const fs::path root(config.out_dir);
  EnsureDirectory(root);
  const bool sweep = config.strategies.size() > 1;

  std::vector<StrategySummary> summaries;
  for (Strategy strategy : config.strategies) {
    const RoundConfig rc = MakeRoundConfig(config, setup, strategy);
    const RunLog log = Run(setup.data, setup.profiles, rc, setup.spec,
                           RunSeeds{config.data_seed, config.cap_seed, config.run_seed});
    const fs::path dir = sweep ? root / ToString(strategy) : root;
    EnsureDirectory(dir);

    std::ostringstream metrics;
    WriteMetricsCsv(log, metrics);
    WriteFileAtomic((dir / "metrics.csv").string(), metrics.str());
    if (config.client_times) {
      std::ostringstream times;
      WriteClientTimesCsv(log, times);
      WriteFileAtomic((dir / "client_times.csv").string(), times.str());
    }
    WriteFileAtomic((dir / "run.json").string(), RunJson(config, setup, log));

    const StrategySummary s = Summarize(log);
    summaries.push_back(s);
    console << fmt::format("{}: rounds={} final_acc={:.4f} final_train_loss={:.4f} normalized_round_time={:.3f} "
                           "tau={:.6g}\n",
                           ToString(strategy), log.rounds.size(), s.final_test_acc, s.final_train_loss,
                           s.normalized_round_time, setup.tau);
  }

  if (sweep) {
    std::string table = "strategy,final_test_acc,final_train_loss,mean_client_time,normalized_round_time,tau\n";
    for (const auto& s : summaries) {
      table += fmt::format("{},{},{},{},{},{}\n", ToString(s.strategy), s.final_test_acc, s.final_train_loss,
                           s.mean_client_time, s.normalized_round_time, setup.tau);
    }
    WriteFileAtomic((root / "summary.csv").string(), table);
  }

  if (config.bound_report) {
    RoundConfig base = MakeRoundConfig(config, setup, config.strategies.front());
    base.lr = {LrScheduleKind::kConstant, 1.0, 0.0, 0.0, config.epochs};
    std::vector<uint64_t> seeds;
    for (int i = 0; i < config.bound_runs; ++i) seeds.push_back(config.run_seed + static_cast<uint64_t>(i));
    const BoundCheck check = RunBoundCheck(setup.data, setup.profiles, base, setup.spec, seeds, 100, config.run_seed);
    std::ostringstream report;
    WriteBoundReport(check.report, check.raw, report);
    WriteFileAtomic((root / "bound_report.json").string(), report.str());
    console << fmt::format("bound check ({}): {} over {} runs, final bound {:.6g}\n", ToString(base.strategy),
                           check.report.pass ? "pass" : "fail", seeds.size(),
                           TheoreticalBound(check.report.constants, config.rounds));
  }
  return summaries;
}

int RunExperimentMain(const ExperimentConfig& config, std::ostream& console, std::ostream& err) {
  try {
    RunExperiment(config, console);
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "invalid configuration: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const DataError& e) {
    if (e.kind() == DataError::Kind::kIo) {
      err << "i/o error: " << e.what() << '\n';
      return kExitIo;
    }
    err << "data error: " << e.what() << '\n';
    return e.kind() == DataError::Kind::kInvalidArgument ? kExitConfig : kExitComponent;
  } catch (const IdxError& e) {
    err << "mnist input error: " << e.what() << '\n';
    return e.kind() == IdxError::Kind::kIo ? kExitIo : kExitComponent;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitComponent;
  }
}

}  // namespace fedsim
