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

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsim/analysis.h"
#include "fedsim/coreset.h"
#include "fedsim/data.h"
#include "fedsim/federation.h"
#include "fedsim/model.h"

namespace fedsim {

// Process exit statuses of the fedsim tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConfig = 3;
inline constexpr int kExitIo = 4;
inline constexpr int kExitComponent = 5;

enum class Benchmark { kSynthetic, kMnist };

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Defaults follow the synthetic column of the usual hyper-parameter table:
// lr 0.001, batch 8, E = 10, 100 rounds, 30 clients, 10 per round,
// mu_prox 0.1.
struct ExperimentConfig {
  Benchmark benchmark = Benchmark::kSynthetic;
  double alpha = 0.0;
  double beta = 0.0;
  std::string mnist_images;
  std::string mnist_labels;
  int labels_per_client = 2;

  size_t n_clients = 30;
  std::vector<Strategy> strategies = {Strategy::kFedCore};
  double s_percent = 30.0;
  int epochs = 10;
  int rounds = 100;
  size_t clients_per_round = 10;
  size_t batch_size = 8;  // 0 = full batch
  double lr = 0.001;
  LrScheduleKind lr_schedule = LrScheduleKind::kConstant;
  double mu_prox = 0.1;
  double l2 = 0.0;
  ModelKind model = ModelKind::kLogistic;
  int hidden = 32;
  std::optional<DistanceKind> distance;  // default: euclid for logistic, last-layer for mlp
  double gamma = 0.0;
  bool probes = false;

  uint64_t data_seed = 7;
  uint64_t cap_seed = 11;
  uint64_t run_seed = 13;

  std::string out_dir = "out";
  bool client_times = true;
  bool bound_report = false;
  int bound_runs = 10;

  // Throws ConfigError.
  void Validate() const;
  ModelSpec Spec(int d_feat, int n_classes) const;
  DistanceKind Distance() const;
};

// Data, capabilities and deadline shared by every strategy of a sweep.
struct Setup {
  FederatedDataset data;
  std::vector<ClientProfile> profiles;
  double tau = 0.0;
  ModelSpec spec;
  std::optional<SmoothnessEstimate> smoothness;  // theorem schedule only
};

Setup Prepare(const ExperimentConfig& config);
RoundConfig MakeRoundConfig(const ExperimentConfig& config, const Setup& setup, Strategy strategy);

struct StrategySummary {
  Strategy strategy = Strategy::kFedAvg;
  double final_test_acc = 0.0;
  double final_train_loss = 0.0;
  double mean_client_time = 0.0;
  // Mean over rounds of the round length (slowest selected client) / tau.
  double normalized_round_time = 0.0;
  double max_client_time = 0.0;
};

StrategySummary Summarize(const RunLog& log);

// Writes `content` to a sibling temporary file and renames it into place.
void WriteFileAtomic(const std::string& path, const std::string& content);

std::string RunJson(const ExperimentConfig& config, const Setup& setup, const RunLog& log);

// Runs every configured strategy with shared data and capabilities and
// writes the output files. A single strategy writes metrics.csv, run.json
// (and client_times.csv) into out_dir; several strategies write one
// subdirectory each plus summary.csv.
std::vector<StrategySummary> RunExperiment(const ExperimentConfig& config, std::ostream& console);

// RunExperiment with errors mapped to exit statuses and reported on `err`.
int RunExperimentMain(const ExperimentConfig& config, std::ostream& console, std::ostream& err);

}  // namespace fedsim
