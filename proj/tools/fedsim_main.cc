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

// fedsim: run one federated experiment (or a strategy sweep) and write
// metrics.csv / run.json / client_times.csv under --out.
//
//   fedsim --benchmark synthetic --alpha 0 --beta 0 --clients 30
//          --strategy fedcore --stragglers 30 --rounds 100 --epochs 10
//          --k 10 --lr 0.001 --batch 8
//
// --strategy accepts a comma list (fedavg,fedavg_ds,fedprox,fedcore) for a
// paired sweep. --config reads the same options from an INI/TOML file;
// command-line flags win.

#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "fedsim/experiment.h"

namespace {

std::vector<fedsim::Strategy> ParseStrategies(const std::string& list) {
  std::vector<fedsim::Strategy> out;
  std::stringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(fedsim::ParseStrategy(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  using fedsim::ExperimentConfig;
  ExperimentConfig cfg;
  CLI::App app{"Deterministic federated-learning simulator (FedAvg, FedAvg-DS, FedProx, FedCore)"};
  app.set_config("--config", "", "Read options from an INI/TOML file; flags override it");

  std::string benchmark = "synthetic";
  std::string strategies = "fedcore";
  std::string lr_schedule = "constant";
  std::string model = "logistic";
  std::string distance;

  app.add_option("--benchmark", benchmark, "synthetic | mnist")
      ->check(CLI::IsMember({"synthetic", "mnist"}))
      ->capture_default_str();
  app.add_option("--alpha", cfg.alpha, "Synthetic cross-client model heterogeneity")->capture_default_str();
  app.add_option("--beta", cfg.beta, "Synthetic cross-client feature heterogeneity")->capture_default_str();
  app.add_option("--mnist-images", cfg.mnist_images, "IDX images file");
  app.add_option("--mnist-labels", cfg.mnist_labels, "IDX labels file");
  app.add_option("--labels-per-client", cfg.labels_per_client, "Distinct labels per MNIST client")
      ->capture_default_str();
  app.add_option("--clients", cfg.n_clients, "Number of clients")->capture_default_str();
  app.add_option("--strategy", strategies, "fedavg | fedavg_ds | fedprox | fedcore, or a comma list")
      ->capture_default_str();
  app.add_option("--stragglers", cfg.s_percent, "Percentage s of clients that miss the deadline")
      ->capture_default_str();
  app.add_option("--rounds", cfg.rounds, "Rounds R")->capture_default_str();
  app.add_option("--epochs", cfg.epochs, "Local epochs E")->capture_default_str();
  app.add_option("--k", cfg.clients_per_round, "Clients per round K")->capture_default_str();
  app.add_option("--lr", cfg.lr, "Constant learning rate")->capture_default_str();
  app.add_option("--lr-schedule", lr_schedule, "constant | theorem")
      ->check(CLI::IsMember({"constant", "theorem"}))
      ->capture_default_str();
  app.add_option("--batch", cfg.batch_size, "Mini-batch size (0 = full batch)")->capture_default_str();
  app.add_option("--mu-prox", cfg.mu_prox, "FedProx proximal coefficient")->capture_default_str();
  app.add_option("--l2", cfg.l2, "Ridge coefficient lambda")->capture_default_str();
  app.add_option("--model", model, "logistic | mlp")
      ->check(CLI::IsMember({"logistic", "mlp"}))
      ->capture_default_str();
  app.add_option("--hidden", cfg.hidden, "MLP hidden units")->capture_default_str();
  app.add_option("--distance", distance, "exact | euclid_proxy | lastlayer_proxy (default by model)")
      ->check(CLI::IsMember({"exact", "euclid_proxy", "lastlayer_proxy"}));
  app.add_option("--gamma", cfg.gamma, "Coreset build surcharge, in full epochs")->capture_default_str();
  app.add_flag("--probes", cfg.probes, "Record per-epoch gradient probes");
  app.add_option("--data-seed", cfg.data_seed, "Dataset seed")->capture_default_str();
  app.add_option("--cap-seed", cfg.cap_seed, "Capability seed")->capture_default_str();
  app.add_option("--run-seed", cfg.run_seed, "Selection/shuffle seed")->capture_default_str();
  app.add_option("--out", cfg.out_dir, "Output directory")->capture_default_str();
  app.add_flag("!--no-client-times", cfg.client_times, "Skip client_times.csv");
  app.add_flag("--bound-report", cfg.bound_report, "Also run the convergence-bound check");
  app.add_option("--bound-runs", cfg.bound_runs, "Seeds averaged by the bound check")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? fedsim::kExitOk : fedsim::kExitUsage;
  }

  try {
    cfg.strategies = ParseStrategies(strategies);
  } catch (const std::exception& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return fedsim::kExitUsage;
  }
  cfg.benchmark = benchmark == "mnist" ? fedsim::Benchmark::kMnist : fedsim::Benchmark::kSynthetic;
  cfg.lr_schedule = lr_schedule == "theorem" ? fedsim::LrScheduleKind::kTheorem : fedsim::LrScheduleKind::kConstant;
  cfg.model = fedsim::ParseModelKind(model);
  if (!distance.empty()) cfg.distance = fedsim::ParseDistanceKind(distance);

  return fedsim::RunExperimentMain(cfg, std::cout, std::cerr);
}
