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
#include <stdexcept>
#include <string>
#include <vector>

namespace fedsim {

struct Sample {
  std::vector<double> features;
  int label = 0;
};

// Training partition of one client. Sample positions are stable identifiers
// (coreset medoids and weighted views index into `samples`).
struct ClientDataset {
  int client_id = 0;
  std::vector<Sample> samples;

  size_t m() const { return samples.size(); }
};

struct Provenance {
  std::string kind;  // "synthetic" | "label_shards" | "file"
  double alpha = 0.0;
  double beta = 0.0;
  uint64_t seed = 0;
  int labels_per_client = 0;
};

struct FederatedDataset {
  std::vector<ClientDataset> clients;
  std::vector<Sample> test_set;
  int n_classes = 0;
  int d_feat = 0;
  Provenance provenance;

  size_t n_clients() const { return clients.size(); }
  size_t TotalTrainSamples() const;
};

// Dense row-major feature matrix with integer labels, as produced by the IDX
// loader.
struct LabeledMatrix {
  std::vector<double> features;
  std::vector<int> labels;
  size_t rows = 0;
  size_t cols = 0;
  int n_classes = 10;
};

class DataError : public std::runtime_error {
 public:
  enum class Kind { kInvalidArgument, kInsufficientSamples, kFormat, kIo };
  DataError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr int kSyntheticFeatures = 60;
inline constexpr int kSyntheticClasses = 10;

// Client sizes: 10 + round(LogNormal(kSizeLogMean, kSizeLogSigma)). The log
// mean puts E[size] at 670.
inline constexpr double kSizeLogSigma = 1.2;
extern const double kSizeLogMean;

// Power-law-like per-client sample counts (total, before the test split).
std::vector<size_t> DrawClientSizes(size_t n_clients, uint64_t seed);

// Synthetic(alpha, beta) benchmark: per-client softmax teacher with weights
// centred on N(0, alpha) and features centred on N(N(0, beta), 1). Each
// client's samples are split 80/20 (stratified by label) into training data
// and the pooled global test set.
FederatedDataset GenerateSynthetic(double alpha, double beta, size_t n_clients, uint64_t seed);

// Label-sharded non-IID split of a labelled pool: every client receives
// exactly `labels_per_client` classes, with power-law sizes. Every row of
// the pool lands in exactly one client (training or test part).
FederatedDataset PartitionLabelShards(const LabeledMatrix& pool, size_t n_clients,
                                      int labels_per_client, uint64_t seed);

// Text container. Layout:
//   fedsim-dataset v1 d_feat=<d> n_classes=<c> n_clients=<n>
//   provenance kind=<k> alpha=<a> beta=<b> seed=<s> labels_per_client=<l>
//   client <id> m=<m>          (followed by m sample lines)
//   test n=<t>                 (followed by t sample lines)
// A sample line is "<label> <f_0> ... <f_{d-1}>" with shortest round-trip
// decimal reals, so write/read is bit-exact.
void WriteDataset(const FederatedDataset& data, std::ostream& out);
FederatedDataset ReadDataset(std::istream& in);
void SaveDataset(const FederatedDataset& data, const std::string& path);
FederatedDataset LoadDataset(const std::string& path);

}  // namespace fedsim
