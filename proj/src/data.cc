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

#include "fedsim/data.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "fedsim/rng.h"

namespace fedsim {

const double kSizeLogMean = std::log(660.0) - 0.5 * kSizeLogSigma * kSizeLogSigma;

size_t FederatedDataset::TotalTrainSamples() const {
  size_t total = 0;
  for (const auto& c : clients) total += c.m();
  return total;
}

namespace {

// Moves floor(count/5) samples of every label group into `test`, picking
// them in a seeded order. Remaining samples keep their original order.
void SplitStratified(std::vector<Sample> all, uint64_t seed, uint64_t client,
                     std::vector<Sample>* train, std::vector<Sample>* test) {
  Rng rng = Rng::ForStream(seed, StreamPurpose::kTestSplit, client);
  std::vector<size_t> order = rng.Permutation(all.size());
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return all[a].label < all[b].label; });

  std::vector<bool> is_test(all.size(), false);
  size_t group_start = 0;
  while (group_start < order.size()) {
    size_t group_end = group_start;
    while (group_end < order.size() && all[order[group_end]].label == all[order[group_start]].label) {
      ++group_end;
    }
    const size_t n_test = (group_end - group_start) / 5;
    for (size_t i = 0; i < n_test; ++i) is_test[order[group_start + i]] = true;
    group_start = group_end;
  }
  for (size_t i = 0; i < all.size(); ++i) {
    (is_test[i] ? test : train)->push_back(std::move(all[i]));
  }
}

int ArgMax(const std::vector<double>& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

std::vector<size_t> DrawClientSizes(size_t n_clients, uint64_t seed) {
  Rng rng = Rng::ForStream(seed, StreamPurpose::kClientSizes);
  std::vector<size_t> sizes(n_clients);
  for (auto& s : sizes) {
    const double draw = rng.LogNormal(kSizeLogMean, kSizeLogSigma);
    s = 10 + static_cast<size_t>(std::llround(draw));
  }
  return sizes;
}

FederatedDataset GenerateSynthetic(double alpha, double beta, size_t n_clients, uint64_t seed) {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || n_clients == 0) {
    throw DataError(DataError::Kind::kInvalidArgument,
                    "synthetic generator needs alpha, beta >= 0 and at least one client");
  }
  constexpr int d = kSyntheticFeatures;
  constexpr int c = kSyntheticClasses;

  std::vector<double> feature_std(d);
  for (int j = 0; j < d; ++j) feature_std[j] = std::sqrt(std::pow(static_cast<double>(j + 1), -1.2));

  FederatedDataset data;
  data.n_classes = c;
  data.d_feat = d;
  data.provenance = {"synthetic", alpha, beta, seed, 0};

  const std::vector<size_t> sizes = DrawClientSizes(n_clients, seed);
  for (size_t k = 0; k < n_clients; ++k) {
    Rng model_rng = Rng::ForStream(seed, StreamPurpose::kClientModel, k);
    const double u = model_rng.Normal(0.0, alpha);
    std::vector<double> weights(static_cast<size_t>(c) * d);
    std::vector<double> bias(c);
    for (auto& w : weights) w = model_rng.Normal(u, 1.0);
    for (auto& b : bias) b = model_rng.Normal(u, 1.0);
    const double center = model_rng.Normal(0.0, beta);
    std::vector<double> mean_x(d);
    for (auto& v : mean_x) v = model_rng.Normal(center, 1.0);

    Rng feat_rng = Rng::ForStream(seed, StreamPurpose::kClientFeatures, k);
    std::vector<Sample> all(sizes[k]);
    std::vector<double> logits(c);
    for (auto& s : all) {
      s.features.resize(d);
      for (int j = 0; j < d; ++j) s.features[j] = mean_x[j] + feature_std[j] * feat_rng.Normal();
      for (int r = 0; r < c; ++r) {
        double z = bias[r];
        const double* row = &weights[static_cast<size_t>(r) * d];
        for (int j = 0; j < d; ++j) z += row[j] * s.features[j];
        logits[r] = z;
      }
      // argmax of softmax equals argmax of the logits.
      s.label = ArgMax(logits);
    }

    ClientDataset client;
    client.client_id = static_cast<int>(k);
    SplitStratified(std::move(all), seed, k, &client.samples, &data.test_set);
    data.clients.push_back(std::move(client));
  }
  return data;
}

FederatedDataset PartitionLabelShards(const LabeledMatrix& pool, size_t n_clients,
                                      int labels_per_client, uint64_t seed) {
  const int n_classes = pool.n_classes;
  if (n_clients == 0 || labels_per_client < 1 || labels_per_client > n_classes) {
    throw DataError(DataError::Kind::kInvalidArgument,
                    fmt::format("label shards need 1 <= labels_per_client <= {} and n_clients >= 1",
                                n_classes));
  }
  if (n_clients * static_cast<size_t>(labels_per_client) < static_cast<size_t>(n_classes)) {
    throw DataError(DataError::Kind::kInvalidArgument,
                    "n_clients * labels_per_client must cover every class");
  }
  if (pool.labels.size() != pool.rows || pool.features.size() != pool.rows * pool.cols) {
    throw DataError(DataError::Kind::kInvalidArgument, "feature/label shape mismatch");
  }

  // Client i holds classes perm[(i*lpc + j) mod C], j < lpc: distinct within
  // a client, and every class is covered.
  Rng shard_rng = Rng::ForStream(seed, StreamPurpose::kLabelShards);
  const std::vector<size_t> class_perm = shard_rng.Permutation(static_cast<size_t>(n_classes));
  std::vector<std::vector<size_t>> holders(n_classes);
  for (size_t i = 0; i < n_clients; ++i) {
    for (int j = 0; j < labels_per_client; ++j) {
      holders[class_perm[(i * labels_per_client + j) % n_classes]].push_back(i);
    }
  }

  Rng size_rng = Rng::ForStream(seed, StreamPurpose::kClientSizes);
  std::vector<double> share(n_clients);
  for (auto& s : share) s = size_rng.LogNormal(kSizeLogMean, kSizeLogSigma);

  std::vector<std::vector<size_t>> by_class(n_classes);
  for (size_t r = 0; r < pool.rows; ++r) {
    const int y = pool.labels[r];
    if (y < 0 || y >= n_classes) {
      throw DataError(DataError::Kind::kInvalidArgument, fmt::format("label {} out of range", y));
    }
    by_class[y].push_back(r);
  }

  std::vector<std::vector<size_t>> rows_of(n_clients);
  for (int cls = 0; cls < n_classes; ++cls) {
    const auto& h = holders[cls];
    auto& rows = by_class[cls];
    if (rows.size() < h.size()) {
      throw DataError(DataError::Kind::kInsufficientSamples,
                      fmt::format("class {} has {} samples for {} clients", cls, rows.size(), h.size()));
    }
    Rng order_rng = Rng::ForStream(seed, StreamPurpose::kLabelShards, 1 + static_cast<uint64_t>(cls));
    order_rng.Shuffle(std::span<size_t>(rows));

    // One row each, then largest-remainder apportionment of the rest by share.
    const size_t extra = rows.size() - h.size();
    double share_sum = 0.0;
    for (size_t i : h) share_sum += share[i];
    std::vector<size_t> count(h.size(), 1);
    std::vector<std::pair<double, size_t>> remainders;
    size_t assigned = 0;
    for (size_t q = 0; q < h.size(); ++q) {
      const double exact = static_cast<double>(extra) * share[h[q]] / share_sum;
      const auto whole = static_cast<size_t>(std::floor(exact));
      count[q] += whole;
      assigned += whole;
      remainders.emplace_back(exact - static_cast<double>(whole), q);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (size_t q = 0; assigned < extra; ++q, ++assigned) ++count[remainders[q % remainders.size()].second];

    size_t pos = 0;
    for (size_t q = 0; q < h.size(); ++q) {
      for (size_t t = 0; t < count[q]; ++t) rows_of[h[q]].push_back(rows[pos++]);
    }
  }

  FederatedDataset data;
  data.n_classes = n_classes;
  data.d_feat = static_cast<int>(pool.cols);
  data.provenance = {"label_shards", 0.0, 0.0, seed, labels_per_client};
  for (size_t i = 0; i < n_clients; ++i) {
    auto& rows = rows_of[i];
    std::sort(rows.begin(), rows.end());
    std::vector<Sample> all(rows.size());
    for (size_t t = 0; t < rows.size(); ++t) {
      const double* src = &pool.features[rows[t] * pool.cols];
      all[t].features.assign(src, src + pool.cols);
      all[t].label = pool.labels[rows[t]];
    }
    ClientDataset client;
    client.client_id = static_cast<int>(i);
    SplitStratified(std::move(all), seed, i, &client.samples, &data.test_set);
    data.clients.push_back(std::move(client));
  }
  return data;
}

namespace {

void WriteSample(const Sample& s, std::ostream& out) {
  out << s.label;
  for (double f : s.features) out << ' ' << fmt::format("{}", f);
  out << '\n';
}

[[noreturn]] void FormatError(const std::string& msg) {
  throw DataError(DataError::Kind::kFormat, "dataset file: " + msg);
}

// Parses "key=value" from a token.
template <typename T>
T KeyValue(const std::string& token, const std::string& key) {
  if (token.rfind(key + "=", 0) != 0) FormatError("expected " + key + "=..., got '" + token + "'");
  const char* first = token.data() + key.size() + 1;
  const char* last = token.data() + token.size();
  T value{};
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) FormatError("bad value for " + key);
  return value;
}

Sample ReadSample(std::istream& in, int d_feat) {
  std::string line;
  if (!std::getline(in, line)) FormatError("unexpected end of file");
  Sample s;
  s.features.resize(d_feat);
  const char* p = line.data();
  const char* end = line.data() + line.size();
  auto next_token = [&]() {
    while (p < end && *p == ' ') ++p;
    const char* start = p;
    while (p < end && *p != ' ') ++p;
    return std::pair{start, p};
  };
  auto [ls, le] = next_token();
  if (std::from_chars(ls, le, s.label).ec != std::errc()) FormatError("bad label");
  for (int j = 0; j < d_feat; ++j) {
    auto [fs, fe] = next_token();
    auto [ptr, ec] = std::from_chars(fs, fe, s.features[j]);
    if (ec != std::errc() || ptr != fe || fs == fe) FormatError("bad feature value");
  }
  return s;
}

}  // namespace

void WriteDataset(const FederatedDataset& data, std::ostream& out) {
  out << fmt::format("fedsim-dataset v1 d_feat={} n_classes={} n_clients={}\n", data.d_feat,
                     data.n_classes, data.clients.size());
  const auto& p = data.provenance;
  out << fmt::format("provenance kind={} alpha={} beta={} seed={} labels_per_client={}\n",
                     p.kind.empty() ? "file" : p.kind, p.alpha, p.beta, p.seed, p.labels_per_client);
  for (const auto& c : data.clients) {
    out << fmt::format("client {} m={}\n", c.client_id, c.m());
    for (const auto& s : c.samples) WriteSample(s, out);
  }
  out << fmt::format("test n={}\n", data.test_set.size());
  for (const auto& s : data.test_set) WriteSample(s, out);
}

FederatedDataset ReadDataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) FormatError("empty input");
  std::istringstream header(line);
  std::string magic, version, t_d, t_c, t_n;
  header >> magic >> version >> t_d >> t_c >> t_n;
  if (magic != "fedsim-dataset" || version != "v1") FormatError("bad header '" + line + "'");

  FederatedDataset data;
  data.d_feat = KeyValue<int>(t_d, "d_feat");
  data.n_classes = KeyValue<int>(t_c, "n_classes");
  const auto n_clients = KeyValue<size_t>(t_n, "n_clients");

  if (!std::getline(in, line)) FormatError("missing provenance line");
  {
    std::istringstream prov(line);
    std::string tag, kind, a, b, s, l;
    prov >> tag >> kind >> a >> b >> s >> l;
    if (tag != "provenance" || kind.rfind("kind=", 0) != 0) FormatError("bad provenance line");
    data.provenance.kind = kind.substr(5);
    data.provenance.alpha = KeyValue<double>(a, "alpha");
    data.provenance.beta = KeyValue<double>(b, "beta");
    data.provenance.seed = KeyValue<uint64_t>(s, "seed");
    data.provenance.labels_per_client = KeyValue<int>(l, "labels_per_client");
  }

  for (size_t i = 0; i < n_clients; ++i) {
    if (!std::getline(in, line)) FormatError("missing client block");
    std::istringstream block(line);
    std::string tag, m_tok;
    ClientDataset c;
    block >> tag >> c.client_id >> m_tok;
    if (tag != "client" || block.fail()) FormatError("bad client header '" + line + "'");
    const auto m = KeyValue<size_t>(m_tok, "m");
    c.samples.reserve(m);
    for (size_t j = 0; j < m; ++j) c.samples.push_back(ReadSample(in, data.d_feat));
    data.clients.push_back(std::move(c));
  }
  if (!std::getline(in, line)) FormatError("missing test block");
  std::istringstream block(line);
  std::string tag, n_tok;
  block >> tag >> n_tok;
  if (tag != "test") FormatError("bad test header");
  const auto n_test = KeyValue<size_t>(n_tok, "n");
  data.test_set.reserve(n_test);
  for (size_t j = 0; j < n_test; ++j) data.test_set.push_back(ReadSample(in, data.d_feat));
  return data;
}

void SaveDataset(const FederatedDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Kind::kIo, "cannot open " + path + " for writing");
  WriteDataset(data, out);
  if (!out) throw DataError(DataError::Kind::kIo, "write failed: " + path);
}

FederatedDataset LoadDataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Kind::kIo, "cannot open " + path);
  return ReadDataset(in);
}

}  // namespace fedsim
