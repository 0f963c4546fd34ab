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

#include "fedsim/model.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

namespace fedsim {

std::string ToString(ModelKind kind) { return kind == ModelKind::kLogistic ? "logistic" : "mlp"; }

ModelKind ParseModelKind(const std::string& name) {
  if (name == "logistic") return ModelKind::kLogistic;
  if (name == "mlp") return ModelKind::kMlp;
  throw ModelError("unknown model kind '" + name + "'");
}

size_t ModelSpec::ParamCount() const {
  const auto d = static_cast<size_t>(d_feat);
  const auto c = static_cast<size_t>(n_classes);
  if (kind == ModelKind::kLogistic) return c * (d + 1);
  const auto h = static_cast<size_t>(hidden);
  return h * (d + 1) + c * (h + 1);
}

void ModelSpec::Validate() const {
  if (d_feat < 1 || n_classes < 2) throw ModelError("model needs d_feat >= 1 and n_classes >= 2");
  if (kind == ModelKind::kMlp && hidden < 1) throw ModelError("mlp needs hidden >= 1");
  if (!(l2 >= 0.0)) throw ModelError("l2 must be >= 0");
}

WeightedView FullView(size_t m) {
  WeightedView view(m);
  for (size_t j = 0; j < m; ++j) view[j] = {j, 1};
  return view;
}

namespace {

struct Scratch {
  std::vector<double> probs;
  std::vector<double> hidden;
  std::vector<double> dhidden;

  explicit Scratch(const ModelSpec& spec)
      : probs(spec.n_classes), hidden(spec.kind == ModelKind::kMlp ? spec.hidden : 0),
        dhidden(hidden.size()) {}
};

void CheckShapes(const ParamVector& p, const Sample& s) {
  if (p.values.size() != p.spec.ParamCount()) throw ModelError("parameter length does not match spec");
  if (s.features.size() != static_cast<size_t>(p.spec.d_feat)) {
    throw ModelError(fmt::format("sample has {} features, model expects {}", s.features.size(),
                                 p.spec.d_feat));
  }
  if (s.label < 0 || s.label >= p.spec.n_classes) throw ModelError("label out of range");
}

// Affine layer: out[r] = W[r, :n] . in + W[r, n].
void Affine(const double* w, size_t rows, const double* in, size_t n, double* out) {
  for (size_t r = 0; r < rows; ++r) {
    const double* row = w + r * (n + 1);
    double z = row[n];
    for (size_t j = 0; j < n; ++j) z += row[j] * in[j];
    out[r] = z;
  }
}

// Fills scratch.probs with softmax(logits) and returns the cross-entropy.
double Forward(const ParamVector& p, const Sample& s, Scratch& scratch) {
  const auto& spec = p.spec;
  const auto d = static_cast<size_t>(spec.d_feat);
  const auto c = static_cast<size_t>(spec.n_classes);
  double* z = scratch.probs.data();
  if (spec.kind == ModelKind::kLogistic) {
    Affine(p.values.data(), c, s.features.data(), d, z);
  } else {
    const auto h = static_cast<size_t>(spec.hidden);
    Affine(p.values.data(), h, s.features.data(), d, scratch.hidden.data());
    for (auto& a : scratch.hidden) a = std::tanh(a);
    Affine(p.values.data() + h * (d + 1), c, scratch.hidden.data(), h, z);
  }
  const double zmax = *std::max_element(z, z + c);
  double sum = 0.0;
  for (size_t k = 0; k < c; ++k) sum += std::exp(z[k] - zmax);
  const double log_norm = zmax + std::log(sum);
  const double ce = log_norm - z[s.label];
  for (size_t k = 0; k < c; ++k) z[k] = std::exp(z[k] - log_norm);
  return ce;
}

// grad += weight * d CE / d w, using the probabilities left by Forward.
void Backward(const ParamVector& p, const Sample& s, Scratch& scratch, double weight, double* grad) {
  const auto& spec = p.spec;
  const auto d = static_cast<size_t>(spec.d_feat);
  const auto c = static_cast<size_t>(spec.n_classes);
  const double* x = s.features.data();
  const auto delta = [&](size_t k) { return scratch.probs[k] - (static_cast<int>(k) == s.label ? 1.0 : 0.0); };

  if (spec.kind == ModelKind::kLogistic) {
    for (size_t k = 0; k < c; ++k) {
      const double g = weight * delta(k);
      double* row = grad + k * (d + 1);
      for (size_t j = 0; j < d; ++j) row[j] += g * x[j];
      row[d] += g;
    }
    return;
  }

  const auto h = static_cast<size_t>(spec.hidden);
  const double* w2 = p.values.data() + h * (d + 1);
  double* g2 = grad + h * (d + 1);
  std::fill(scratch.dhidden.begin(), scratch.dhidden.end(), 0.0);
  for (size_t k = 0; k < c; ++k) {
    const double dk = delta(k);
    const double g = weight * dk;
    const double* w2row = w2 + k * (h + 1);
    double* g2row = g2 + k * (h + 1);
    for (size_t q = 0; q < h; ++q) {
      g2row[q] += g * scratch.hidden[q];
      scratch.dhidden[q] += w2row[q] * dk;
    }
    g2row[h] += g;
  }
  for (size_t q = 0; q < h; ++q) {
    const double a = scratch.hidden[q];
    const double g = weight * scratch.dhidden[q] * (1.0 - a * a);
    double* row = grad + q * (d + 1);
    for (size_t j = 0; j < d; ++j) row[j] += g * x[j];
    row[d] += g;
  }
}

double HalfSquaredNorm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return 0.5 * s;
}

}  // namespace

ParamVector InitParams(const ModelSpec& spec, uint64_t seed) {
  spec.Validate();
  ParamVector p{std::vector<double>(spec.ParamCount(), 0.0), spec};
  if (spec.kind == ModelKind::kLogistic) return p;

  Rng rng = Rng::ForStream(seed, StreamPurpose::kInit);
  const auto d = static_cast<size_t>(spec.d_feat);
  const auto h = static_cast<size_t>(spec.hidden);
  const auto c = static_cast<size_t>(spec.n_classes);
  const auto init_layer = [&](double* w, size_t rows, size_t fan_in) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + rows));
    for (size_t r = 0; r < rows; ++r) {
      for (size_t j = 0; j < fan_in; ++j) w[r * (fan_in + 1) + j] = limit * (2.0 * rng.Uniform() - 1.0);
    }
  };
  init_layer(p.values.data(), h, d);
  init_layer(p.values.data() + h * (d + 1), c, h);
  return p;
}

double PerSampleLoss(const ParamVector& params, const Sample& sample) {
  CheckShapes(params, sample);
  Scratch scratch(params.spec);
  return Forward(params, sample, scratch) + params.spec.l2 * HalfSquaredNorm(params.values);
}

GradVector PerSampleGrad(const ParamVector& params, const Sample& sample) {
  CheckShapes(params, sample);
  Scratch scratch(params.spec);
  GradVector grad(params.values.size(), 0.0);
  Forward(params, sample, scratch);
  Backward(params, sample, scratch, 1.0, grad.data());
  for (size_t i = 0; i < grad.size(); ++i) grad[i] += params.spec.l2 * params.values[i];
  return grad;
}

LastLayerGrad LastLayerInputGrad(const ParamVector& params, const Sample& sample) {
  CheckShapes(params, sample);
  Scratch scratch(params.spec);
  Forward(params, sample, scratch);
  LastLayerGrad out = scratch.probs;
  out[sample.label] -= 1.0;
  return out;
}

double AccumulateDataGrad(const ParamVector& params, const Sample& sample, double weight,
                          std::span<double> grad, std::span<double> last_layer) {
  CheckShapes(params, sample);
  if (grad.size() != params.values.size()) throw ModelError("gradient buffer has wrong length");
  Scratch scratch(params.spec);
  const double ce = Forward(params, sample, scratch);
  Backward(params, sample, scratch, weight, grad.data());
  if (!last_layer.empty()) {
    std::copy(scratch.probs.begin(), scratch.probs.end(), last_layer.begin());
    last_layer[sample.label] -= 1.0;
  }
  return ce;
}

GradVector MeanGradient(const ParamVector& params, std::span<const Sample> samples,
                        const WeightedView& view) {
  if (view.empty()) throw ModelError("empty view");
  GradVector grad(params.values.size(), 0.0);
  Scratch scratch(params.spec);
  double total = 0.0;
  for (const auto& e : view) {
    const Sample& s = samples[e.index];
    CheckShapes(params, s);
    Forward(params, s, scratch);
    Backward(params, s, scratch, static_cast<double>(e.weight), grad.data());
    total += e.weight;
  }
  for (size_t i = 0; i < grad.size(); ++i) grad[i] = grad[i] / total + params.spec.l2 * params.values[i];
  return grad;
}

double MeanLoss(const ParamVector& params, std::span<const Sample> samples, const WeightedView& view) {
  if (view.empty()) throw ModelError("empty view");
  Scratch scratch(params.spec);
  double sum = 0.0, total = 0.0;
  for (const auto& e : view) {
    const Sample& s = samples[e.index];
    CheckShapes(params, s);
    sum += e.weight * Forward(params, s, scratch);
    total += e.weight;
  }
  return sum / total + params.spec.l2 * HalfSquaredNorm(params.values);
}

ParamVector SgdEpoch(const ParamVector& params, std::span<const Sample> samples,
                     const WeightedView& view, double lr, size_t batch_size,
                     const std::optional<Proximal>& prox, Rng& rng, const SampleVisitor& visit) {
  if (view.empty()) throw ModelError("SgdEpoch on an empty view");
  if (batch_size == 0) throw ModelError("batch_size must be >= 1");
  if (prox && (prox->anchor == nullptr || prox->anchor->values.size() != params.values.size())) {
    throw ModelError("proximal anchor missing or mis-shaped");
  }

  ParamVector w = params;
  const std::vector<size_t> order = rng.Permutation(view.size());
  const double l2 = params.spec.l2;
  Scratch scratch(params.spec);
  std::vector<double> grad(w.values.size());

  for (size_t start = 0; start < order.size(); start += batch_size) {
    const size_t stop = std::min(order.size(), start + batch_size);
    std::fill(grad.begin(), grad.end(), 0.0);
    double total = 0.0;
    for (size_t pos = start; pos < stop; ++pos) {
      const ViewEntry& e = view[order[pos]];
      const Sample& s = samples[e.index];
      CheckShapes(w, s);
      if (visit) visit(e.index, w);
      Forward(w, s, scratch);
      Backward(w, s, scratch, static_cast<double>(e.weight), grad.data());
      total += e.weight;
    }
    for (size_t i = 0; i < grad.size(); ++i) {
      double g = grad[i] / total + l2 * w.values[i];
      if (prox) g += prox->mu * (w.values[i] - prox->anchor->values[i]);
      grad[i] = g;
    }
    for (size_t i = 0; i < grad.size(); ++i) w.values[i] -= lr * grad[i];
  }
  return w;
}

int Predict(const ParamVector& params, const Sample& sample) {
  CheckShapes(params, sample);
  Scratch scratch(params.spec);
  Forward(params, sample, scratch);
  return static_cast<int>(std::max_element(scratch.probs.begin(), scratch.probs.end()) -
                          scratch.probs.begin());
}

Evaluation Evaluate(const ParamVector& params, std::span<const Sample> samples) {
  if (samples.empty()) throw ModelError("Evaluate on an empty sample set");
  Scratch scratch(params.spec);
  double loss = 0.0;
  size_t correct = 0;
  for (const auto& s : samples) {
    CheckShapes(params, s);
    loss += Forward(params, s, scratch);
    const auto pred = std::max_element(scratch.probs.begin(), scratch.probs.end()) - scratch.probs.begin();
    if (pred == s.label) ++correct;
  }
  const auto n = static_cast<double>(samples.size());
  return {loss / n + params.spec.l2 * HalfSquaredNorm(params.values), static_cast<double>(correct) / n};
}

void SaveParams(const ParamVector& params, const std::string& path) {
  std::ofstream bin(path, std::ios::binary);
  if (!bin) throw ModelError("cannot write " + path);
  for (double v : params.values) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    bin.write(bytes, 8);
  }
  nlohmann::json sidecar = {{"kind", ToString(params.spec.kind)},
                            {"d_feat", params.spec.d_feat},
                            {"n_classes", params.spec.n_classes},
                            {"hidden", params.spec.hidden},
                            {"l2", params.spec.l2},
                            {"count", params.values.size()}};
  std::ofstream meta(path + ".json");
  meta << sidecar.dump(2) << '\n';
  if (!bin || !meta) throw ModelError("write failed for " + path);
}

ParamVector LoadParams(const std::string& path) {
  std::ifstream meta(path + ".json");
  if (!meta) throw ModelError("cannot read " + path + ".json");
  const auto sidecar = nlohmann::json::parse(meta);
  ParamVector p;
  p.spec.kind = ParseModelKind(sidecar.at("kind").get<std::string>());
  p.spec.d_feat = sidecar.at("d_feat").get<int>();
  p.spec.n_classes = sidecar.at("n_classes").get<int>();
  p.spec.hidden = sidecar.at("hidden").get<int>();
  p.spec.l2 = sidecar.at("l2").get<double>();
  p.spec.Validate();

  std::ifstream bin(path, std::ios::binary);
  if (!bin) throw ModelError("cannot read " + path);
  p.values.resize(p.spec.ParamCount());
  for (auto& v : p.values) {
    unsigned char bytes[8];
    if (!bin.read(reinterpret_cast<char*>(bytes), 8)) throw ModelError(path + ": truncated parameter file");
    uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= uint64_t{bytes[b]} << (8 * b);
    std::memcpy(&v, &bits, sizeof v);
  }
  return p;
}

double SquaredDistance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double Norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace fedsim
