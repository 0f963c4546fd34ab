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
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsim/data.h"
#include "fedsim/rng.h"

namespace fedsim {

enum class ModelKind { kLogistic, kMlp };

std::string ToString(ModelKind kind);
ModelKind ParseModelKind(const std::string& name);

// Multinomial logistic regression or a one-hidden-layer tanh MLP, both with
// a softmax cross-entropy head and an optional ridge term (l2/2)*||w||^2.
//
// Parameter layout (row-major, bias as the last column of each layer):
//   logistic: W [n_classes x (d_feat+1)]
//   mlp:      W1 [hidden x (d_feat+1)] followed by W2 [n_classes x (hidden+1)]
struct ModelSpec {
  ModelKind kind = ModelKind::kLogistic;
  int d_feat = 0;
  int n_classes = 0;
  int hidden = 0;
  double l2 = 0.0;

  size_t ParamCount() const;
  // Throws ModelError on nonsensical shapes.
  void Validate() const;

  bool operator==(const ModelSpec&) const = default;
};

struct ParamVector {
  std::vector<double> values;
  ModelSpec spec;
};

using GradVector = std::vector<double>;
// Gradient of the loss w.r.t. the logits: softmax(z) - onehot(y).
using LastLayerGrad = std::vector<double>;

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One entry of a weighted view into a client's samples. Full-set training
// is the view {(j, 1) : j in V}; a coreset view carries cluster sizes.
struct ViewEntry {
  size_t index = 0;
  int weight = 1;
};
using WeightedView = std::vector<ViewEntry>;

WeightedView FullView(size_t m);

struct Proximal {
  double mu = 0.0;
  const ParamVector* anchor = nullptr;
};

ParamVector InitParams(const ModelSpec& spec, uint64_t seed);

// Softmax cross-entropy plus (l2/2)*||w||^2. The ridge term is shared by all
// samples, so the mean of per-sample losses is the regularized mean loss.
double PerSampleLoss(const ParamVector& params, const Sample& sample);
GradVector PerSampleGrad(const ParamVector& params, const Sample& sample);
LastLayerGrad LastLayerInputGrad(const ParamVector& params, const Sample& sample);

// Adds weight * grad(cross-entropy) (no ridge) into `grad`. Optionally writes
// the last-layer gradient. Returns the cross-entropy.
double AccumulateDataGrad(const ParamVector& params, const Sample& sample, double weight,
                          std::span<double> grad, std::span<double> last_layer = {});

// Weighted mean of per-sample gradients over the view:
//   sum_k w_k * grad CE_k / sum_k w_k + l2 * params.
GradVector MeanGradient(const ParamVector& params, std::span<const Sample> samples,
                        const WeightedView& view);
// Weighted mean of per-sample losses over the view.
double MeanLoss(const ParamVector& params, std::span<const Sample> samples, const WeightedView& view);

// Called once per visited sample, with the parameters in effect for its
// mini-batch (before that batch's update).
using SampleVisitor = std::function<void(size_t sample_index, const ParamVector& params)>;

// One pass over a seeded permutation of `view` in mini-batches. Each batch
// gradient is the weight-normalized mean of per-sample gradients plus
// l2*w and, with `prox`, mu*(w - anchor).
ParamVector SgdEpoch(const ParamVector& params, std::span<const Sample> samples,
                     const WeightedView& view, double lr, size_t batch_size,
                     const std::optional<Proximal>& prox, Rng& rng,
                     const SampleVisitor& visit = {});

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Mean per-sample loss and top-1 accuracy (ties go to the lowest class).
Evaluation Evaluate(const ParamVector& params, std::span<const Sample> samples);

int Predict(const ParamVector& params, const Sample& sample);

// Checkpoint: `path` holds the raw little-endian float64 values, and
// `path + ".json"` the ModelSpec.
void SaveParams(const ParamVector& params, const std::string& path);
ParamVector LoadParams(const std::string& path);

double SquaredDistance(std::span<const double> a, std::span<const double> b);
double Norm(std::span<const double> v);

}  // namespace fedsim
