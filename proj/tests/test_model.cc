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

#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "oracles.h"

namespace fedsim {
namespace {

ModelSpec Logistic(int d, int c, double l2 = 0.0) { return {ModelKind::kLogistic, d, c, 0, l2}; }
ModelSpec Mlp(int d, int c, int h, double l2 = 0.0) { return {ModelKind::kMlp, d, c, h, l2}; }

TEST(ModelSpec, ParamCountAndValidation) {
  EXPECT_EQ(Logistic(60, 10).ParamCount(), 610u);
  EXPECT_EQ(Mlp(4, 3, 5).ParamCount(), 5u * 5 + 3u * 6);
  EXPECT_THROW(Logistic(0, 10).Validate(), ModelError);
  EXPECT_THROW(Mlp(4, 3, 0).Validate(), ModelError);
  EXPECT_THROW(Logistic(3, 2, -1.0).Validate(), ModelError);
  EXPECT_EQ(ParseModelKind("mlp"), ModelKind::kMlp);
  EXPECT_THROW(ParseModelKind("cnn"), ModelError);
}

TEST(Model, LossMatchesNaiveOracle) {
  Rng rng(1);
  for (const auto& spec : {Logistic(6, 4, 0.3), Mlp(5, 3, 7, 0.1)}) {
    const auto p = oracle::RandomParams(spec, 0.7, rng);
    for (const auto& s : oracle::RandomSamples(20, spec.d_feat, spec.n_classes, rng)) {
      EXPECT_NEAR(PerSampleLoss(p, s), oracle::NaiveLoss(p, s), 1e-12);
    }
  }
}

TEST(Model, GradientMatchesCentralDifferences) {
  Rng rng(2);
  for (const auto& spec : {Logistic(6, 4, 0.2), Mlp(5, 3, 7, 0.05)}) {
    const auto p = oracle::RandomParams(spec, 0.5, rng);
    for (const auto& s : oracle::RandomSamples(5, spec.d_feat, spec.n_classes, rng)) {
      const auto fd = oracle::CentralDifferences([&](const ParamVector& w) { return PerSampleLoss(w, s); }, p, 1e-6);
      EXPECT_LT(oracle::RelativeError(PerSampleGrad(p, s), fd), 1e-5) << ToString(spec.kind);
    }
  }
}

TEST(Model, MeanGradientMatchesCentralDifferencesWithWeights) {
  Rng rng(3);
  const auto spec = Mlp(4, 3, 5, 0.1);
  const auto p = oracle::RandomParams(spec, 0.5, rng);
  const auto samples = oracle::RandomSamples(9, 4, 3, rng);
  const WeightedView view = {{0, 3}, {4, 1}, {8, 5}};
  const auto fd =
      oracle::CentralDifferences([&](const ParamVector& w) { return MeanLoss(w, samples, view); }, p, 1e-6);
  EXPECT_LT(oracle::RelativeError(MeanGradient(p, samples, view), fd), 1e-5);
}

// At w = 0 every class has probability 1/C: loss = log C, and the gradient
// row of class r is (1/C - [r == y]) * [x, 1].
TEST(Model, ClosedFormAtZero) {
  const auto spec = Logistic(3, 4);
  const ParamVector zero{std::vector<double>(spec.ParamCount(), 0.0), spec};
  const Sample s{{1.0, -2.0, 0.5}, 2};
  EXPECT_NEAR(PerSampleLoss(zero, s), std::log(4.0), 1e-15);
  const auto g = PerSampleGrad(zero, s);
  const double xb[4] = {1.0, -2.0, 0.5, 1.0};
  for (int r = 0; r < 4; ++r) {
    const double coef = 0.25 - (r == 2 ? 1.0 : 0.0);
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(g[r * 4 + j], coef * xb[j], 1e-15);
  }
}

TEST(Model, LastLayerGradIsSoftmaxMinusOneHot) {
  Rng rng(4);
  const auto spec = Mlp(4, 5, 6);
  const auto p = oracle::RandomParams(spec, 0.8, rng);
  const auto s = oracle::RandomSamples(1, 4, 5, rng)[0];
  const auto probs = oracle::NaiveSoftmax(oracle::NaiveLogits(p, s.features));
  const auto g = LastLayerInputGrad(p, s);
  for (int r = 0; r < 5; ++r) EXPECT_NEAR(g[r], probs[r] - (r == s.label ? 1.0 : 0.0), 1e-14);
}

TEST(Model, LogisticGradientIsOuterProductOfLastLayerGrad) {
  Rng rng(5);
  const auto spec = Logistic(3, 4);
  const auto p = oracle::RandomParams(spec, 1.0, rng);
  const auto s = oracle::RandomSamples(1, 3, 4, rng)[0];
  const auto dz = LastLayerInputGrad(p, s);
  const auto g = PerSampleGrad(p, s);
  for (int r = 0; r < 4; ++r) {
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(g[r * 4 + j], dz[r] * s.features[j], 1e-14);
    EXPECT_NEAR(g[r * 4 + 3], dz[r], 1e-14);
  }
}

TEST(Model, ZeroLearningRateLeavesParameters) {
  Rng rng(6);
  const auto spec = Logistic(4, 3, 0.1);
  const auto p = oracle::RandomParams(spec, 1.0, rng);
  const auto samples = oracle::RandomSamples(17, 4, 3, rng);
  Rng shuffle(0);
  EXPECT_EQ(SgdEpoch(p, samples, FullView(17), 0.0, 4, std::nullopt, shuffle).values, p.values);
}

TEST(Model, FullBatchEpochIsOneGradientStep) {
  Rng rng(7);
  const auto spec = Mlp(3, 3, 4, 0.05);
  const auto p = oracle::RandomParams(spec, 0.5, rng);
  const auto samples = oracle::RandomSamples(11, 3, 3, rng);
  const WeightedView view = {{0, 2}, {3, 1}, {5, 4}, {10, 1}};
  Rng shuffle(9);
  const auto next = SgdEpoch(p, samples, view, 0.3, view.size(), std::nullopt, shuffle);
  const auto g = MeanGradient(p, samples, view);
  for (size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(next.values[i], p.values[i] - 0.3 * g[i], 1e-14);
}

TEST(Model, ProximalTermPullsTowardAnchor) {
  Rng rng(8);
  const auto spec = Logistic(3, 2);
  const auto p = oracle::RandomParams(spec, 1.0, rng);
  const auto anchor = oracle::RandomParams(spec, 1.0, rng);
  const auto samples = oracle::RandomSamples(4, 3, 2, rng);
  Rng a(1), b(1);
  const auto plain = SgdEpoch(p, samples, FullView(4), 0.1, 4, std::nullopt, a);
  const auto prox = SgdEpoch(p, samples, FullView(4), 0.1, 4, Proximal{0.5, &anchor}, b);
  for (size_t i = 0; i < p.values.size(); ++i) {
    EXPECT_NEAR(prox.values[i], plain.values[i] - 0.1 * 0.5 * (p.values[i] - anchor.values[i]), 1e-14);
  }
}

TEST(Model, VisitorSeesEverySampleOnce) {
  Rng rng(9);
  const auto spec = Logistic(2, 2);
  const auto p = oracle::RandomParams(spec, 1.0, rng);
  const auto samples = oracle::RandomSamples(10, 2, 2, rng);
  std::vector<int> seen(10, 0);
  Rng shuffle(3);
  SgdEpoch(p, samples, FullView(10), 0.1, 3, std::nullopt, shuffle,
           [&](size_t j, const ParamVector&) { ++seen[j]; });
  for (int v : seen) EXPECT_EQ(v, 1);
}

// Along any direction, the ridge-regularized logistic loss has curvature at
// least l2: f(w+u) + f(w-u) - 2 f(w) >= l2 ||u||^2.
TEST(Model, RidgeGivesStrongConvexity) {
  Rng rng(10);
  const double l2 = 0.25;
  const auto spec = Logistic(4, 3, l2);
  const auto samples = oracle::RandomSamples(30, 4, 3, rng);
  for (int trial = 0; trial < 50; ++trial) {
    const auto w = oracle::RandomParams(spec, 1.0, rng);
    auto u = oracle::RandomParams(spec, 0.1, rng);
    ParamVector plus = w, minus = w;
    double un = 0.0;
    for (size_t i = 0; i < w.values.size(); ++i) {
      plus.values[i] += u.values[i];
      minus.values[i] -= u.values[i];
      un += u.values[i] * u.values[i];
    }
    const auto view = FullView(30);
    const double second = MeanLoss(plus, samples, view) + MeanLoss(minus, samples, view) -
                          2.0 * MeanLoss(w, samples, view);
    EXPECT_GE(second, l2 * un * (1.0 - 1e-9));
  }
}

TEST(Model, CheckpointRoundTrip) {
  Rng rng(11);
  const auto spec = Mlp(3, 2, 4, 0.5);
  const auto p = oracle::RandomParams(spec, 1.0, rng);
  const auto path = (std::filesystem::temp_directory_path() / "fedsim_params.bin").string();
  SaveParams(p, path);
  const auto back = LoadParams(path);
  EXPECT_EQ(back.values, p.values);
  EXPECT_EQ(back.spec, p.spec);
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".json");
  EXPECT_THROW(LoadParams(path), ModelError);
}

TEST(Model, InitIsZeroForLogisticAndSeededForMlp) {
  const auto lz = InitParams(Logistic(5, 3), 1);
  for (double v : lz.values) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(InitParams(Mlp(5, 3, 4), 1).values, InitParams(Mlp(5, 3, 4), 1).values);
  EXPECT_NE(InitParams(Mlp(5, 3, 4), 1).values, InitParams(Mlp(5, 3, 4), 2).values);
}

TEST(Model, EvaluateAccuracy) {
  const auto spec = Logistic(1, 2);
  // Logit difference z1 - z0 = 2x: class 1 for x > 0.
  ParamVector p{{0.0, 0.0, 2.0, 0.0}, spec};
  const std::vector<Sample> separable = {{{1.0}, 1}, {{-1.0}, 0}, {{3.0}, 1}, {{-0.5}, 0}};
  EXPECT_EQ(Evaluate(p, separable).accuracy, 1.0);
  const std::vector<Sample> flipped = {{{1.0}, 0}, {{-1.0}, 0}};
  EXPECT_EQ(Evaluate(p, flipped).accuracy, 0.5);
  // At zero every prediction ties and goes to class 0.
  const ParamVector zero{std::vector<double>(4, 0.0), spec};
  EXPECT_EQ(Evaluate(zero, flipped).accuracy, 1.0);
  EXPECT_NEAR(Evaluate(zero, flipped).loss, std::log(2.0), 1e-15);
  EXPECT_THROW(Evaluate(zero, std::vector<Sample>{}), ModelError);
}

TEST(Model, ShapeMismatchThrows) {
  const auto spec = Logistic(3, 2);
  const ParamVector p{std::vector<double>(spec.ParamCount(), 0.0), spec};
  EXPECT_THROW(PerSampleLoss(p, Sample{{1.0, 2.0}, 0}), ModelError);
  EXPECT_THROW(PerSampleLoss(p, Sample{{1.0, 2.0, 3.0}, 2}), ModelError);
}

}  // namespace
}  // namespace fedsim
