// Copyright 2026 The AdvFace Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "advface/error.hpp"
#include "advface/nn/layers.hpp"
#include "advface/nn/sequential.hpp"
#include "advface/protect.hpp"
#include "oracles.hpp"

namespace advface::protect {
namespace {

using namespace oracle;

TEST(ProtectTest, SignIsTernary) {
  EXPECT_EQ(Sign(3.5f), 1.0f);
  EXPECT_EQ(Sign(-1e-30f), -1.0f);
  EXPECT_EQ(Sign(0.0f), 0.0f);
  EXPECT_EQ(Sign(-0.0f), 0.0f);
}

TEST(ProtectTest, LossGradientMatchesCentralDifferences) {
  nn::Sequential shadow;
  shadow.Emplace<nn::ConvTranspose2d>(4, 3, 3, 1, 0, 0);
  shadow.Emplace<nn::BatchNorm2d>(3);
  shadow.Emplace<nn::Sigmoid>();
  shadow.Init(5);
  FillParams(shadow, -1.0f, 1.0f, 6);
  auto* bn = shadow.Norms().front();
  for (float& v : *bn->Buffers()[1]) v = 0.5f;

  const Tensor z = Uniform(2, {4, 3, 3}, -1.0f, 1.0f, 7);
  // Keep every residual well away from zero so the loss is smooth near z.
  Tensor target = shadow.Forward(z, nn::Mode::kEval);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<float> off(0.05f, 0.2f);
  for (float& v : target.values()) v += (rng() & 1 ? 1.0f : -1.0f) * off(rng);

  std::vector<double> losses;
  const Tensor grad = ShadowLossGradient(shadow, z, target, &losses);
  EXPECT_NEAR(losses[0] + losses[1], ReferenceLoss(shadow, z, target), 1e-4);

  const double h = 1e-3;
  std::uniform_int_distribution<std::size_t> pick(0, z.size() - 1);
  for (int k = 0; k < 24; ++k) {
    const std::size_t i = pick(rng);
    Tensor plus = z, minus = z;
    plus.data()[i] += static_cast<float>(h);
    minus.data()[i] -= static_cast<float>(h);
    const double step = static_cast<double>(plus.data()[i]) - minus.data()[i];
    const double numeric =
        (ReferenceLoss(shadow, plus, target) - ReferenceLoss(shadow, minus, target)) / step;
    const double analytic = grad.data()[i];
    const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-8});
    EXPECT_LE(rel, 1e-3) << "coordinate " << i << " analytic " << analytic << " numeric " << numeric;
  }
}

TEST(ProtectTest, LinearShadowSaturatesTheBall) {
  // Positive weights everywhere: the residual stays positive and every
  // gradient coordinate is positive, so the first step reaches the upper face.
  nn::Sequential shadow;
  shadow.Emplace<nn::Conv2d>(2, 3, 1, 1, 0);
  FillParams(shadow, 1.0f, 2.0f, 11);
  shadow.Params()[1]->value.assign(3, 0.0f);
  auto enc = std::make_shared<nn::Sequential>();
  enc->Emplace<nn::Conv2d>(3, 2, 1, 1, 0);
  FillParams(*enc, 1.0f, 2.0f, 12);
  enc->Params()[1]->value.assign(2, 0.0f);
  const FeatureMap extract = [enc](const Tensor& x) { return enc->Forward(x, nn::Mode::kEval); };

  const Tensor z = Uniform(5, {2, 4, 4}, 0.1f, 1.0f, 13);
  ProtectionConfig cfg;
  const Tensor shadow_feature = ShadowFeatures(shadow, extract, z, cfg);
  const Tensor adv = GenerateAdversarial(shadow, extract, z, cfg);
  for (std::size_t i = 0; i < z.size(); ++i) {
    ASSERT_GT(shadow_feature.data()[i], z.data()[i]);
    EXPECT_EQ(adv.data()[i], shadow_feature.data()[i] + cfg.epsilon) << i;
  }
}

TEST(ProtectTest, IteratesStayInsideTheBall) {
  const nn::Sequential shadow = TinyShadow(21);
  const FeatureMap extract = TinyExtractor(22);
  const Tensor z = Uniform(1024, {4, 3, 3}, 0.0f, 2.0f, 23);
  ProtectionConfig cfg;
  cfg.batch_size = 64;
  const Tensor base = ShadowFeatures(shadow, extract, z, cfg);
  ProtectLog log;
  const Tensor adv = GenerateAdversarial(shadow, extract, z, cfg, &log);
  int violations = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (std::abs(adv.data()[i] - base.data()[i]) > cfg.epsilon + 1e-6f) ++violations;
  }
  EXPECT_EQ(violations, 0);
  ASSERT_EQ(log.batches.size(), 16u);
  EXPECT_EQ(log.batches[3].begin, 192);
  EXPECT_TRUE(log.batches[3].batch_stats);

  int ascended = 0;
  for (std::size_t i = 0; i < log.loss_start.size(); ++i) {
    ascended += log.loss_end[i] >= log.loss_start[i];
  }
  EXPECT_GE(ascended, static_cast<int>(0.95 * log.loss_start.size()));

  cfg.epsilon = 0.0f;
  const Tensor same = GenerateAdversarial(shadow, extract, z, cfg);
  EXPECT_EQ(same.values(), base.values());
}

TEST(ProtectTest, ZeroIterationsReturnTheShadowFeature) {
  const nn::Sequential shadow = TinyShadow(31);
  const FeatureMap extract = TinyExtractor(32);
  const Tensor z = Uniform(6, {4, 3, 3}, 0.0f, 1.0f, 33);
  ProtectionConfig cfg;
  cfg.iterations = 0;
  EXPECT_EQ(GenerateAdversarial(shadow, extract, z, cfg).values(),
            ShadowFeatures(shadow, extract, z, cfg).values());
}

TEST(ProtectTest, PerStepModeBoundsEachStep) {
  const nn::Sequential shadow = TinyShadow(41);
  const FeatureMap extract = TinyExtractor(42);
  const Tensor z = Uniform(8, {4, 3, 3}, 0.0f, 1.0f, 43);
  ProtectionConfig cfg;
  cfg.bound_mode = BoundMode::kPerStep;
  cfg.iterations = 3;
  cfg.epsilon = 0.1f;
  const Tensor base = ShadowFeatures(shadow, extract, z, cfg);
  const Tensor adv = GenerateAdversarial(shadow, extract, z, cfg);
  float drift = 0.0f;
  for (std::size_t i = 0; i < z.size(); ++i) {
    drift = std::max(drift, std::abs(adv.data()[i] - base.data()[i]));
  }
  EXPECT_LE(drift, 3 * cfg.epsilon + 1e-6f);
  EXPECT_GT(drift, cfg.epsilon);
}

TEST(ProtectTest, SingleFeatureFallsBackToRunningStatistics) {
  const nn::Sequential shadow = TinyShadow(51);
  const Tensor z = Uniform(1, {4, 3, 3}, 0.0f, 1.0f, 52);
  const RoundTrip rt = ShadowRoundTrip(shadow, TinyExtractor(53), z, true);
  EXPECT_FALSE(rt.batch_stats);
  EXPECT_TRUE(rt.shadow_images.AllFinite());
  const RoundTrip zero = ShadowRoundTrip(shadow, TinyExtractor(53), Tensor(3, {4, 3, 3}), true);
  EXPECT_TRUE(zero.batch_stats);
  EXPECT_TRUE(zero.shadow_images.AllFinite());
  EXPECT_TRUE(zero.shadow_features.AllFinite());
}

TEST(ProtectTest, NonFiniteGradientReportsIteration) {
  nn::Sequential shadow = TinyShadow(61);
  const Tensor start = Uniform(2, {4, 3, 3}, 0.0f, 1.0f, 62);
  const Tensor target = shadow.Forward(start, nn::Mode::kEval);
  shadow.Params().back()->value[0] = std::numeric_limits<float>::quiet_NaN();
  ProtectionConfig cfg;
  try {
    SignAscent(shadow, start, target, cfg);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(e.iteration(), 0);
  }
  Tensor bad = start;
  bad.data()[3] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(SignAscent(shadow, bad, target, cfg), ContractError);
}

TEST(ProtectTest, RandomNoiseHasSummedUniformVariance) {
  const Tensor zero(1, {1, 100, 100});
  const Tensor noisy = ProtectRandom(zero, 40, 0.2f, 71);
  double mean = 0, var = 0;
  for (float v : noisy.values()) mean += v;
  mean /= noisy.size();
  for (float v : noisy.values()) var += (v - mean) * (v - mean);
  var /= noisy.size() - 1;
  const double expected = 40 * 0.2 * 0.2 / 3.0;
  EXPECT_NEAR(var, expected, 0.03 * expected);
  EXPECT_NEAR(mean, 0.0, 0.03);
  EXPECT_EQ(ProtectRandom(zero, 40, 0.0f, 71).values(), zero.values());
  EXPECT_EQ(ProtectRandom(zero, 40, 0.2f, 71).values(), noisy.values());
  EXPECT_NE(ProtectRandom(zero, 40, 0.2f, 72).values(), noisy.values());
}

TEST(ProtectTest, LaplaceNoiseHasScaleMeanAbsolute) {
  const Tensor zero(1, {1, 1, 100000});
  const Tensor noisy = ProtectDp(zero, 1.0f, 0.2f, 81);
  double mean_abs = 0;
  for (float v : noisy.values()) mean_abs += std::abs(v);
  mean_abs /= noisy.size();
  EXPECT_NEAR(mean_abs, 0.2, 0.004);
  const Tensor base = Uniform(1, {2, 8, 8}, -1.0f, 1.0f, 82);
  const Tensor tight = ProtectDp(base, 1e6f, 0.2f, 83);
  for (std::size_t i = 0; i < base.size(); ++i) {
    EXPECT_NEAR(tight.data()[i], base.data()[i], 1e-3);
  }
  EXPECT_THROW(ProtectDp(base, 0.0f, 0.2f, 1), ParameterError);
  EXPECT_THROW(ProtectDp(base, -1.0f, 0.2f, 1), ParameterError);
}

}  // namespace
}  // namespace advface::protect
