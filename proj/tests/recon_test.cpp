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

#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "advface/error.hpp"
#include "advface/recognizer.hpp"
#include "advface/recon.hpp"

namespace advface::recon {
namespace {

namespace fs = std::filesystem;

// Feature shape of the desk extractor at 64 px.
Shape DeskFeatureShape() {
  return recog::SplitRecognizer::Build(recog::RecognizerConfig{}, {"a", "b"}).feature_shape();
}

Tensor Random(int n, Shape s, float lo, float hi, std::uint32_t seed) {
  Tensor t(n, s);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

class EveryKind : public ::testing::TestWithParam<ReconKind> {};

TEST_P(EveryKind, OutputIsAnImageInUnitRange) {
  const Shape fs = DeskFeatureShape();
  ReconModel m(GetParam(), Role::kAttacker, fs, 64, "h", {}, 5);
  const Tensor out = m.Reconstruct(Random(3, fs, -50.0f, 50.0f, 1));
  EXPECT_EQ(out.shape(), (Shape{3, 64, 64}));
  for (float v : out.values()) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
  const Tensor zero = m.Reconstruct(Tensor(1, fs));
  EXPECT_TRUE(zero.AllFinite());
}

TEST_P(EveryKind, ReconstructionIsDeterministic) {
  const Shape fs = DeskFeatureShape();
  ReconModel m(GetParam(), Role::kShadow, fs, 64, "h", {}, 6);
  Tensor z = Random(2, fs, -1.0f, 1.0f, 2);
  z.SetSample(1, Tensor(z.Slice(0, 1)).sample(0));
  const Tensor a = m.Reconstruct(z);
  EXPECT_TRUE(std::equal(a.sample(0).begin(), a.sample(0).end(), a.sample(1).begin()));
  const Tensor b = m.Reconstruct(z);
  EXPECT_EQ(a.values(), b.values());
  EXPECT_THROW(m.Reconstruct(Tensor(1, Shape{fs.c, fs.h + 1, fs.w})), ContractError);
}

INSTANTIATE_TEST_SUITE_P(Kinds, EveryKind,
                         ::testing::Values(ReconKind::kTransRec, ReconKind::kResRec,
                                           ReconKind::kURec),
                         [](const auto& info) { return std::string(ReconKindName(info.param)); });

TEST(BuildTest, UnreachableSizesAreRejected) {
  for (ReconKind k : kAllKinds) {
    EXPECT_THROW(BuildRecon(k, {16, 2, 2}, 64), BuildError) << ReconKindName(k);
    EXPECT_THROW(BuildRecon(k, {16, 40, 40}, 32), BuildError) << ReconKindName(k);
  }
}

TEST(BuildTest, NamesParse) {
  EXPECT_EQ(ParseReconKind("resnet"), ReconKind::kResRec);
  EXPECT_EQ(ParseReconKind("unet"), ReconKind::kURec);
  EXPECT_EQ(ParseReconKind("transrec"), ReconKind::kTransRec);
  EXPECT_THROW(ParseReconKind("gan"), ConfigError);
  EXPECT_EQ(RequiredSplit(Role::kAttacker), data::Split::kAttackerTrain);
  EXPECT_EQ(RequiredSplit(Role::kShadow), data::Split::kShadowTrain);
}

TEST(LossTest, MeanL1MatchesSummedOracle) {
  const Tensor pred = Random(10, {3, 16, 16}, 0.0f, 1.0f, 3);
  const Tensor target = Random(10, {3, 16, 16}, 0.0f, 1.0f, 4);
  long double sum = 0.0L;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    sum += std::fabs(static_cast<long double>(pred.values()[i]) - target.values()[i]);
  }
  Tensor grad;
  const double mean = MeanL1Loss(pred, target, &grad);
  EXPECT_NEAR(mean * pred.size(), static_cast<double>(sum), 1e-5 * static_cast<double>(sum));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const float d = pred.values()[i] - target.values()[i];
    const float expect = (d > 0 ? 1.0f : (d < 0 ? -1.0f : 0.0f)) / pred.size();
    ASSERT_FLOAT_EQ(grad.values()[i], expect);
  }
}

struct ToyData {
  Shape fs{8, 8, 8};
  Tensor z, x;
  data::DatasetManifest manifest;
};

// Images are a fixed smooth function of the features, so a decoder can learn it.
ToyData Toy(int n) {
  ToyData d;
  d.z = Random(n, d.fs, -1.0f, 1.0f, 7);
  d.x = Tensor(n, Shape{3, 16, 16});
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 16; ++y)
        for (int xx = 0; xx < 16; ++xx)
          d.x.at(i, c, y, xx) =
              1.0f / (1.0f + std::exp(-2.0f * d.z.at(i, c, y / 2, xx / 2)));
  d.manifest.split = data::Split::kAttackerTrain;
  for (int i = 0; i < n; ++i) d.manifest.entries.push_back({"p", std::to_string(i)});
  return d;
}

TEST(TrainTest, HeldOutLossMatchesPerSampleOracle) {
  const auto d = Toy(10);
  ReconModel m(ReconKind::kTransRec, Role::kAttacker, d.fs, 16, "h", {}, 8);
  const Tensor r = m.Reconstruct(d.z);
  std::vector<double> per_sample;
  for (int i = 0; i < 10; ++i) {
    long double s = 0.0L;
    for (std::size_t k = 0; k < r.sample_size(); ++k) {
      s += std::fabs(static_cast<long double>(r.sample(i)[k]) - d.x.sample(i)[k]);
    }
    per_sample.push_back(static_cast<double>(s / r.sample_size()));
  }
  ReconConfig cfg;
  cfg.epochs = 1;
  ReconTrainLog log;
  TrainRecon(m, d.manifest, d.z, d.x, cfg, &log);
  // One sample is held out; its pre-training loss must be one of the oracle values.
  bool matched = false;
  for (double v : per_sample) matched |= std::abs(v - log.heldout_before) <= 1e-5 * v;
  EXPECT_TRUE(matched) << log.heldout_before;
}

TEST(TrainTest, LossFallsAndZeroEpochsIsNoOp) {
  const auto d = Toy(256);
  ReconModel m(ReconKind::kTransRec, Role::kAttacker, d.fs, 16, "h", {}, 9);
  ReconConfig cfg;
  cfg.lr = 3e-3f;
  cfg.epochs = 0;
  ReconTrainLog log;
  const auto same = TrainRecon(m, d.manifest, d.z, d.x, cfg, &log);
  EXPECT_EQ(same.fingerprint(), m.fingerprint());
  EXPECT_TRUE(log.epoch_loss.empty());

  cfg.epochs = 6;
  const auto trained = TrainRecon(m, d.manifest, d.z, d.x, cfg, &log);
  ASSERT_EQ(log.epoch_loss.size(), 6u);
  int falls = 0;
  for (int e = 1; e < 5; ++e) falls += log.epoch_loss[e] < log.epoch_loss[e - 1];
  EXPECT_GE(falls, 3);  // a mostly-decreasing early curve
  EXPECT_LT(log.heldout_after, log.heldout_before);
  EXPECT_NE(trained.fingerprint(), m.fingerprint());
}

TEST(TrainTest, WrongSplitOrShapeIsAContractError) {
  auto d = Toy(8);
  ReconModel shadow(ReconKind::kTransRec, Role::kShadow, d.fs, 16, "h", {}, 1);
  EXPECT_THROW(TrainRecon(shadow, d.manifest, d.z, d.x, ReconConfig{}), ContractError);
  ReconModel attacker(ReconKind::kTransRec, Role::kAttacker, d.fs, 16, "h", {}, 1);
  EXPECT_THROW(TrainRecon(attacker, d.manifest, d.z.Slice(0, 4), d.x, ReconConfig{}),
               ContractError);
}

TEST(CheckpointTest, RoundTripKeepsProvenance) {
  const Shape fs = DeskFeatureShape();
  ReconModel m(ReconKind::kURec, Role::kShadow, fs, 64, "extractor-1", {}, 11);
  const fs::path p = fs::temp_directory_path() / "advface_recon_test.ckpt";
  m.Save(p);
  const auto back = ReconModel::Load(p);
  fs::remove(p);
  EXPECT_EQ(back.kind(), ReconKind::kURec);
  EXPECT_EQ(back.role(), Role::kShadow);
  EXPECT_EQ(back.extractor_hash(), "extractor-1");
  EXPECT_EQ(back.fingerprint(), m.fingerprint());
  const Tensor z = Random(1, fs, -1.0f, 1.0f, 12);
  EXPECT_EQ(back.Reconstruct(z).values(), m.Reconstruct(z).values());
}

}  // namespace
}  // namespace advface::recon
