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
#include <map>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "advface/error.hpp"
#include "advface/eval.hpp"
#include "advface/metrics.hpp"
#include "advface/recognizer.hpp"
#include "advface/recon.hpp"
#include "advface/synth_faces.hpp"

namespace advface::eval {
namespace {

namespace fs = std::filesystem;
using recon::ReconKind;

recog::RecognizerConfig TinyConfig() {
  recog::RecognizerConfig c;
  c.image_size = 32;
  c.extractor_channels = {8, 8, 8};
  c.tail_channels = {8, 8, 16, 16};
  c.embedding_dim = 16;
  return c;
}

struct Fixture {
  recog::SplitRecognizer rec;
  std::vector<data::FaceImage> faces;  // 6 identities x 4 images
  Tensor z;
  std::vector<data::VaultRecord> vault;       // images 1..3 of each identity
  std::vector<data::VaultRecord> enrollment;  // image 0 of each identity
};

data::VaultRecord Record(const recog::SplitRecognizer& rec, const data::FaceImage& f,
                         std::span<const float> z) {
  data::VaultRecord r;
  r.record_id = f.source_id;
  r.identity = f.identity;
  r.source_id = f.source_id;
  r.shape = rec.feature_shape();
  r.feature.assign(z.begin(), z.end());
  r.extractor_hash = rec.extractor_hash();
  return r;
}

const Fixture& Get() {
  static const Fixture fx = [] {
    Fixture f;
    f.rec = recog::SplitRecognizer::Build(TinyConfig(), {"a", "b"});
    data::SynthOptions o;
    o.size = 40;
    for (int i = 0; i < 6; ++i)
      for (int k = 0; k < 4; ++k)
        f.faces.push_back(data::Preprocess(data::RenderSyntheticFace(i, k, o), 32,
                                           "id" + std::to_string(i),
                                           std::to_string(i) + "/" + std::to_string(k)));
    f.z = f.rec.Extract(data::ToBatch(f.faces));
    for (std::size_t i = 0; i < f.faces.size(); ++i) {
      auto r = Record(f.rec, f.faces[i], f.z.sample(static_cast<int>(i)));
      (i % 4 == 0 ? f.enrollment : f.vault).push_back(r);
    }
    return f;
  }();
  return fx;
}

// Hands back the original image of every record, i.e. a perfect inverter.
Reconstructor Oracle() {
  return [](std::span<const data::VaultRecord> records) {
    const auto& fx = Get();
    std::map<std::string, int> index;
    for (std::size_t i = 0; i < fx.faces.size(); ++i) index[fx.faces[i].source_id] = i;
    std::vector<data::FaceImage> out;
    for (const auto& r : records) out.push_back(fx.faces[index.at(r.source_id)]);
    return data::ToBatch(out);
  };
}

TEST(ReplayTest, PerfectInverterMatchesGenuineAcceptance) {
  const auto& fx = Get();
  // Independent count: verify each vault feature against its identity's image 0.
  std::vector<double> d;
  for (std::size_t i = 0; i < fx.faces.size(); ++i) {
    if (i % 4 == 0) continue;
    const int e = static_cast<int>(i / 4 * 4);
    d.push_back(recog::PairDistances(fx.rec, fx.z.Slice(static_cast<int>(i), 1),
                                     fx.z.Slice(e, 1))[0]);
  }
  std::vector<double> sorted = d;
  std::sort(sorted.begin(), sorted.end());
  // Midway between two observed distances, so float noise cannot flip a pair.
  const double threshold = 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
  int expected = 0;
  for (double v : d) expected += v <= threshold;

  const auto r = RunReplayAttack(Oracle(), fx.rec, threshold, fx.vault, fx.enrollment);
  EXPECT_EQ(r.total, 18);
  EXPECT_EQ(r.skipped, 0);
  EXPECT_EQ(r.accepted, expected);
  EXPECT_DOUBLE_EQ(r.srra(), static_cast<double>(expected) / 18);
}

TEST(ReplayTest, MonotoneInThreshold) {
  const auto& fx = Get();
  double last = -1.0;
  for (double t : {0.0, 0.001, 0.01, 0.05, 0.1, 0.3, 1.0, 2.0, 4.0}) {
    const double s = RunReplayAttack(Oracle(), fx.rec, t, fx.vault, fx.enrollment).srra();
    EXPECT_GE(s, last) << t;
    last = s;
  }
  EXPECT_DOUBLE_EQ(last, 1.0);
}

TEST(ReplayTest, MissingEnrollmentIsSkippedAndCounted) {
  const auto& fx = Get();
  std::vector<data::VaultRecord> enroll(fx.enrollment.begin() + 1, fx.enrollment.end());
  const auto r = RunReplayAttack(Oracle(), fx.rec, 4.0, fx.vault, enroll);
  EXPECT_EQ(r.skipped, 3);
  EXPECT_EQ(r.total, 15);

  // The only enrollment is the record's own source: skipped unless allowed.
  std::vector<data::VaultRecord> self = {fx.vault[0]};
  std::vector<data::VaultRecord> one = {fx.vault[0]};
  EXPECT_EQ(RunReplayAttack(Oracle(), fx.rec, 4.0, one, self).skipped, 1);
  EXPECT_EQ(RunReplayAttack(Oracle(), fx.rec, 4.0, one, self, true).accepted, 1);
}

TEST(ReplayTest, ForeignExtractorIsAContractError) {
  const auto& fx = Get();
  auto vault = fx.vault;
  vault[2].extractor_hash = "elsewhere";
  EXPECT_THROW(RunReplayAttack(Oracle(), fx.rec, 1.0, vault, fx.enrollment), ContractError);
}

TEST(ReconstructionTest, EmptyVaultIsUndefined) {
  const auto& fx = Get();
  recon::ReconModel m(ReconKind::kTransRec, recon::Role::kAttacker, fx.rec.feature_shape(), 32,
                      fx.rec.extractor_hash(), {}, 1);
  const auto r = RunReconstructionAttack(m, {}, fx.faces);
  EXPECT_FALSE(r.defined);
  EXPECT_EQ(r.samples, 0);
}

TEST(ReconstructionTest, ScoresMatchPerImageMetrics) {
  const auto& fx = Get();
  recon::ReconModel m(ReconKind::kTransRec, recon::Role::kAttacker, fx.rec.feature_shape(), 32,
                      fx.rec.extractor_hash(), {}, 2);
  const auto r = RunReconstructionAttack(m, fx.vault, fx.faces);
  ASSERT_TRUE(r.defined);
  EXPECT_EQ(r.samples, 18);
  double ssim = 0.0, mse = 0.0;
  for (int i = 0; i < 18; ++i) {
    const auto& orig = fx.faces[static_cast<std::size_t>(i / 3 * 4 + i % 3 + 1)];
    const auto rec_img = data::FromBatch(r.images, i);
    ssim += Ssim(rec_img, orig);
    mse += Mse(rec_img, orig);
  }
  EXPECT_NEAR(r.ssim, ssim / 18, 1e-9);
  EXPECT_NEAR(r.mse, mse / 18, 1e-12);
  EXPECT_NEAR(r.psnr, PsnrFromMse(mse / 18), 1e-9);
}

TEST(ReconstructionTest, ProvenanceIsEnforced) {
  const auto& fx = Get();
  recon::ReconModel shadow(ReconKind::kTransRec, recon::Role::kShadow, fx.rec.feature_shape(),
                           32, fx.rec.extractor_hash(), {}, 3);
  EXPECT_THROW(RunReconstructionAttack(shadow, fx.vault, fx.faces), ContractError);
  recon::ReconModel other(ReconKind::kTransRec, recon::Role::kAttacker, fx.rec.feature_shape(),
                          32, "other-extractor", {}, 3);
  EXPECT_THROW(RunReconstructionAttack(other, fx.vault, fx.faces), ContractError);
  recon::ReconModel good(ReconKind::kTransRec, recon::Role::kAttacker, fx.rec.feature_shape(), 32,
                         fx.rec.extractor_hash(), {}, 3);
  std::vector<data::FaceImage> partial(fx.faces.begin(), fx.faces.begin() + 4);
  EXPECT_THROW(RunReconstructionAttack(good, fx.vault, partial), ContractError);
}

TEST(PairsTest, BalancedAndDeterministic) {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i)
    for (int k = 0; k < 5; ++k) ids.push_back("p" + std::to_string(i));
  const auto a = BalancedPairs(ids, 1000, 3);
  const auto b = BalancedPairs(ids, 1000, 3);
  ASSERT_EQ(a.size(), b.size());
  int genuine = 0;
  std::set<std::pair<int, int>> seen;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].a, b[i].a);
    EXPECT_EQ(a[i].b, b[i].b);
    EXPECT_EQ(a[i].same, ids[a[i].a] == ids[a[i].b]);
    EXPECT_NE(a[i].a, a[i].b);
    genuine += a[i].same;
    EXPECT_TRUE(seen.insert({std::min(a[i].a, a[i].b), std::max(a[i].a, a[i].b)}).second);
  }
  EXPECT_EQ(genuine, 100);  // 10 identities x C(5,2)
  EXPECT_EQ(a.size(), 200u);
  EXPECT_EQ(BalancedPairs(ids, 30, 3).size(), 60u);
}

TEST(PairsTest, VerificationOfIdenticalSidesIsConsistent) {
  const auto& fx = Get();
  std::vector<std::string> ids;
  for (const auto& f : fx.faces) ids.push_back(f.identity);
  const auto pairs = BalancedPairs(ids, 100, 1);
  const auto th = PairVerification(fx.rec, fx.z, fx.z, pairs, 4);
  EXPECT_GE(th.accuracy, 0.0);
  EXPECT_LE(th.accuracy, 1.0);
  EXPECT_EQ(th.fold_accuracy.size(), 4u);
}

EvalReport Cell(double ssim) {
  EvalReport r;
  r.ssim = ssim;
  r.mse = 0.01;
  r.psnr = PsnrFromMse(0.01);
  r.metrics_defined = true;
  return r;
}

TEST(GridTest, GapsAreExplicit) {
  const std::vector<ReconKind> kinds(std::begin(recon::kAllKinds), std::end(recon::kAllKinds));
  int runs = 0;
  const auto grid = RunTransferGrid(
      "toy", kinds, kinds, [](ReconKind k) { return k != ReconKind::kURec; },
      [](ReconKind) { return true; },
      [&](ReconKind s, ReconKind a) {
        ++runs;
        return Cell(s == a ? 0.30 : 0.35);
      });
  EXPECT_EQ(grid.cells.size(), 9u);
  EXPECT_EQ(runs, 6);
  const auto* gap = grid.Find(ReconKind::kURec, ReconKind::kTransRec);
  ASSERT_NE(gap, nullptr);
  EXPECT_FALSE(gap->report.has_value());
  EXPECT_NE(gap->gap.find("shadow"), std::string::npos);
  EXPECT_FALSE(grid.MaxDiagonalDeviation().has_value());
}

TEST(GridTest, DiagonalDeviationAndSpread) {
  const std::vector<ReconKind> kinds(std::begin(recon::kAllKinds), std::end(recon::kAllKinds));
  const auto grid = RunTransferGrid(
      "toy", kinds, kinds, [](ReconKind) { return true; }, [](ReconKind) { return true; },
      [](ReconKind s, ReconKind a) {
        if (s == a) return Cell(0.2 + 0.01 * static_cast<int>(s));
        return Cell(0.25 + 0.02 * static_cast<int>(a));
      });
  // Row URec (diag 0.22): cell (urec, resrec) 0.27 -> 0.05. Row TransRec (diag 0.20): 0.29 -> 0.09.
  ASSERT_TRUE(grid.MaxDiagonalDeviation().has_value());
  EXPECT_NEAR(*grid.MaxDiagonalDeviation(), 0.09, 1e-12);
  EXPECT_NEAR(*grid.SsimSpread(), 0.29 - 0.20, 1e-12);
}

TEST(ReportTest, InvariantsAndSerialization) {
  EvalReport r = Cell(0.5);
  r.srra = 0.25;
  r.acc = 0.9;
  r.srra_defined = r.acc_defined = true;
  EXPECT_NO_THROW(r.CheckInvariants());
  const auto back = EvalReport::FromJson(r.ToJson());
  EXPECT_EQ(back.ssim, r.ssim);
  EXPECT_EQ(back.srra, r.srra);
  r.psnr += 0.5;
  EXPECT_THROW(r.CheckInvariants(), ContractError);
  r = Cell(1.2);
  EXPECT_THROW(r.CheckInvariants(), ContractError);
  EXPECT_EQ(CsvHeader().size(), CsvRow(Cell(0.1)).size());
}

}  // namespace
}  // namespace advface::eval
