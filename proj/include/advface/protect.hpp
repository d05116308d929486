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

// Feature protection: bounded sign-gradient ascent on a shadow decoder's
// reconstruction loss, plus the random-noise and Laplace-noise baselines.

#ifndef ADVFACE_PROTECT_HPP_
#define ADVFACE_PROTECT_HPP_

#include <cstdint>
#include <functional>
#include <vector>

#include "json.hpp"
#include "advface/nn/sequential.hpp"
#include "advface/protection_config.hpp"
#include "advface/tensor.hpp"

namespace advface::recog {
class SplitRecognizer;
}
namespace advface::recon {
class ReconModel;
}

namespace advface::protect {

// +1, -1 or 0.
inline float Sign(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

// Image batch -> feature batch.
using FeatureMap = std::function<Tensor(const Tensor& images)>;

struct RoundTrip {
  Tensor shadow_images;    // S(z)
  Tensor shadow_features;  // E(S(z))
  bool batch_stats = false;
};

// Decodes z with the shadow and re-extracts. With bn_batch_stats and at least
// two features the shadow normalizes with the batch's own statistics;
// otherwise it falls back to its running statistics.
RoundTrip ShadowRoundTrip(const nn::Sequential& shadow, const FeatureMap& extract,
                          const Tensor& z, bool bn_batch_stats);
RoundTrip ShadowRoundTrip(const nn::Sequential& shadow, const recog::SplitRecognizer& recognizer,
                          const Tensor& z, bool bn_batch_stats);

// Gradient of sum |shadow(z) - target| with respect to z, using whatever
// normalization state `shadow` is in (kEval plus any frozen overrides).
// Residuals that are exactly zero contribute nothing. Throws NumericError on
// non-finite values. Writes the per-sample losses when asked.
Tensor ShadowLossGradient(nn::Sequential& shadow, const Tensor& z, const Tensor& target,
                          std::vector<double>* losses = nullptr);

// Per-sample sum |shadow(z) - target| without gradients.
std::vector<double> ShadowLoss(nn::Sequential& shadow, const Tensor& z, const Tensor& target);

// Projected sign ascent from `start` for config.iterations steps. In ball
// mode every iterate is clipped to start +/- epsilon; in per-step mode each
// step is clipped to +/- epsilon instead.
Tensor SignAscent(nn::Sequential& shadow, const Tensor& start, const Tensor& target,
                  const ProtectionConfig& config);

struct BatchRecord {
  int begin = 0;
  int count = 0;
  bool batch_stats = false;
};

struct ProtectLog {
  std::vector<BatchRecord> batches;
  std::vector<double> loss_start;  // shadow loss at the shadow feature
  std::vector<double> loss_end;    // shadow loss at the protected feature

  nlohmann::json ToJson() const;
};

// Full defense: round trip per config.batch_size group (arrival order), then
// sign ascent from the shadow feature against the shadow image. The shadow
// is run with its normalization frozen to the group's statistics.
Tensor GenerateAdversarial(const nn::Sequential& shadow, const FeatureMap& extract,
                           const Tensor& z, const ProtectionConfig& config,
                           ProtectLog* log = nullptr);
Tensor ShadowFeatures(const nn::Sequential& shadow, const FeatureMap& extract, const Tensor& z,
                      const ProtectionConfig& config, ProtectLog* log = nullptr);

// As above, after checking that shadow and recognizer share an extractor.
Tensor GenerateAdversarial(const recon::ReconModel& shadow,
                           const recog::SplitRecognizer& recognizer, const Tensor& z,
                           const ProtectionConfig& config, ProtectLog* log = nullptr);

// Shadow features only (what an unprotected deployment stores).
Tensor ShadowFeatures(const recon::ReconModel& shadow, const recog::SplitRecognizer& recognizer,
                      const Tensor& z, const ProtectionConfig& config,
                      ProtectLog* log = nullptr);

// Adds U[-bound, bound] noise per element, `iterations` times, unprojected.
Tensor ProtectRandom(const Tensor& base, int iterations, float bound, std::uint64_t seed);

// Adds Laplace(0, noise_bound / budget) noise per element.
Tensor ProtectDp(const Tensor& base, float budget, float noise_bound, std::uint64_t seed);

}  // namespace advface::protect

#endif  // ADVFACE_PROTECT_HPP_
