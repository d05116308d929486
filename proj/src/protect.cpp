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

#include "advface/protect.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <spdlog/spdlog.h>

#include "advface/error.hpp"
#include "advface/recognizer.hpp"
#include "advface/recon.hpp"

namespace advface::protect {

using nn::Mode;

RoundTrip ShadowRoundTrip(const nn::Sequential& shadow, const FeatureMap& extract,
                          const Tensor& z, bool bn_batch_stats) {
  RoundTrip rt;
  rt.batch_stats = bn_batch_stats && z.n() >= 2;
  if (bn_batch_stats && z.n() < 2) {
    spdlog::warn("batch statistics need at least 2 features; using running statistics");
  }
  nn::Sequential net = shadow;
  net.ClearBatchStatOverrides();
  rt.shadow_images = net.Forward(z, rt.batch_stats ? Mode::kBatchStats : Mode::kEval);
  rt.shadow_features = extract(rt.shadow_images);
  if (rt.shadow_features.n() != z.n() || rt.shadow_features.shape() != z.shape()) {
    throw ContractError("round trip changed the feature shape");
  }
  return rt;
}

namespace {

FeatureMap Extractor(const recog::SplitRecognizer& recognizer) {
  return [&recognizer](const Tensor& images) { return recognizer.Extract(images); };
}

void CheckPair(const recon::ReconModel& shadow, const recog::SplitRecognizer& recognizer,
               const Tensor& z) {
  if (shadow.extractor_hash() != recognizer.extractor_hash()) {
    throw ContractError("shadow model was trained on a different extractor's features");
  }
  if (z.shape() != recognizer.feature_shape()) {
    throw ContractError("feature shape " + z.shape().ToString() +
                        " does not match extractor output " +
                        recognizer.feature_shape().ToString());
  }
}

}  // namespace

RoundTrip ShadowRoundTrip(const nn::Sequential& shadow, const recog::SplitRecognizer& recognizer,
                          const Tensor& z, bool bn_batch_stats) {
  if (z.shape() != recognizer.feature_shape()) {
    throw ContractError("round trip: feature shape " + z.shape().ToString() +
                        " does not match extractor output " +
                        recognizer.feature_shape().ToString());
  }
  return ShadowRoundTrip(shadow, Extractor(recognizer), z, bn_batch_stats);
}

namespace {

double ResidualGrad(const Tensor& out, const Tensor& target, Tensor* grad,
                    std::vector<double>* losses) {
  if (out.n() != target.n() || out.shape() != target.shape()) {
    throw ContractError("shadow output and target differ in shape");
  }
  if (grad) *grad = Tensor(out.n(), out.shape());
  if (losses) losses->assign(out.n(), 0.0);
  double total = 0.0;
  const std::size_t per = out.sample_size();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float r = out.data()[i] - target.data()[i];
    const double a = std::abs(static_cast<double>(r));
    total += a;
    if (losses) (*losses)[i / per] += a;
    if (grad) grad->data()[i] = Sign(r);
  }
  return total;
}

}  // namespace

Tensor ShadowLossGradient(nn::Sequential& shadow, const Tensor& z, const Tensor& target,
                          std::vector<double>* losses) {
  shadow.SetParamGrads(false);
  const Tensor out = shadow.Forward(z, Mode::kEval);
  if (!out.AllFinite()) throw NumericError("shadow output is non-finite", -1);
  Tensor g;
  ResidualGrad(out, target, &g, losses);
  Tensor dz = shadow.Backward(g);
  if (!dz.AllFinite()) throw NumericError("shadow gradient is non-finite", -1);
  return dz;
}

std::vector<double> ShadowLoss(nn::Sequential& shadow, const Tensor& z, const Tensor& target) {
  std::vector<double> losses;
  ResidualGrad(shadow.Forward(z, Mode::kEval), target, nullptr, &losses);
  return losses;
}

Tensor SignAscent(nn::Sequential& shadow, const Tensor& start, const Tensor& target,
                  const ProtectionConfig& config) {
  config.Validate();
  if (!start.AllFinite()) throw ContractError("starting feature is non-finite");
  if (config.iterations == 0 || config.epsilon == 0.0f) return start;
  const float alpha = config.alpha;
  const float eps = config.epsilon;
  const std::size_t n = start.size();
  std::vector<float> lo(n), hi(n);
  for (std::size_t i = 0; i < n; ++i) {
    lo[i] = start.data()[i] - eps;
    hi[i] = start.data()[i] + eps;
  }
  Tensor z = start;
  for (int t = 0; t < config.iterations; ++t) {
    Tensor g;
    try {
      g = ShadowLossGradient(shadow, z, target);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at iteration " + std::to_string(t), t);
    }
    float* p = z.data();
    const float* d = g.data();
    if (config.bound_mode == BoundMode::kBall) {
      for (std::size_t i = 0; i < n; ++i) {
        p[i] = std::clamp(p[i] + alpha * Sign(d[i]), lo[i], hi[i]);
      }
    } else {
      const float step = std::min(alpha, eps);
      for (std::size_t i = 0; i < n; ++i) p[i] += step * Sign(d[i]);
    }
  }
  return z;
}

nlohmann::json ProtectLog::ToJson() const {
  nlohmann::json parts = nlohmann::json::array();
  for (const auto& b : batches) {
    parts.push_back({{"begin", b.begin}, {"count", b.count}, {"batch_stats", b.batch_stats}});
  }
  return {{"batches", parts}};
}

namespace {

// Shared driver: per group, round trip, freeze normalization, optional ascent.
Tensor RunGroups(const nn::Sequential& shadow, const FeatureMap& extract, const Tensor& z,
                 const ProtectionConfig& config, bool ascend, ProtectLog* log) {
  config.Validate();
  if (log) *log = ProtectLog{};
  Tensor out(z.n(), z.shape());
  for (int begin = 0; begin < z.n(); begin += config.batch_size) {
    const int count = std::min(config.batch_size, z.n() - begin);
    const Tensor group = z.Slice(begin, count);
    const RoundTrip rt = ShadowRoundTrip(shadow, extract, group, config.bn_batch_stats);
    Tensor result = rt.shadow_features;
    if (ascend) {
      nn::Sequential net = shadow;
      net.ClearBatchStatOverrides();
      if (rt.batch_stats) {
        net.Forward(rt.shadow_features, Mode::kBatchStats);
        net.FreezeBatchStats();
      }
      std::vector<double> before;
      if (log) before = ShadowLoss(net, rt.shadow_features, rt.shadow_images);
      result = SignAscent(net, rt.shadow_features, rt.shadow_images, config);
      if (log) {
        const auto after = ShadowLoss(net, result, rt.shadow_images);
        log->loss_start.insert(log->loss_start.end(), before.begin(), before.end());
        log->loss_end.insert(log->loss_end.end(), after.begin(), after.end());
      }
    }
    std::copy(result.values().begin(), result.values().end(),
              out.values().begin() + static_cast<std::ptrdiff_t>(begin * z.sample_size()));
    if (log) log->batches.push_back({begin, count, rt.batch_stats});
  }
  return out;
}

}  // namespace

Tensor GenerateAdversarial(const nn::Sequential& shadow, const FeatureMap& extract,
                           const Tensor& z, const ProtectionConfig& config, ProtectLog* log) {
  return RunGroups(shadow, extract, z, config, true, log);
}

Tensor ShadowFeatures(const nn::Sequential& shadow, const FeatureMap& extract, const Tensor& z,
                      const ProtectionConfig& config, ProtectLog* log) {
  return RunGroups(shadow, extract, z, config, false, log);
}

Tensor GenerateAdversarial(const recon::ReconModel& shadow,
                           const recog::SplitRecognizer& recognizer, const Tensor& z,
                           const ProtectionConfig& config, ProtectLog* log) {
  CheckPair(shadow, recognizer, z);
  return RunGroups(shadow.net(), Extractor(recognizer), z, config, true, log);
}

Tensor ShadowFeatures(const recon::ReconModel& shadow, const recog::SplitRecognizer& recognizer,
                      const Tensor& z, const ProtectionConfig& config, ProtectLog* log) {
  CheckPair(shadow, recognizer, z);
  return RunGroups(shadow.net(), Extractor(recognizer), z, config, false, log);
}

Tensor ProtectRandom(const Tensor& base, int iterations, float bound, std::uint64_t seed) {
  if (!(bound >= 0.0f) || iterations < 0) {
    throw ParameterError("random perturbation needs bound >= 0 and iterations >= 0");
  }
  Tensor z = base;
  if (bound == 0.0f) return z;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> noise(-bound, bound);
  for (int t = 0; t < iterations; ++t) {
    for (float& v : z.values()) v += noise(rng);
  }
  return z;
}

Tensor ProtectDp(const Tensor& base, float budget, float noise_bound, std::uint64_t seed) {
  if (!(budget > 0.0f)) throw ParameterError("privacy budget must be positive");
  if (!(noise_bound >= 0.0f)) throw ParameterError("noise bound must be nonnegative");
  const double scale = static_cast<double>(noise_bound) / budget;
  Tensor z = base;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-0.5, 0.5);
  for (float& v : z.values()) {
    // Inverse CDF of the Laplace distribution.
    const double u = unit(rng);
    const double x = -scale * (u < 0 ? -1.0 : 1.0) * std::log1p(-2.0 * std::abs(u));
    v = static_cast<float>(v + x);
  }
  return z;
}

}  // namespace advface::protect
