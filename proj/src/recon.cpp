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

#include "advface/recon.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "advface/error.hpp"
#include "advface/nn/checkpoint.hpp"
#include "advface/recognizer.hpp"
#include "advface/util.hpp"

namespace advface::recon {
namespace {

using nn::Mode;

void ConvBnRelu(nn::Sequential& net, int in, int out, int pad) {
  net.Emplace<nn::Conv2d>(in, out, 3, 1, pad);
  net.Emplace<nn::BatchNorm2d>(out);
  net.Emplace<nn::ReLU>();
}

void TransBnRelu(nn::Sequential& net, int in, int out, int pad) {
  net.Emplace<nn::ConvTranspose2d>(in, out, 3, 1, pad, 0);
  net.Emplace<nn::BatchNorm2d>(out);
  net.Emplace<nn::ReLU>();
}

// Sizes after each of `stages` upsampling stages: every stage doubles until
// the target is reached, the last one lands on it exactly.
std::vector<int> UpsamplePlan(ReconKind kind, int from, int to, int stages) {
  if (to < from) {
    throw BuildError(std::string(ReconKindName(kind)) + ": feature map " +
                     std::to_string(from) + " is larger than the image " + std::to_string(to));
  }
  std::vector<int> sizes;
  int cur = from;
  for (int s = 0; s < stages; ++s) {
    cur = s + 1 == stages ? to : std::min(2 * cur, to);
    sizes.push_back(cur);
  }
  const int before_last = stages > 1 ? sizes[stages - 2] : from;
  if (sizes.back() > 2 * before_last) {
    throw BuildError(std::string(ReconKindName(kind)) + " cannot upsample " +
                     std::to_string(from) + " to " + std::to_string(to) + " in " +
                     std::to_string(stages) + " stage(s) of at most 2x");
  }
  return sizes;
}

}  // namespace

const char* ReconKindName(ReconKind kind) {
  switch (kind) {
    case ReconKind::kTransRec: return "transrec";
    case ReconKind::kResRec: return "resrec";
    case ReconKind::kURec: return "urec";
  }
  return "?";
}

ReconKind ParseReconKind(const std::string& name) {
  if (name == "transrec" || name == "transpose" || name == "trans") return ReconKind::kTransRec;
  if (name == "resrec" || name == "resnet" || name == "res") return ReconKind::kResRec;
  if (name == "urec" || name == "unet" || name == "u") return ReconKind::kURec;
  throw ConfigError("unknown reconstruction architecture '" + name + "'");
}

const char* RoleName(Role role) { return role == Role::kAttacker ? "attacker" : "shadow"; }

Role ParseRole(const std::string& name) {
  if (name == "attacker") return Role::kAttacker;
  if (name == "shadow") return Role::kShadow;
  throw ConfigError("unknown model role '" + name + "'");
}

data::Split RequiredSplit(Role role) {
  return role == Role::kAttacker ? data::Split::kAttackerTrain : data::Split::kShadowTrain;
}

nlohmann::json ReconWidths::ToJson() const {
  return {{"trans", trans}, {"res", res}, {"unet", unet}};
}

ReconWidths ReconWidths::FromJson(const nlohmann::json& j) {
  ReconWidths w;
  w.trans = j.value("trans", w.trans);
  w.res = j.value("res", w.res);
  w.unet = j.value("unet", w.unet);
  return w;
}

void ReconConfig::Validate() const {
  if (widths.trans.size() != 2 || widths.unet.size() != 3) {
    throw ConfigError("recon widths: trans needs 2 entries, unet needs 3");
  }
  for (int c : widths.trans) {
    if (c <= 0) throw ConfigError("recon widths must be positive");
  }
  for (int c : widths.unet) {
    if (c <= 0) throw ConfigError("recon widths must be positive");
  }
  if (widths.res <= 0) throw ConfigError("recon widths must be positive");
  if (epochs < 0) throw ConfigError("recon epochs must be >= 0");
  if (!(lr > 0.0f)) throw ConfigError("recon lr must be > 0");
  if (batch_size < 2) throw ConfigError("recon batch_size must be >= 2");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("recon holdout_fraction must be in (0, 1)");
  }
}

nlohmann::json ReconConfig::ToJson() const {
  return {{"widths", widths.ToJson()}, {"epochs", epochs}, {"lr", lr},
          {"batch_size", batch_size}, {"holdout_fraction", holdout_fraction},
          {"seed", seed}};
}

ReconConfig ReconConfig::FromJson(const nlohmann::json& j) {
  ReconConfig c;
  if (j.contains("widths")) c.widths = ReconWidths::FromJson(j.at("widths"));
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.holdout_fraction = j.value("holdout_fraction", c.holdout_fraction);
  c.seed = j.value("seed", c.seed);
  return c;
}

nn::Sequential BuildRecon(ReconKind kind, Shape f, int image_size, const ReconWidths& w) {
  if (f.h != f.w || f.c <= 0 || f.h <= 0) {
    throw BuildError("reconstruction needs square, non-empty feature maps, got " + f.ToString());
  }
  nn::Sequential net;
  switch (kind) {
    case ReconKind::kTransRec: {
      // Mirrors the extractor: same-size, +2, 2x up, +2, same-size.
      const auto up = UpsamplePlan(kind, f.h + 2, image_size - 2, 1);
      TransBnRelu(net, f.c, w.trans[0], 1);
      TransBnRelu(net, w.trans[0], w.trans[1], 0);
      net.Emplace<nn::Resize>(up[0], up[0]);
      TransBnRelu(net, w.trans[1], w.trans[1], 0);
      net.Emplace<nn::ConvTranspose2d>(w.trans[1], 3, 3, 1, 1, 0);
      break;
    }
    case ReconKind::kResRec: {
      const auto up = UpsamplePlan(kind, f.h, image_size, 2);
      TransBnRelu(net, f.c, w.res, 1);
      net.Emplace<nn::ResidualBlock>(w.res);
      net.Emplace<nn::ResidualBlock>(w.res);
      net.Emplace<nn::Resize>(up[0], up[0]);
      net.Emplace<nn::ResidualBlock>(w.res);
      net.Emplace<nn::ResidualBlock>(w.res);
      net.Emplace<nn::Resize>(up[1], up[1]);
      net.Emplace<nn::Conv2d>(w.res, 3, 1, 1, 0);
      break;
    }
    case ReconKind::kURec: {
      const auto up = UpsamplePlan(kind, f.h, image_size, 2);
      int in = f.c;
      for (int i = 0; i < 3; ++i, in = w.unet[0]) ConvBnRelu(net, in, w.unet[0], 1);
      net.Emplace<nn::Resize>(up[0], up[0]);
      for (int i = 0; i < 3; ++i, in = w.unet[1]) ConvBnRelu(net, in, w.unet[1], 1);
      net.Emplace<nn::Resize>(up[1], up[1]);
      for (int i = 0; i < 3; ++i, in = w.unet[2]) ConvBnRelu(net, in, w.unet[2], 1);
      ConvBnRelu(net, w.unet[2], 3, 1);
      net.Emplace<nn::Conv2d>(3, 3, 1, 1, 0);
      break;
    }
  }
  net.Emplace<nn::Sigmoid>();
  const Shape out = net.OutputShape(f);
  if (out != Shape{3, image_size, image_size}) {
    throw BuildError(std::string(ReconKindName(kind)) + " produces " + out.ToString() +
                     " instead of 3x" + std::to_string(image_size) + "x" +
                     std::to_string(image_size));
  }
  return net;
}

nlohmann::json ReconTrainLog::ToJson() const {
  return {{"epoch_loss", epoch_loss},       {"heldout_before", heldout_before},
          {"heldout_after", heldout_after}, {"dataset_fingerprint", dataset_fingerprint},
          {"arch", ReconKindName(kind)},    {"role", RoleName(role)}};
}

ReconModel::ReconModel(ReconKind kind, Role role, Shape feature_shape, int image_size,
                       std::string extractor_hash, const ReconWidths& widths,
                       std::uint64_t seed)
    : kind_(kind), role_(role), feature_shape_(feature_shape), image_size_(image_size),
      extractor_hash_(std::move(extractor_hash)),
      net_(BuildRecon(kind, feature_shape, image_size, widths)) {
  net_.Init(seed);
}

Tensor ReconModel::Reconstruct(const Tensor& features) const {
  if (features.shape() != feature_shape_) {
    throw ContractError(std::string(ReconKindName(kind_)) + ": expected features " +
                        feature_shape_.ToString() + ", got " + features.shape().ToString());
  }
  nn::Sequential net = net_;
  constexpr int kChunk = 32;
  Tensor out(features.n(), Shape{3, image_size_, image_size_});
  for (int b = 0; b < features.n(); b += kChunk) {
    const int count = std::min(kChunk, features.n() - b);
    const Tensor y = net.Forward(features.Slice(b, count), Mode::kEval);
    std::copy(y.values().begin(), y.values().end(),
              out.values().begin() + static_cast<std::ptrdiff_t>(b * out.sample_size()));
  }
  return out;
}

std::string ReconModel::fingerprint() const {
  return HexDigest(Fnv1a64(net_.Spec().dump(), net_.StateHash()));
}

void ReconModel::Save(const std::filesystem::path& path, const nlohmann::json& extra) const {
  nn::Checkpoint ck;
  ck.metadata = extra;
  ck.metadata["kind"] = "recon";
  ck.metadata["arch"] = ReconKindName(kind_);
  ck.metadata["role"] = RoleName(role_);
  ck.metadata["feature_shape"] = {feature_shape_.c, feature_shape_.h, feature_shape_.w};
  ck.metadata["image_size"] = image_size_;
  ck.metadata["extractor_hash"] = extractor_hash_;
  ck.metadata["dataset_fingerprint"] = dataset_fingerprint_;
  ck.metadata["fingerprint"] = fingerprint();
  ck.networks.emplace("decoder", net_);
  nn::SaveCheckpoint(ck, path);
}

ReconModel ReconModel::Load(const std::filesystem::path& path, nlohmann::json* metadata) {
  nn::Checkpoint ck = nn::LoadCheckpoint(path);
  if (ck.metadata.value("kind", "") != "recon") {
    throw ContractError("not a reconstruction-network checkpoint: " + path.string());
  }
  ReconModel m;
  m.kind_ = ParseReconKind(ck.metadata.at("arch"));
  m.role_ = ParseRole(ck.metadata.at("role"));
  const auto fs = ck.metadata.at("feature_shape");
  m.feature_shape_ = {fs.at(0), fs.at(1), fs.at(2)};
  m.image_size_ = ck.metadata.at("image_size");
  m.extractor_hash_ = ck.metadata.at("extractor_hash");
  m.dataset_fingerprint_ = ck.metadata.value("dataset_fingerprint", "");
  m.net_ = std::move(ck.networks.at("decoder"));
  if (ck.metadata.value("fingerprint", "") != m.fingerprint()) {
    throw CorruptionError("reconstruction checkpoint fingerprint mismatch: " + path.string());
  }
  if (metadata) *metadata = ck.metadata;
  return m;
}

double MeanL1Loss(const Tensor& pred, const Tensor& target, Tensor* grad) {
  if (pred.n() != target.n() || pred.shape() != target.shape()) {
    throw ContractError("L1 loss: shape mismatch");
  }
  const std::size_t n = pred.size();
  if (grad) *grad = Tensor(pred.n(), pred.shape());
  double sum = 0.0;
  const float inv = 1.0f / static_cast<float>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float d = pred.data()[i] - target.data()[i];
    sum += std::abs(static_cast<double>(d));
    if (grad) grad->data()[i] = d > 0.0f ? inv : (d < 0.0f ? -inv : 0.0f);
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

namespace {

double EvalLoss(nn::Sequential net, const Tensor& features, const Tensor& images,
                const std::vector<int>& rows) {
  double sum = 0.0;
  std::size_t count = 0;
  constexpr int kChunk = 32;
  for (std::size_t b = 0; b < rows.size(); b += kChunk) {
    std::vector<int> idx(rows.begin() + static_cast<std::ptrdiff_t>(b),
                         rows.begin() + static_cast<std::ptrdiff_t>(std::min(rows.size(), b + kChunk)));
    const Tensor y = net.Forward(features.Gather(idx), Mode::kEval);
    sum += MeanL1Loss(y, images.Gather(idx)) * static_cast<double>(y.size());
    count += y.size();
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace

ReconModel TrainRecon(ReconModel model, const data::DatasetManifest& manifest,
                      const Tensor& features, const Tensor& images, const ReconConfig& config,
                      ReconTrainLog* log) {
  config.Validate();
  if (manifest.split != RequiredSplit(model.role())) {
    throw ContractError(std::string(RoleName(model.role())) + " models train on " +
                        data::SplitName(RequiredSplit(model.role())) + ", not " +
                        data::SplitName(manifest.split));
  }
  if (features.n() != images.n() || features.n() == 0) {
    throw ContractError("recon training needs equally many features and images");
  }
  if (features.shape() != model.feature_shape() ||
      images.shape() != Shape{3, model.image_size(), model.image_size()}) {
    throw ContractError("recon training data does not match the model's shapes");
  }
  if (log) {
    *log = ReconTrainLog{};
    log->kind = model.kind();
    log->role = model.role();
    log->dataset_fingerprint = manifest.Fingerprint();
  }
  if (config.epochs == 0) return model;

  const int n = features.n();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(DeriveSeed(config.seed, "recon-holdout"));
  std::shuffle(order.begin(), order.end(), rng);
  const int held = n > 1 ? std::clamp(static_cast<int>(std::lround(n * config.holdout_fraction)), 1, n - 1) : 0;
  std::vector<int> heldout(order.begin(), order.begin() + held);
  std::vector<int> train(order.begin() + held, order.end());

  nn::Sequential& net = model.net();
  if (log) log->heldout_before = EvalLoss(net, features, images, heldout);
  nn::Adam adam(config.lr);
  const auto params = net.Params();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::mt19937_64 erng(DeriveSeed(config.seed, "recon-epoch-" + std::to_string(epoch)));
    std::shuffle(train.begin(), train.end(), erng);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < train.size(); b += config.batch_size) {
      const std::size_t e = std::min(train.size(), b + config.batch_size);
      if (e - b < 2 && b > 0) break;  // avoid a single-sample batch-norm step
      std::vector<int> idx(train.begin() + static_cast<std::ptrdiff_t>(b),
                           train.begin() + static_cast<std::ptrdiff_t>(e));
      net.ZeroGrad();
      const Tensor y = net.Forward(features.Gather(idx), Mode::kTrain);
      Tensor grad;
      const double loss = MeanL1Loss(y, images.Gather(idx), &grad);
      if (!std::isfinite(loss)) {
        throw TrainingError(std::string(ReconKindName(model.kind())) +
                                " loss became non-finite at epoch " + std::to_string(epoch),
                            epoch);
      }
      net.Backward(grad);
      adam.Step(params);
      total += loss * static_cast<double>(idx.size());
      count += idx.size();
    }
    const double mean = total / static_cast<double>(count);
    if (log) log->epoch_loss.push_back(mean);
    spdlog::debug("{} {} epoch {} L1 {:.5f}", RoleName(model.role()),
                  ReconKindName(model.kind()), epoch, mean);
  }
  if (log) log->heldout_after = EvalLoss(net, features, images, heldout);
  model.set_dataset_fingerprint(manifest.Fingerprint());
  return model;
}

ReconModel TrainRecon(ReconModel model, const data::DatasetManifest& manifest,
                      const recog::SplitRecognizer& recognizer, const ReconConfig& config,
                      ReconTrainLog* log) {
  if (recognizer.extractor_hash() != model.extractor_hash()) {
    throw ContractError("recon model was built for a different extractor");
  }
  const auto faces = data::LoadFaces(manifest, model.image_size());
  const Tensor images = data::ToBatch(faces);
  const Tensor features = recognizer.Extract(images);
  return TrainRecon(std::move(model), manifest, features, images, config, log);
}

}  // namespace advface::recon
