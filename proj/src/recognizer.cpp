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

#include "advface/recognizer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <spdlog/spdlog.h>

#include "advface/error.hpp"
#include "advface/nn/checkpoint.hpp"
#include "advface/util.hpp"

namespace advface::recog {
namespace {

using nn::Mode;

nn::Sequential BuildExtractor(const RecognizerConfig& c) {
  nn::Sequential net;
  int in = 3;
  for (std::size_t i = 0; i < c.extractor_channels.size(); ++i) {
    const int out = c.extractor_channels[i];
    const int stride = i == 0 ? 2 : 1;
    const int pad = i < 2 ? 0 : 1;
    net.Emplace<nn::Conv2d>(in, out, 3, stride, pad);
    net.Emplace<nn::BatchNorm2d>(out);
    net.Emplace<nn::ReLU>();
    in = out;
  }
  return net;
}

nn::Sequential BuildTail(const RecognizerConfig& c) {
  nn::Sequential net;
  int in = c.extractor_channels.back();
  for (std::size_t i = 0; i < c.tail_channels.size(); ++i) {
    const int out = c.tail_channels[i];
    net.Emplace<nn::Conv2d>(in, out, 3, i % 2 == 0 ? 2 : 1, 1);
    net.Emplace<nn::BatchNorm2d>(out);
    net.Emplace<nn::ReLU>();
    in = out;
  }
  net.Emplace<nn::GlobalAvgPool>();
  net.Emplace<nn::Linear>(in, c.embedding_dim);
  return net;
}

nn::Sequential BuildHead(int dim, int classes, std::uint64_t seed) {
  nn::Sequential head;
  head.Emplace<nn::Linear>(dim, classes);
  head.Init(seed);
  return head;
}

void NormalizeRows(Tensor& e) {
  for (int i = 0; i < e.n(); ++i) {
    auto row = e.sample(i);
    double s = 0.0;
    for (float v : row) s += static_cast<double>(v) * v;
    const float inv = static_cast<float>(1.0 / std::max(std::sqrt(s), 1e-12));
    for (float& v : row) v *= inv;
  }
}

// Cross-entropy on the head logits plus batch-hard triplet loss on the unit
// embeddings. Returns the loss and writes d(loss)/d(raw embedding) and
// d(loss)/d(logits).
double JointLoss(const Tensor& emb, const Tensor& logits, const std::vector<int>& labels,
                 float margin, Tensor& d_emb, Tensor& d_logits) {
  const int n = emb.n();
  const int dim = static_cast<int>(emb.sample_size());
  const int classes = static_cast<int>(logits.sample_size());

  double ce = 0.0;
  d_logits = Tensor(n, logits.shape());
  for (int i = 0; i < n; ++i) {
    auto z = logits.sample(i);
    auto g = d_logits.sample(i);
    const float zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (int k = 0; k < classes; ++k) sum += std::exp(static_cast<double>(z[k] - zmax));
    for (int k = 0; k < classes; ++k) {
      const double p = std::exp(static_cast<double>(z[k] - zmax)) / sum;
      g[k] = static_cast<float>((p - (k == labels[i] ? 1.0 : 0.0)) / n);
    }
    ce += -(static_cast<double>(z[labels[i]] - zmax) - std::log(sum));
  }
  ce /= n;

  std::vector<double> norm(n);
  Tensor u = emb;
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (float v : emb.sample(i)) s += static_cast<double>(v) * v;
    norm[i] = std::max(std::sqrt(s), 1e-12);
  }
  NormalizeRows(u);
  std::vector<double> dist(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      dist[i * n + j] = SquaredDistance(u.sample(i), u.sample(j));
    }
  }
  std::vector<double> du(static_cast<std::size_t>(n) * dim, 0.0);
  double triplet = 0.0;
  int anchors = 0;
  std::vector<std::pair<int, int>> active(n, {-1, -1});
  for (int i = 0; i < n; ++i) {
    int pos = -1, neg = -1;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      if (labels[j] == labels[i]) {
        if (pos < 0 || dist[i * n + j] > dist[i * n + pos]) pos = j;
      } else if (neg < 0 || dist[i * n + j] < dist[i * n + neg]) {
        neg = j;
      }
    }
    if (pos < 0 || neg < 0) continue;
    ++anchors;
    const double l = dist[i * n + pos] - dist[i * n + neg] + margin;
    if (l > 0.0) {
      triplet += l;
      active[i] = {pos, neg};
    }
  }
  if (anchors > 0) {
    triplet /= anchors;
    const double scale = 2.0 / anchors;
    for (int i = 0; i < n; ++i) {
      const auto [p, q] = active[i];
      if (p < 0) continue;
      auto ui = u.sample(i), up = u.sample(p), uq = u.sample(q);
      for (int k = 0; k < dim; ++k) {
        const double ap = scale * (ui[k] - up[k]);
        const double aq = scale * (ui[k] - uq[k]);
        du[i * dim + k] += ap - aq;
        du[p * dim + k] -= ap;
        du[q * dim + k] += aq;
      }
    }
  }
  d_emb = Tensor(n, emb.shape());
  for (int i = 0; i < n; ++i) {
    auto ui = u.sample(i);
    double dot = 0.0;
    for (int k = 0; k < dim; ++k) dot += ui[k] * du[i * dim + k];
    auto g = d_emb.sample(i);
    for (int k = 0; k < dim; ++k) {
      g[k] = static_cast<float>((du[i * dim + k] - ui[k] * dot) / norm[i]);
    }
  }
  return ce + triplet;
}

// Identity-balanced batches: P identities x K samples each.
class BatchSampler {
 public:
  BatchSampler(const std::vector<int>& labels, int identities, int per_identity)
      : per_identity_(per_identity) {
    std::map<int, std::vector<int>> by_label;
    for (int i = 0; i < static_cast<int>(labels.size()); ++i) by_label[labels[i]].push_back(i);
    for (auto& [label, members] : by_label) {
      if (members.size() >= 2) groups_.push_back(std::move(members));
    }
    identities_ = std::min<int>(identities, static_cast<int>(groups_.size()));
  }

  int eligible() const { return static_cast<int>(groups_.size()); }

  std::vector<std::vector<int>> Epoch(std::uint64_t seed, std::size_t total) {
    std::mt19937_64 rng(seed);
    const std::size_t per_batch = static_cast<std::size_t>(identities_) * per_identity_;
    const std::size_t steps = std::max<std::size_t>(1, total / per_batch);
    std::vector<int> order(groups_.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();
    std::vector<std::vector<int>> batches;
    for (std::size_t s = 0; s < steps; ++s) {
      std::vector<int> batch;
      for (int p = 0; p < identities_; ++p) {
        if (cursor == order.size()) {
          std::shuffle(order.begin(), order.end(), rng);
          cursor = 0;
        }
        auto members = groups_[order[cursor++]];
        std::shuffle(members.begin(), members.end(), rng);
        for (int k = 0; k < per_identity_; ++k) {
          batch.push_back(members[static_cast<std::size_t>(k) % members.size()]);
        }
      }
      batches.push_back(std::move(batch));
    }
    return batches;
  }

 private:
  int identities_ = 0;
  int per_identity_;
  std::vector<std::vector<int>> groups_;
};

// Shared loop for full training (inputs are images) and tail-only retraining
// (inputs are features).
void Fit(SplitRecognizer& r, const Tensor& inputs, const std::vector<int>& labels,
         bool train_extractor, float lr, float decay, float margin, int identities,
         int per_identity, int epochs, std::uint64_t seed, TrainLog* log) {
  BatchSampler sampler(labels, identities, per_identity);
  if (sampler.eligible() < 2) {
    throw PreconditionError(
        "training needs at least 2 identities with 2 or more samples each");
  }
  std::vector<nn::Param*> params;
  if (train_extractor) {
    for (auto* p : r.extractor().Params()) params.push_back(p);
  }
  for (auto* p : r.tail().Params()) params.push_back(p);
  for (auto* p : r.head().Params()) params.push_back(p);
  r.extractor().SetParamGrads(train_extractor);
  nn::Adam adam(lr);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    adam.set_lr(lr * static_cast<float>(std::pow(decay, epoch)));
    const auto batches =
        sampler.Epoch(DeriveSeed(seed, "epoch-" + std::to_string(epoch)), labels.size());
    double total = 0.0;
    for (const auto& batch : batches) {
      Tensor x = inputs.Gather(batch);
      std::vector<int> y;
      for (int i : batch) y.push_back(labels[i]);
      for (auto* p : params) std::fill(p->grad.begin(), p->grad.end(), 0.0f);
      Tensor feats = train_extractor ? r.extractor().Forward(x, Mode::kTrain) : std::move(x);
      Tensor emb = r.tail().Forward(feats, Mode::kTrain);
      Tensor logits = r.head().Forward(emb, Mode::kTrain);
      Tensor d_emb, d_logits;
      const double loss = JointLoss(emb, logits, y, margin, d_emb, d_logits);
      if (!std::isfinite(loss)) {
        throw TrainingError("recognizer loss became non-finite at epoch " +
                                std::to_string(epoch),
                            epoch);
      }
      Tensor back = r.head().Backward(d_logits);
      for (std::size_t k = 0; k < back.size(); ++k) back.data()[k] += d_emb.data()[k];
      Tensor d_feat = r.tail().Backward(back);
      if (train_extractor) r.extractor().Backward(d_feat);
      adam.Step(params);
      total += loss;
    }
    const double mean = total / static_cast<double>(batches.size());
    if (log) log->epoch_loss.push_back(mean);
    spdlog::debug("recognizer epoch {} loss {:.6f}", epoch, mean);
  }
  r.extractor().SetParamGrads(true);
}

std::vector<int> LabelIndices(const std::vector<std::string>& classes,
                              const std::vector<std::string>& identities) {
  std::vector<int> labels;
  labels.reserve(identities.size());
  for (const auto& id : identities) {
    auto it = std::lower_bound(classes.begin(), classes.end(), id);
    labels.push_back(static_cast<int>(it - classes.begin()));
  }
  return labels;
}

}  // namespace

void RecognizerConfig::Validate() const {
  if (image_size < 16) throw ConfigError("recognizer image_size must be at least 16");
  if (extractor_channels.empty()) throw ConfigError("extractor needs at least one layer");
  if (tail_channels.empty()) throw ConfigError("tail needs at least one layer");
  for (int c : extractor_channels) {
    if (c <= 0) throw ConfigError("extractor channel counts must be positive");
  }
  for (int c : tail_channels) {
    if (c <= 0) throw ConfigError("tail channel counts must be positive");
  }
  if (embedding_dim <= 0) throw ConfigError("embedding_dim must be positive");
  if (epochs < 0 || retrain_epochs < 0) throw ConfigError("epoch counts must be >= 0");
  if (!(lr > 0.0f) || !(retrain_lr > 0.0f)) throw ConfigError("learning rates must be > 0");
  if (!(lr_decay > 0.0f && lr_decay <= 1.0f)) throw ConfigError("lr_decay must be in (0, 1]");
  if (margin < 0.0f) throw ConfigError("triplet margin must be >= 0");
  if (identities_per_batch < 2 || images_per_identity < 2) {
    throw ConfigError("batches need >= 2 identities with >= 2 images each");
  }
}

nlohmann::json RecognizerConfig::ToJson() const {
  return {{"image_size", image_size},
          {"extractor_channels", extractor_channels},
          {"tail_channels", tail_channels},
          {"embedding_dim", embedding_dim},
          {"epochs", epochs},
          {"lr", lr},
          {"lr_decay", lr_decay},
          {"margin", margin},
          {"identities_per_batch", identities_per_batch},
          {"images_per_identity", images_per_identity},
          {"retrain_epochs", retrain_epochs},
          {"retrain_lr", retrain_lr},
          {"seed", seed}};
}

RecognizerConfig RecognizerConfig::FromJson(const nlohmann::json& j) {
  RecognizerConfig c;
  c.image_size = j.value("image_size", c.image_size);
  c.extractor_channels = j.value("extractor_channels", c.extractor_channels);
  c.tail_channels = j.value("tail_channels", c.tail_channels);
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.margin = j.value("margin", c.margin);
  c.identities_per_batch = j.value("identities_per_batch", c.identities_per_batch);
  c.images_per_identity = j.value("images_per_identity", c.images_per_identity);
  c.retrain_epochs = j.value("retrain_epochs", c.retrain_epochs);
  c.retrain_lr = j.value("retrain_lr", c.retrain_lr);
  c.seed = j.value("seed", c.seed);
  return c;
}

SplitRecognizer SplitRecognizer::Build(const RecognizerConfig& config,
                                       std::vector<std::string> classes) {
  config.Validate();
  if (classes.empty()) throw PreconditionError("recognizer needs at least one class");
  SplitRecognizer r;
  r.config_ = config;
  r.classes_ = std::move(classes);
  r.extractor_ = BuildExtractor(config);
  r.tail_ = BuildTail(config);
  r.feature_shape_ = r.extractor_.OutputShape(r.image_shape());
  r.tail_.OutputShape(r.feature_shape_);
  r.extractor_.Init(DeriveSeed(config.seed, "extractor-init"));
  r.tail_.Init(DeriveSeed(config.seed, "tail-init"));
  r.head_ = BuildHead(config.embedding_dim, static_cast<int>(r.classes_.size()),
                      DeriveSeed(config.seed, "head-init"));
  return r;
}

Tensor SplitRecognizer::Extract(const Tensor& images) const {
  if (images.shape() != image_shape()) {
    throw ContractError("extract: expected images of shape " + image_shape().ToString() +
                        ", got " + images.shape().ToString());
  }
  nn::Sequential net = extractor_;
  return net.Forward(images, Mode::kEval);
}

Tensor SplitRecognizer::Embed(const Tensor& features) const {
  if (features.shape() != feature_shape_) {
    throw ContractError("embed: expected features of shape " + feature_shape_.ToString() +
                        ", got " + features.shape().ToString());
  }
  if (!features.AllFinite()) throw ContractError("embed: feature contains non-finite values");
  nn::Sequential net = tail_;
  Tensor e = net.Forward(features, Mode::kEval);
  NormalizeRows(e);
  return e;
}

Tensor SplitRecognizer::UnsplitEmbed(const Tensor& images) const {
  if (images.shape() != image_shape()) {
    throw ContractError("unsplit forward: wrong image shape " + images.shape().ToString());
  }
  nn::Sequential full;
  for (std::size_t i = 0; i < extractor_.size(); ++i) full.Add(extractor_.layer(i).Clone());
  for (std::size_t i = 0; i < tail_.size(); ++i) full.Add(tail_.layer(i).Clone());
  Tensor e = full.Forward(images, Mode::kEval);
  NormalizeRows(e);
  return e;
}

std::string SplitRecognizer::extractor_hash() const {
  return HexDigest(Fnv1a64(extractor_.Spec().dump(), extractor_.StateHash()));
}

std::uint64_t SplitRecognizer::tail_state_hash() const {
  return Fnv1a64(tail_.Spec().dump(), tail_.StateHash());
}

void SplitRecognizer::Save(const std::filesystem::path& path,
                           const nlohmann::json& extra) const {
  nn::Checkpoint ck;
  ck.metadata = extra;
  ck.metadata["kind"] = "recognizer";
  ck.metadata["config"] = config_.ToJson();
  ck.metadata["classes"] = classes_;
  ck.metadata["feature_shape"] = {feature_shape_.c, feature_shape_.h, feature_shape_.w};
  ck.metadata["split_index"] = split_index();
  ck.metadata["embedding_dim"] = embedding_dim();
  ck.metadata["extractor_hash"] = extractor_hash();
  ck.networks.emplace("extractor", extractor_);
  ck.networks.emplace("tail", tail_);
  ck.networks.emplace("head", head_);
  nn::SaveCheckpoint(ck, path);
}

SplitRecognizer SplitRecognizer::Load(const std::filesystem::path& path,
                                      nlohmann::json* metadata) {
  nn::Checkpoint ck = nn::LoadCheckpoint(path);
  if (ck.metadata.value("kind", "") != "recognizer") {
    throw ContractError("not a recognizer checkpoint: " + path.string());
  }
  SplitRecognizer r;
  r.config_ = RecognizerConfig::FromJson(ck.metadata.at("config"));
  r.classes_ = ck.metadata.at("classes").get<std::vector<std::string>>();
  r.extractor_ = std::move(ck.networks.at("extractor"));
  r.tail_ = std::move(ck.networks.at("tail"));
  r.head_ = std::move(ck.networks.at("head"));
  r.feature_shape_ = r.extractor_.OutputShape(r.image_shape());
  if (ck.metadata.value("extractor_hash", "") != r.extractor_hash()) {
    throw CorruptionError("recognizer checkpoint hash mismatch: " + path.string());
  }
  if (metadata) *metadata = ck.metadata;
  return r;
}

SplitRecognizer TrainRecognizer(std::span<const data::FaceImage> images,
                                const RecognizerConfig& config, TrainLog* log) {
  config.Validate();
  std::vector<std::string> ids;
  for (const auto& im : images) {
    if (im.size != config.image_size) {
      throw ContractError("training image size " + std::to_string(im.size) +
                          " does not match image_size " + std::to_string(config.image_size));
    }
    ids.push_back(im.identity);
  }
  std::set<std::string> unique(ids.begin(), ids.end());
  std::vector<std::string> classes(unique.begin(), unique.end());
  if (classes.size() < 2) {
    throw PreconditionError("recognizer training needs at least 2 identities");
  }
  SplitRecognizer r = SplitRecognizer::Build(config, classes);
  const Tensor batch = data::ToBatch(images);
  Fit(r, batch, LabelIndices(classes, ids), true, config.lr, config.lr_decay, config.margin,
      config.identities_per_batch, config.images_per_identity, config.epochs,
      DeriveSeed(config.seed, "recognizer-batches"), log);
  return r;
}

SplitRecognizer OfflineRetrainTail(const SplitRecognizer& recognizer,
                                   std::span<const data::VaultRecord> records,
                                   const RecognizerConfig& config, int epochs,
                                   TrainLog* log) {
  if (records.empty()) throw ParameterError("offline retraining needs a non-empty vault");
  if (epochs < 0) throw ParameterError("retrain epochs must be >= 0");
  const std::string provenance = recognizer.extractor_hash();
  std::vector<std::string> ids;
  std::vector<std::vector<float>> rows;
  for (const auto& rec : records) {
    if (rec.extractor_hash != provenance) {
      throw ContractError("vault record '" + rec.record_id + "' comes from extractor " +
                          rec.extractor_hash + ", recognizer has " + provenance);
    }
    if (rec.shape != recognizer.feature_shape()) {
      throw ContractError("vault record '" + rec.record_id + "' has the wrong shape");
    }
    ids.push_back(rec.identity);
    rows.push_back(rec.feature);
  }
  SplitRecognizer r = recognizer;
  if (epochs == 0) return r;

  std::set<std::string> unique(ids.begin(), ids.end());
  std::vector<std::string> classes(unique.begin(), unique.end());
  const bool known = std::all_of(classes.begin(), classes.end(), [&](const std::string& c) {
    return std::binary_search(recognizer.classes().begin(), recognizer.classes().end(), c);
  });
  if (known) {
    classes = recognizer.classes();
  } else {
    r.set_head(BuildHead(recognizer.embedding_dim(), static_cast<int>(classes.size()),
                         DeriveSeed(config.seed, "retrain-head")),
               classes);
  }
  const Tensor features = Tensor::Stack(rows, recognizer.feature_shape());
  Fit(r, features, LabelIndices(classes, ids), false, config.retrain_lr, config.lr_decay,
      config.margin, config.identities_per_batch, config.images_per_identity, epochs,
      DeriveSeed(config.seed, "retrain-batches"), log);
  return r;
}

double SquaredDistance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ContractError("distance between vectors of unequal size");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s;
}

std::vector<double> PairDistances(const SplitRecognizer& recognizer, const Tensor& features_a,
                                  const Tensor& features_b) {
  if (features_a.n() != features_b.n()) {
    throw ContractError("pair batches differ in length");
  }
  const Tensor ea = recognizer.Embed(features_a);
  const Tensor eb = recognizer.Embed(features_b);
  std::vector<double> d(ea.n());
  for (int i = 0; i < ea.n(); ++i) d[i] = SquaredDistance(ea.sample(i), eb.sample(i));
  return d;
}

double PairAccuracy(std::span<const ScoredPair> pairs, double threshold) {
  if (pairs.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& p : pairs) correct += ((p.distance <= threshold) == p.same) ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

namespace {

// Best threshold over the cut points of the sorted distances; ties go to the
// smallest threshold, so the result does not depend on pair order.
double FitThreshold(std::vector<ScoredPair> pairs) {
  std::sort(pairs.begin(), pairs.end(), [](const ScoredPair& a, const ScoredPair& b) {
    return a.distance < b.distance;
  });
  long correct = 0;
  for (const auto& p : pairs) correct += p.same ? 0 : 1;  // reject everything
  long best = -1;
  double best_t = 0.0;
  if (pairs.front().distance > 0.0) {
    best = correct;
    best_t = pairs.front().distance / 2.0;
  }
  std::size_t i = 0;
  while (i < pairs.size()) {
    const double d = pairs[i].distance;
    for (; i < pairs.size() && pairs[i].distance == d; ++i) correct += pairs[i].same ? 1 : -1;
    const double t = i < pairs.size() ? (d + pairs[i].distance) / 2.0 : d;
    if (correct > best) {
      best = correct;
      best_t = t;
    }
  }
  return best_t;
}

}  // namespace

VerificationThreshold CalibrateThreshold(std::span<const ScoredPair> pairs, int folds) {
  const bool has_pos = std::any_of(pairs.begin(), pairs.end(), [](auto& p) { return p.same; });
  const bool has_neg = std::any_of(pairs.begin(), pairs.end(), [](auto& p) { return !p.same; });
  if (!has_pos || !has_neg) {
    throw CalibrationError("threshold calibration needs both genuine and impostor pairs");
  }
  if (folds < 1 || static_cast<std::size_t>(folds) > pairs.size()) {
    throw CalibrationError("fold count " + std::to_string(folds) + " is out of range for " +
                           std::to_string(pairs.size()) + " pairs");
  }
  for (const auto& p : pairs) {
    if (!std::isfinite(p.distance) || p.distance < 0.0) {
      throw CalibrationError("pair distances must be finite and nonnegative");
    }
  }
  VerificationThreshold out;
  out.folds = folds;
  out.value = FitThreshold({pairs.begin(), pairs.end()});
  if (folds == 1) {
    out.accuracy = PairAccuracy(pairs, out.value);
    out.fold_accuracy = {out.accuracy};
    return out;
  }
  // Folds are stratified: the k-th pair of each class goes to fold k % folds.
  std::vector<int> fold_of(pairs.size());
  std::size_t seen[2] = {0, 0};
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    fold_of[i] = static_cast<int>(seen[pairs[i].same]++ % static_cast<std::size_t>(folds));
  }
  double sum = 0.0;
  for (int f = 0; f < folds; ++f) {
    std::vector<ScoredPair> train, test;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      (fold_of[i] == f ? test : train).push_back(pairs[i]);
    }
    const double acc = PairAccuracy(test, FitThreshold(train));
    out.fold_accuracy.push_back(acc);
    sum += acc;
  }
  out.accuracy = sum / folds;
  return out;
}

VerificationThreshold CalibrateThreshold(const SplitRecognizer& recognizer,
                                         const Tensor& features_a, const Tensor& features_b,
                                         const std::vector<bool>& same, int folds) {
  const auto d = PairDistances(recognizer, features_a, features_b);
  if (d.size() != same.size()) throw ContractError("pair labels and features differ in length");
  std::vector<ScoredPair> pairs(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) pairs[i] = {d[i], same[i]};
  return CalibrateThreshold(pairs, folds);
}

bool VerifyPair(const SplitRecognizer& recognizer, std::span<const float> feature_a,
                std::span<const float> feature_b, const VerificationThreshold& threshold) {
  const Shape s = recognizer.feature_shape();
  if (feature_a.size() != s.size() || feature_b.size() != s.size()) {
    throw ContractError("verify: feature size does not match " + s.ToString());
  }
  Tensor batch(2, s);
  batch.SetSample(0, feature_a);
  batch.SetSample(1, feature_b);
  const Tensor e = recognizer.Embed(batch);
  return SquaredDistance(e.sample(0), e.sample(1)) <= threshold.value;
}

}  // namespace advface::recog
