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

// Face recognizer split into a client-side extractor and a server-side tail,
// plus pair verification and threshold calibration.

#ifndef ADVFACE_RECOGNIZER_HPP_
#define ADVFACE_RECOGNIZER_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "advface/data_io.hpp"
#include "advface/nn/sequential.hpp"
#include "advface/tensor.hpp"
#include "advface/vault.hpp"

namespace advface::recog {

struct RecognizerConfig {
  int image_size = 64;
  // One conv-bn-relu block per entry. The first block has stride 2 and no
  // padding, the second no padding, the rest "same" padding.
  std::vector<int> extractor_channels = {32, 32, 64};
  // Alternating stride-2 / stride-1 blocks, then global pooling.
  std::vector<int> tail_channels = {32, 32, 64, 64};
  int embedding_dim = 64;

  int epochs = 20;
  float lr = 1e-3f;
  float lr_decay = 0.94f;
  float margin = 0.2f;
  int identities_per_batch = 8;
  int images_per_identity = 4;

  int retrain_epochs = 10;
  float retrain_lr = 5e-4f;

  std::uint64_t seed = 1;

  void Validate() const;
  nlohmann::json ToJson() const;
  static RecognizerConfig FromJson(const nlohmann::json& j);
};

struct TrainLog {
  std::vector<double> epoch_loss;
};

class SplitRecognizer {
 public:
  SplitRecognizer() = default;
  // Untrained network with He-initialized weights.
  static SplitRecognizer Build(const RecognizerConfig& config,
                               std::vector<std::string> classes);

  // All inference entry points run on private copies and are safe to call
  // concurrently on a shared instance.
  Tensor Extract(const Tensor& images) const;
  // Unit-norm embeddings, shape (n, embedding_dim, 1, 1).
  Tensor Embed(const Tensor& features) const;
  // The same computation through one unsplit network.
  Tensor UnsplitEmbed(const Tensor& images) const;

  Shape image_shape() const { return {3, config_.image_size, config_.image_size}; }
  Shape feature_shape() const { return feature_shape_; }
  int split_index() const { return static_cast<int>(config_.extractor_channels.size()); }
  int embedding_dim() const { return config_.embedding_dim; }
  const RecognizerConfig& config() const { return config_; }
  const std::vector<std::string>& classes() const { return classes_; }

  // Digest of extractor architecture and weights; the provenance key shared
  // by every feature and every model trained on its features.
  std::string extractor_hash() const;
  std::uint64_t tail_state_hash() const;

  nn::Sequential& extractor() { return extractor_; }
  const nn::Sequential& extractor() const { return extractor_; }
  nn::Sequential& tail() { return tail_; }
  const nn::Sequential& tail() const { return tail_; }
  nn::Sequential& head() { return head_; }
  void set_head(nn::Sequential head, std::vector<std::string> classes) {
    head_ = std::move(head);
    classes_ = std::move(classes);
  }

  void Save(const std::filesystem::path& path,
            const nlohmann::json& extra = nlohmann::json::object()) const;
  static SplitRecognizer Load(const std::filesystem::path& path,
                              nlohmann::json* metadata = nullptr);

 private:
  RecognizerConfig config_;
  std::vector<std::string> classes_;
  Shape feature_shape_;
  nn::Sequential extractor_, tail_, head_;
};

// Pre: at least 2 identities with 2 or more images each.
// Throws TrainingError (with epoch) if the loss turns non-finite.
SplitRecognizer TrainRecognizer(std::span<const data::FaceImage> images,
                                const RecognizerConfig& config,
                                TrainLog* log = nullptr);

// Retrains tail and head on stored features with a frozen extractor. The
// records must all carry the recognizer's extractor hash.
SplitRecognizer OfflineRetrainTail(const SplitRecognizer& recognizer,
                                   std::span<const data::VaultRecord> records,
                                   const RecognizerConfig& config, int epochs,
                                   TrainLog* log = nullptr);

double SquaredDistance(std::span<const float> a, std::span<const float> b);
// Row-wise squared distances between the embeddings of two feature batches.
std::vector<double> PairDistances(const SplitRecognizer& recognizer,
                                  const Tensor& features_a,
                                  const Tensor& features_b);

struct ScoredPair {
  double distance = 0.0;
  bool same = false;
};

struct VerificationThreshold {
  double value = 0.0;  // accept iff squared distance <= value
  int folds = 1;
  double accuracy = 0.0;  // mean held-out fold accuracy
  std::vector<double> fold_accuracy;
};

// Threshold fitted on all pairs; accuracy cross-validated over k folds,
// stratified by label.
// Throws CalibrationError when a class is missing or folds is out of range.
VerificationThreshold CalibrateThreshold(std::span<const ScoredPair> pairs, int folds);
VerificationThreshold CalibrateThreshold(const SplitRecognizer& recognizer,
                                         const Tensor& features_a,
                                         const Tensor& features_b,
                                         const std::vector<bool>& same, int folds);

double PairAccuracy(std::span<const ScoredPair> pairs, double threshold);

bool VerifyPair(const SplitRecognizer& recognizer, std::span<const float> feature_a,
                std::span<const float> feature_b, const VerificationThreshold& threshold);

}  // namespace advface::recog

#endif  // ADVFACE_RECOGNIZER_HPP_
