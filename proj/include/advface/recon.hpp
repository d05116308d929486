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

// Feature-to-image decoders. The same three architectures serve as the
// attacker's reconstruction network and as the defender's shadow model.

#ifndef ADVFACE_RECON_HPP_
#define ADVFACE_RECON_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "advface/data_io.hpp"
#include "advface/nn/sequential.hpp"
#include "advface/tensor.hpp"

namespace advface::recog {
class SplitRecognizer;
}

namespace advface::recon {

enum class ReconKind { kTransRec, kResRec, kURec };
inline constexpr ReconKind kAllKinds[] = {ReconKind::kTransRec, ReconKind::kResRec,
                                          ReconKind::kURec};
const char* ReconKindName(ReconKind kind);
// Accepts "transrec"/"transpose", "resrec"/"resnet", "urec"/"unet".
ReconKind ParseReconKind(const std::string& name);

enum class Role { kAttacker, kShadow };
const char* RoleName(Role role);
Role ParseRole(const std::string& name);
// The only split each role may train on.
data::Split RequiredSplit(Role role);

struct ReconWidths {
  std::vector<int> trans = {32, 16};
  int res = 12;
  std::vector<int> unet = {8, 12, 16};

  nlohmann::json ToJson() const;
  static ReconWidths FromJson(const nlohmann::json& j);
};

struct ReconConfig {
  ReconWidths widths;
  int epochs = 20;
  float lr = 1e-3f;
  int batch_size = 16;
  double holdout_fraction = 0.1;
  std::uint64_t seed = 1;

  void Validate() const;
  nlohmann::json ToJson() const;
  static ReconConfig FromJson(const nlohmann::json& j);
};

// Throws BuildError when the feature map cannot reach image_size within the
// architecture's upsampling stages (each stage at most doubles the size).
nn::Sequential BuildRecon(ReconKind kind, Shape feature_shape, int image_size,
                          const ReconWidths& widths = {});

struct ReconTrainLog {
  std::vector<double> epoch_loss;  // mean per-pixel L1 on the training part
  double heldout_before = 0.0;
  double heldout_after = 0.0;
  std::string dataset_fingerprint;
  ReconKind kind = ReconKind::kTransRec;
  Role role = Role::kAttacker;

  nlohmann::json ToJson() const;
};

class ReconModel {
 public:
  ReconModel() = default;
  ReconModel(ReconKind kind, Role role, Shape feature_shape, int image_size,
             std::string extractor_hash, const ReconWidths& widths, std::uint64_t seed);

  // Inference on a private copy; outputs lie in [0, 1].
  Tensor Reconstruct(const Tensor& features) const;

  ReconKind kind() const { return kind_; }
  Role role() const { return role_; }
  Shape feature_shape() const { return feature_shape_; }
  int image_size() const { return image_size_; }
  const std::string& extractor_hash() const { return extractor_hash_; }
  const std::string& dataset_fingerprint() const { return dataset_fingerprint_; }
  void set_dataset_fingerprint(std::string f) { dataset_fingerprint_ = std::move(f); }
  // Digest of architecture and weights.
  std::string fingerprint() const;

  nn::Sequential& net() { return net_; }
  const nn::Sequential& net() const { return net_; }

  void Save(const std::filesystem::path& path,
            const nlohmann::json& extra = nlohmann::json::object()) const;
  static ReconModel Load(const std::filesystem::path& path, nlohmann::json* metadata = nullptr);

 private:
  ReconKind kind_ = ReconKind::kTransRec;
  Role role_ = Role::kAttacker;
  Shape feature_shape_;
  int image_size_ = 0;
  std::string extractor_hash_;
  std::string dataset_fingerprint_;
  nn::Sequential net_;
};

// Mean absolute error over every element; writes sign(pred - target) / N
// into grad when given.
double MeanL1Loss(const Tensor& pred, const Tensor& target, Tensor* grad = nullptr);

// Trains on (features, images) rows drawn from `manifest`, whose split must
// match the model's role. A seeded held-out slice is excluded from training
// and scored before and after. epochs == 0 leaves the model untouched.
ReconModel TrainRecon(ReconModel model, const data::DatasetManifest& manifest,
                      const Tensor& features, const Tensor& images,
                      const ReconConfig& config, ReconTrainLog* log = nullptr);

// Convenience form: loads the manifest's faces and extracts their features.
ReconModel TrainRecon(ReconModel model, const data::DatasetManifest& manifest,
                      const recog::SplitRecognizer& recognizer, const ReconConfig& config,
                      ReconTrainLog* log = nullptr);

}  // namespace advface::recon

#endif  // ADVFACE_RECON_HPP_
