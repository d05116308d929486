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

// Experiment configuration, artifact manifest and the staged pipeline that
// the command-line tool drives.

#ifndef ADVFACE_EXPERIMENT_HPP_
#define ADVFACE_EXPERIMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "advface/data_io.hpp"
#include "advface/eval.hpp"
#include "advface/protection_config.hpp"
#include "advface/recognizer.hpp"
#include "advface/recon.hpp"
#include "advface/synth_faces.hpp"
#include "advface/vault.hpp"

namespace advface::exp {

struct DatasetSection {
  std::string name = "synthetic";
  std::string root = "data/synthetic";
  // Render the synthetic set into `root` when it does not exist yet.
  bool synthesize = true;
  data::SynthOptions synth;
  data::SplitFractions fractions;
  int image_size = 64;
};

struct EvalSection {
  int folds = 10;
  int max_pairs_per_class = 2000;
  int enrollment_per_identity = 1;
  // Replay against an enrollment feature of the very same image.
  bool srra_same_source = false;
  // Protect only the first feature of each verification pair.
  bool protect_one_side = false;
  std::vector<float> sweep_epsilons = {0.0f, 0.05f, 0.1f, 0.15f, 0.2f, 0.25f, 0.3f};
  std::vector<std::string> grid_archs = {"transrec", "resrec", "urec"};
  int grid_columns = 8;
};

// Precedence, lowest first: built-in defaults, the config file, `--set`
// overrides, dedicated flags (--seed, --out).
struct ExperimentConfig {
  DatasetSection dataset;
  recog::RecognizerConfig recognizer;
  recon::ReconConfig recon;
  std::string attacker_arch = "transrec";
  ProtectionConfig protection;
  EvalSection eval;
  std::uint64_t seed = 2024;
  std::string out_dir = "runs/desk";

  // Every cross-field contract, checked before any compute. Throws ConfigError.
  void Validate() const;
  nlohmann::json ToJson() const;
  // Unknown keys and wrong types are ConfigErrors.
  static ExperimentConfig FromJson(const nlohmann::json& j);
  std::string Hash() const;

  // Stage seeds fan out from the master seed by label.
  std::uint64_t StageSeed(const std::string& label) const;
  recon::ReconKind AttackerKind() const;
  recon::ReconKind ShadowKind() const;
};

ExperimentConfig LoadConfig(const std::filesystem::path& path);
// "section.key=value" (value parsed as JSON, falling back to a string).
void ApplyOverride(nlohmann::json& config, const std::string& assignment);

struct RunManifest {
  std::string config_hash;
  std::map<std::string, std::string> checkpoints;
  std::map<std::string, std::string> vaults;
  std::map<std::string, std::string> reports;
  std::map<std::string, double> stage_seconds;

  nlohmann::json ToJson() const;
  static RunManifest FromJson(const nlohmann::json& j);
  // Throws NotFoundError naming the first missing artifact.
  void CheckArtifacts(const std::filesystem::path& root) const;
};

struct OfflineResult {
  double acc_unprotected = 0.0;
  double acc_online = 0.0;
  double acc_offline = 0.0;
  double ssim_online = 0.0;
  double ssim_offline = 0.0;
  std::vector<double> retrain_loss;
  std::string recognizer_before;
  std::string recognizer_after;

  double drop() const { return acc_unprotected - acc_online; }
  nlohmann::json ToJson() const;
};

struct Summary {
  std::vector<eval::EvalReport> defenses;  // none, advface, random, dp
  OfflineResult offline;
  std::vector<eval::EvalReport> sweep;
  eval::TransferGrid grid;
  double clean_acc = 0.0;
  double threshold = 0.0;
  nlohmann::json ToJson() const;
};

class Experiment {
 public:
  explicit Experiment(ExperimentConfig config, bool force = false);

  const ExperimentConfig& config() const { return config_; }
  const std::filesystem::path& out() const { return out_; }
  const RunManifest& manifest() const { return manifest_; }

  std::filesystem::path SynthFaces();
  std::filesystem::path TrainRecognizer();
  std::filesystem::path TrainAttacker(recon::ReconKind kind);
  std::filesystem::path TrainShadow(recon::ReconKind kind);

  // Writes a vault for the eval split (minus enrollment images), or for the
  // recognizer-train split when `train_split` is set.
  std::filesystem::path Protect(Defense defense, std::optional<recon::ReconKind> shadow = {},
                                std::optional<float> epsilon = {}, bool train_split = false);
  eval::EvalReport Evaluate(const std::filesystem::path& vault, recon::ReconKind attacker);
  OfflineResult OfflineRetrain();
  std::vector<eval::EvalReport> SweepEpsilon();
  eval::TransferGrid TransferGrid();
  Summary RunAll();
  // Gathers every report in the run into flat tables.
  std::filesystem::path Report();

 private:
  struct EvalData;

  void SaveManifest();
  void Stage(const std::string& name, double seconds);
  const data::LoadResult& Splits();
  const recog::SplitRecognizer& Recognizer();
  const EvalData& Eval();
  recon::ReconModel Model(recon::Role role, recon::ReconKind kind);
  std::filesystem::path TrainRecon(recon::Role role, recon::ReconKind kind);
  double Threshold();
  std::string VaultName(Defense defense, std::optional<recon::ReconKind> shadow, float epsilon,
                        bool train_split) const;
  eval::EvalReport Attack(const std::vector<data::VaultRecord>& vault, const std::string& vault_hash,
                          recon::ReconKind attacker, const recog::SplitRecognizer& recognizer,
                          const std::string& grid_name);
  void WriteReport(const std::string& name, const nlohmann::json& j);

  ExperimentConfig config_;
  bool force_;
  std::filesystem::path out_;
  RunManifest manifest_;
  std::optional<data::LoadResult> splits_;
  std::optional<recog::SplitRecognizer> recognizer_;
  std::shared_ptr<EvalData> eval_;
  std::optional<double> threshold_;
};

}  // namespace advface::exp

#endif  // ADVFACE_EXPERIMENT_HPP_
