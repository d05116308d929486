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

// Attacks on stored features and the report records built from them.

#ifndef ADVFACE_EVAL_HPP_
#define ADVFACE_EVAL_HPP_

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "advface/data_io.hpp"
#include "advface/protection_config.hpp"
#include "advface/recognizer.hpp"
#include "advface/recon.hpp"
#include "advface/tensor.hpp"
#include "advface/vault.hpp"

namespace advface::eval {

// Hashes that tie a report row to the artifacts it came from.
struct Trace {
  std::string config_hash;
  std::string recognizer_hash;
  std::string attacker_fingerprint;
  std::string shadow_fingerprint;
  std::string vault_hash;

  nlohmann::json ToJson() const;
  static Trace FromJson(const nlohmann::json& j);
};

struct EvalReport {
  std::string dataset;
  std::string defense;
  ProtectionConfig protection;
  std::string attacker_arch;
  std::string shadow_arch;
  double ssim = 0.0;
  double psnr = 0.0;  // from the mean MSE
  double psnr_image_mean = 0.0;
  double mse = 0.0;
  double srra = 0.0;
  double acc = 0.0;
  int samples = 0;
  int srra_total = 0;
  int srra_skipped = 0;
  bool metrics_defined = false;
  bool srra_defined = false;
  bool acc_defined = false;
  Trace trace;

  // Throws ContractError when a defined metric leaves its range.
  void CheckInvariants() const;
  nlohmann::json ToJson() const;
  static EvalReport FromJson(const nlohmann::json& j);
};

// Flattened table in the column order dataset, defense, SSIM, PSNR, MSE,
// SRRA, ACC, followed by provenance columns. Undefined metrics are empty.
std::vector<std::string> CsvHeader();
std::vector<std::string> CsvRow(const EvalReport& report);
void WriteCsv(const std::filesystem::path& path, std::span<const EvalReport> reports);

// --------------------------------------------------------- reconstruction

struct ReconstructionResult {
  double ssim = 0.0;
  double psnr = 0.0;
  double psnr_image_mean = 0.0;
  double mse = 0.0;
  int samples = 0;
  bool defined = false;
  Tensor images;  // reconstructions, vault order
};

// Reconstructs every record and scores it against the original with the
// same source_id. The attacker must be an attacker-role model built on the
// records' extractor; anything else is a ContractError, as is a record
// without a matching original.
ReconstructionResult RunReconstructionAttack(const recon::ReconModel& attacker,
                                             std::span<const data::VaultRecord> vault,
                                             std::span<const data::FaceImage> originals);

// Writes rows of image batches side by side, one column per sample.
void WriteImageGrid(const std::filesystem::path& path, std::span<const Tensor> rows,
                    int max_columns = 8);

// ------------------------------------------------------------------ replay

// Maps stored records to images. Real attacks wrap a reconstruction model;
// tests can substitute anything with the same contract.
using Reconstructor = std::function<Tensor(std::span<const data::VaultRecord>)>;
Reconstructor ModelReconstructor(const recon::ReconModel& model);
Tensor RecordFeatures(std::span<const data::VaultRecord> records);

struct ReplayResult {
  int accepted = 0;
  int total = 0;    // records with an enrollment
  int skipped = 0;  // records whose identity has no enrollment
  double srra() const { return total > 0 ? static_cast<double>(accepted) / total : 0.0; }
};

// For each record: reconstruct, re-extract, embed and verify against the
// first enrollment feature of the same identity. Enrollment records sharing
// a source_id with the vault record are ignored unless allow_same_source.
ReplayResult RunReplayAttack(const Reconstructor& reconstruct,
                             const recog::SplitRecognizer& recognizer, double threshold,
                             std::span<const data::VaultRecord> vault,
                             std::span<const data::VaultRecord> enrollment,
                             bool allow_same_source = false);

// ---------------------------------------------------------- verification

struct IndexPair {
  int a = 0;
  int b = 0;
  bool same = false;
};

// Every genuine pair (up to max_per_class, seeded subsample) plus as many
// seeded impostor pairs. Deterministic in the seed.
std::vector<IndexPair> BalancedPairs(std::span<const std::string> identities, int max_per_class,
                                     std::uint64_t seed);

// k-fold verification accuracy on pairs drawn across two feature sets with
// the same row order (pass one set twice to protect both sides).
recog::VerificationThreshold PairVerification(const recog::SplitRecognizer& recognizer,
                                              const Tensor& side_a, const Tensor& side_b,
                                              std::span<const IndexPair> pairs, int folds);

// -------------------------------------------------------------- transfer

struct GridCell {
  recon::ReconKind shadow = recon::ReconKind::kTransRec;
  recon::ReconKind attacker = recon::ReconKind::kTransRec;
  std::optional<EvalReport> report;
  std::string gap;  // why the cell is empty
};

struct TransferGrid {
  std::string dataset;
  std::vector<GridCell> cells;  // shadow-major

  const GridCell* Find(recon::ReconKind shadow, recon::ReconKind attacker) const;
  // Largest |SSIM(cell) - SSIM(same-shadow diagonal)| over off-diagonal
  // cells. Empty when any needed cell is missing.
  std::optional<double> MaxDiagonalDeviation() const;
  std::optional<double> SsimSpread() const;
  nlohmann::json ToJson() const;
};

using CellRunner = std::function<EvalReport(recon::ReconKind shadow, recon::ReconKind attacker)>;
using ModelCheck = std::function<bool(recon::ReconKind)>;

// Runs every available (shadow, attacker) cell; unavailable ones become
// explicit gaps.
TransferGrid RunTransferGrid(const std::string& dataset, std::span<const recon::ReconKind> shadows,
                             std::span<const recon::ReconKind> attackers,
                             const ModelCheck& has_shadow, const ModelCheck& has_attacker,
                             const CellRunner& run);

}  // namespace advface::eval

#endif  // ADVFACE_EVAL_HPP_
