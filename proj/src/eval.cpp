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

#include "advface/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <random>

#include <fmt/format.h>

#include "advface/error.hpp"
#include "advface/metrics.hpp"

namespace advface::eval {

using data::VaultRecord;

nlohmann::json Trace::ToJson() const {
  return {{"config_hash", config_hash},
          {"recognizer_hash", recognizer_hash},
          {"attacker_fingerprint", attacker_fingerprint},
          {"shadow_fingerprint", shadow_fingerprint},
          {"vault_hash", vault_hash}};
}

Trace Trace::FromJson(const nlohmann::json& j) {
  Trace t;
  t.config_hash = j.value("config_hash", "");
  t.recognizer_hash = j.value("recognizer_hash", "");
  t.attacker_fingerprint = j.value("attacker_fingerprint", "");
  t.shadow_fingerprint = j.value("shadow_fingerprint", "");
  t.vault_hash = j.value("vault_hash", "");
  return t;
}

void EvalReport::CheckInvariants() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (metrics_defined) {
    if (!(ssim >= -1.0 && ssim <= 1.0)) throw ContractError("ssim out of range");
    if (!(mse >= 0.0)) throw ContractError("mse is negative");
    if (std::abs(psnr - PsnrFromMse(mse)) > 1e-6) {
      throw ContractError("psnr is inconsistent with mse");
    }
  }
  if (srra_defined && !unit(srra)) throw ContractError("srra out of [0, 1]");
  if (acc_defined && !unit(acc)) throw ContractError("acc out of [0, 1]");
}

nlohmann::json EvalReport::ToJson() const {
  auto opt = [](bool defined, double v) { return defined ? nlohmann::json(v) : nlohmann::json(); };
  return {{"dataset", dataset},
          {"defense", defense},
          {"protection", protection.ToJson()},
          {"attacker_arch", attacker_arch},
          {"shadow_arch", shadow_arch},
          {"ssim", opt(metrics_defined, ssim)},
          {"psnr", opt(metrics_defined, psnr)},
          {"psnr_image_mean", opt(metrics_defined, psnr_image_mean)},
          {"mse", opt(metrics_defined, mse)},
          {"srra", opt(srra_defined, srra)},
          {"acc", opt(acc_defined, acc)},
          {"samples", samples},
          {"srra_total", srra_total},
          {"srra_skipped", srra_skipped},
          {"metrics_defined", metrics_defined},
          {"srra_defined", srra_defined},
          {"acc_defined", acc_defined},
          {"trace", trace.ToJson()}};
}

EvalReport EvalReport::FromJson(const nlohmann::json& j) {
  EvalReport r;
  r.dataset = j.value("dataset", "");
  r.defense = j.value("defense", "");
  if (j.contains("protection")) r.protection = ProtectionConfig::FromJson(j.at("protection"));
  r.attacker_arch = j.value("attacker_arch", "");
  r.shadow_arch = j.value("shadow_arch", "");
  auto num = [&](const char* key) {
    return j.contains(key) && j.at(key).is_number() ? j.at(key).get<double>() : 0.0;
  };
  r.ssim = num("ssim");
  r.psnr = num("psnr");
  r.psnr_image_mean = num("psnr_image_mean");
  r.mse = num("mse");
  r.srra = num("srra");
  r.acc = num("acc");
  r.samples = j.value("samples", 0);
  r.srra_total = j.value("srra_total", 0);
  r.srra_skipped = j.value("srra_skipped", 0);
  r.metrics_defined = j.value("metrics_defined", false);
  r.srra_defined = j.value("srra_defined", false);
  r.acc_defined = j.value("acc_defined", false);
  if (j.contains("trace")) r.trace = Trace::FromJson(j.at("trace"));
  return r;
}

std::vector<std::string> CsvHeader() {
  return {"dataset", "defense", "ssim", "psnr", "mse", "srra", "acc",
          "attacker", "shadow", "epsilon", "samples", "srra_skipped",
          "config_hash", "recognizer_hash", "attacker_fingerprint", "shadow_fingerprint",
          "vault_hash"};
}

std::vector<std::string> CsvRow(const EvalReport& r) {
  auto f = [](bool defined, double v) { return defined ? fmt::format("{:.6f}", v) : std::string(); };
  return {r.dataset,
          r.defense,
          f(r.metrics_defined, r.ssim),
          f(r.metrics_defined, r.psnr),
          f(r.metrics_defined, r.mse),
          f(r.srra_defined, r.srra),
          f(r.acc_defined, r.acc),
          r.attacker_arch,
          r.shadow_arch,
          fmt::format("{:.4f}", r.protection.epsilon),
          std::to_string(r.samples),
          std::to_string(r.srra_skipped),
          r.trace.config_hash,
          r.trace.recognizer_hash,
          r.trace.attacker_fingerprint,
          r.trace.shadow_fingerprint,
          r.trace.vault_hash};
}

namespace {

std::string CsvField(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void WriteLine(std::ofstream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << CsvField(fields[i]);
  }
  out << '\n';
}

}  // namespace

void WriteCsv(const std::filesystem::path& path, std::span<const EvalReport> reports) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  WriteLine(out, CsvHeader());
  for (const auto& r : reports) WriteLine(out, CsvRow(r));
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------

Tensor RecordFeatures(std::span<const VaultRecord> records) {
  if (records.empty()) return {};
  const Shape shape = records.front().shape;
  Tensor out(static_cast<int>(records.size()), shape);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].shape != shape || records[i].feature.size() != shape.size()) {
      throw ContractError("record " + records[i].record_id + " has shape " +
                          records[i].shape.ToString() + ", expected " + shape.ToString());
    }
    out.SetSample(static_cast<int>(i), records[i].feature);
  }
  return out;
}

ReconstructionResult RunReconstructionAttack(const recon::ReconModel& attacker,
                                             std::span<const VaultRecord> vault,
                                             std::span<const data::FaceImage> originals) {
  ReconstructionResult res;
  if (vault.empty()) return res;
  if (attacker.role() != recon::Role::kAttacker) {
    throw ContractError("reconstruction attack needs an attacker-role model");
  }
  for (const auto& r : vault) {
    if (r.extractor_hash != attacker.extractor_hash()) {
      throw ContractError("record " + r.record_id + " comes from extractor " + r.extractor_hash +
                          " but the attacker was trained on " + attacker.extractor_hash());
    }
  }
  std::map<std::string, const data::FaceImage*> by_source;
  for (const auto& img : originals) by_source.emplace(img.source_id, &img);
  std::vector<const data::FaceImage*> matched;
  for (const auto& r : vault) {
    auto it = by_source.find(r.source_id);
    if (it == by_source.end()) {
      throw ContractError("no original image for record " + r.record_id + " (source '" +
                          r.source_id + "')");
    }
    if (it->second->size != attacker.image_size()) {
      throw ContractError("original image size differs from the attacker's output size");
    }
    matched.push_back(it->second);
  }
  res.images = attacker.Reconstruct(RecordFeatures(vault));
  double ssim = 0.0, mse = 0.0, psnr = 0.0;
  for (int i = 0; i < res.images.n(); ++i) {
    const auto rec = res.images.sample(i);
    const auto& orig = matched[static_cast<std::size_t>(i)]->pixels;
    const double m = Mse(rec, orig);
    mse += m;
    psnr += PsnrFromMse(m);
    ssim += Ssim(rec, orig, attacker.image_size());
  }
  const double n = static_cast<double>(res.images.n());
  res.samples = res.images.n();
  res.ssim = ssim / n;
  res.mse = mse / n;
  res.psnr = PsnrFromMse(res.mse);
  res.psnr_image_mean = psnr / n;
  res.defined = true;
  return res;
}

void WriteImageGrid(const std::filesystem::path& path, std::span<const Tensor> rows,
                    int max_columns) {
  if (rows.empty()) throw ParameterError("image grid needs at least one row");
  const Shape shape = rows.front().shape();
  if (shape.c != 3 || shape.h != shape.w) throw ContractError("grid rows must be RGB squares");
  int cols = 0;
  for (const auto& r : rows) {
    if (r.shape() != shape) throw ContractError("grid rows differ in image shape");
    cols = std::max(cols, std::min(r.n(), max_columns));
  }
  if (cols == 0) throw ParameterError("image grid has no images");
  const int s = shape.h;
  data::RawImage grid;
  grid.width = cols * s;
  grid.height = static_cast<int>(rows.size()) * s;
  grid.channels = 3;
  grid.bytes.assign(static_cast<std::size_t>(grid.width) * grid.height * 3, 0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (int i = 0; i < std::min(rows[r].n(), cols); ++i) {
      const data::RawImage tile = data::ToRaw(data::FromBatch(rows[r], i));
      for (int y = 0; y < s; ++y) {
        const std::size_t dst = ((r * s + y) * static_cast<std::size_t>(grid.width) + i * s) * 3;
        std::copy_n(tile.bytes.begin() + static_cast<std::ptrdiff_t>(y) * s * 3, s * 3,
                    grid.bytes.begin() + static_cast<std::ptrdiff_t>(dst));
      }
    }
  }
  data::WritePng(path, grid);
}

// ---------------------------------------------------------------------------

Reconstructor ModelReconstructor(const recon::ReconModel& model) {
  auto shared = std::make_shared<const recon::ReconModel>(model);
  return [shared](std::span<const VaultRecord> records) {
    return shared->Reconstruct(RecordFeatures(records));
  };
}

ReplayResult RunReplayAttack(const Reconstructor& reconstruct,
                             const recog::SplitRecognizer& recognizer, double threshold,
                             std::span<const VaultRecord> vault,
                             std::span<const VaultRecord> enrollment, bool allow_same_source) {
  const std::string& hash = recognizer.extractor_hash();
  for (const auto& r : enrollment) {
    if (r.extractor_hash != hash) {
      throw ContractError("enrollment record " + r.record_id + " has foreign provenance");
    }
  }
  std::map<std::string, std::vector<const VaultRecord*>> enrolled;
  for (const auto& r : enrollment) enrolled[r.identity].push_back(&r);

  ReplayResult res;
  std::vector<VaultRecord> attacked;
  std::vector<const VaultRecord*> templates;
  for (const auto& r : vault) {
    if (r.extractor_hash != hash) {
      throw ContractError("record " + r.record_id + " has foreign provenance");
    }
    const VaultRecord* tmpl = nullptr;
    if (auto it = enrolled.find(r.identity); it != enrolled.end()) {
      for (const auto* e : it->second) {
        if (allow_same_source || e->source_id.empty() || e->source_id != r.source_id) {
          tmpl = e;
          break;
        }
      }
    }
    if (!tmpl) {
      ++res.skipped;
      continue;
    }
    attacked.push_back(r);
    templates.push_back(tmpl);
  }
  res.total = static_cast<int>(attacked.size());
  if (attacked.empty()) return res;

  const Tensor images = reconstruct(attacked);
  if (images.n() != res.total || images.shape() != recognizer.image_shape()) {
    throw ContractError("reconstructor returned " + std::to_string(images.n()) + " x " +
                        images.shape().ToString() + " for " + std::to_string(res.total) +
                        " records");
  }
  const Tensor probe = recognizer.Embed(recognizer.Extract(images));
  std::vector<VaultRecord> tmpl_records;
  tmpl_records.reserve(templates.size());
  for (const auto* t : templates) tmpl_records.push_back(*t);
  const Tensor gallery = recognizer.Embed(RecordFeatures(tmpl_records));
  for (int i = 0; i < res.total; ++i) {
    if (recog::SquaredDistance(probe.sample(i), gallery.sample(i)) <= threshold) ++res.accepted;
  }
  return res;
}

// ---------------------------------------------------------------------------

std::vector<IndexPair> BalancedPairs(std::span<const std::string> identities, int max_per_class,
                                     std::uint64_t seed) {
  if (max_per_class < 1) throw ParameterError("max_per_class must be >= 1");
  std::vector<IndexPair> genuine, impostor;
  const int n = static_cast<int>(identities.size());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      (identities[i] == identities[j] ? genuine : impostor).push_back({i, j, identities[i] == identities[j]});
    }
  }
  std::mt19937_64 rng(seed);
  std::shuffle(genuine.begin(), genuine.end(), rng);
  std::shuffle(impostor.begin(), impostor.end(), rng);
  const std::size_t k = std::min({genuine.size(), impostor.size(),
                                  static_cast<std::size_t>(max_per_class)});
  genuine.resize(k);
  impostor.resize(k);
  // interleave so every fold sees both classes
  std::vector<IndexPair> out;
  out.reserve(2 * k);
  for (std::size_t i = 0; i < k; ++i) {
    out.push_back(genuine[i]);
    out.push_back(impostor[i]);
  }
  return out;
}

recog::VerificationThreshold PairVerification(const recog::SplitRecognizer& recognizer,
                                              const Tensor& side_a, const Tensor& side_b,
                                              std::span<const IndexPair> pairs, int folds) {
  if (side_a.n() != side_b.n()) throw ContractError("pair sides differ in length");
  const Tensor ea = recognizer.Embed(side_a);
  const Tensor eb = &side_a == &side_b ? ea : recognizer.Embed(side_b);
  std::vector<recog::ScoredPair> scored;
  scored.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.a < 0 || p.b < 0 || p.a >= side_a.n() || p.b >= side_a.n()) {
      throw ContractError("pair index out of range");
    }
    scored.push_back({recog::SquaredDistance(ea.sample(p.a), eb.sample(p.b)), p.same});
  }
  return recog::CalibrateThreshold(scored, folds);
}

// ---------------------------------------------------------------------------

const GridCell* TransferGrid::Find(recon::ReconKind shadow, recon::ReconKind attacker) const {
  for (const auto& c : cells) {
    if (c.shadow == shadow && c.attacker == attacker) return &c;
  }
  return nullptr;
}

std::optional<double> TransferGrid::MaxDiagonalDeviation() const {
  double worst = 0.0;
  bool any = false;
  for (const auto& c : cells) {
    if (c.shadow == c.attacker) continue;
    const GridCell* diag = Find(c.shadow, c.shadow);
    if (!c.report || !diag || !diag->report || !c.report->metrics_defined ||
        !diag->report->metrics_defined) {
      return std::nullopt;
    }
    worst = std::max(worst, std::abs(c.report->ssim - diag->report->ssim));
    any = true;
  }
  if (!any) return std::nullopt;
  return worst;
}

std::optional<double> TransferGrid::SsimSpread() const {
  double lo = 1e9, hi = -1e9;
  for (const auto& c : cells) {
    if (!c.report || !c.report->metrics_defined) return std::nullopt;
    lo = std::min(lo, c.report->ssim);
    hi = std::max(hi, c.report->ssim);
  }
  if (cells.empty()) return std::nullopt;
  return hi - lo;
}

nlohmann::json TransferGrid::ToJson() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : cells) {
    nlohmann::json j = {{"shadow", recon::ReconKindName(c.shadow)},
                        {"attacker", recon::ReconKindName(c.attacker)}};
    if (c.report) {
      j["report"] = c.report->ToJson();
    } else {
      j["gap"] = c.gap;
    }
    rows.push_back(j);
  }
  nlohmann::json out = {{"dataset", dataset}, {"cells", rows}};
  const auto dev = MaxDiagonalDeviation();
  out["max_diagonal_deviation"] = dev ? nlohmann::json(*dev) : nlohmann::json();
  const auto spread = SsimSpread();
  out["ssim_spread"] = spread ? nlohmann::json(*spread) : nlohmann::json();
  return out;
}

TransferGrid RunTransferGrid(const std::string& dataset, std::span<const recon::ReconKind> shadows,
                             std::span<const recon::ReconKind> attackers,
                             const ModelCheck& has_shadow, const ModelCheck& has_attacker,
                             const CellRunner& run) {
  TransferGrid grid;
  grid.dataset = dataset;
  for (auto s : shadows) {
    for (auto a : attackers) {
      GridCell cell{s, a, std::nullopt, {}};
      if (!has_shadow(s)) {
        cell.gap = std::string("missing shadow model ") + recon::ReconKindName(s);
      } else if (!has_attacker(a)) {
        cell.gap = std::string("missing attacker model ") + recon::ReconKindName(a);
      } else {
        cell.report = run(s, a);
      }
      grid.cells.push_back(std::move(cell));
    }
  }
  return grid;
}

}  // namespace advface::eval
