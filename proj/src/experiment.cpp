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

#include "advface/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "advface/error.hpp"
#include "advface/metrics.hpp"
#include "advface/protect.hpp"
#include "advface/util.hpp"

namespace advface::exp {

namespace fs = std::filesystem;
using nlohmann::json;
using recon::ReconKind;
using recon::Role;

namespace {

json WithoutKeys(json j, std::initializer_list<const char*> keys) {
  for (const char* k : keys) j.erase(k);
  return j;
}

// Rejects keys the defaults do not have, recursing into nested objects.
void CheckKeys(const json& given, const json& allowed, const std::string& where) {
  if (!given.is_object()) throw ConfigError("'" + where + "' must be an object");
  for (const auto& [key, value] : given.items()) {
    if (!allowed.contains(key)) {
      throw ConfigError("unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
    }
    if (allowed.at(key).is_object()) {
      CheckKeys(value, allowed.at(key), where.empty() ? key : where + "." + key);
    }
  }
}

std::string Digest(const json& j) { return HexDigest(Fnv1a64(j.dump())); }

json ReadJson(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void WriteJson(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

std::string EpsilonTag(float eps) { return fmt::format("eps{:.2f}", eps); }

}  // namespace

// ------------------------------------------------------------------- config

json ExperimentConfig::ToJson() const {
  return {{"dataset",
           {{"name", dataset.name},
            {"root", dataset.root},
            {"synthesize", dataset.synthesize},
            {"synth",
             {{"identities", dataset.synth.identities},
              {"images_per_identity", dataset.synth.images_per_identity},
              {"size", dataset.synth.size},
              {"seed", dataset.synth.seed}}},
            {"fractions", dataset.fractions.values},
            {"image_size", dataset.image_size}}},
          {"recognizer", WithoutKeys(recognizer.ToJson(), {"seed"})},
          {"recon", WithoutKeys(recon.ToJson(), {"seed"})},
          {"attacker_arch", attacker_arch},
          {"protection", WithoutKeys(protection.ToJson(), {"seed", "dp_scale", "defense"})},
          {"eval",
           {{"folds", eval.folds},
            {"max_pairs_per_class", eval.max_pairs_per_class},
            {"enrollment_per_identity", eval.enrollment_per_identity},
            {"srra_same_source", eval.srra_same_source},
            {"protect_one_side", eval.protect_one_side},
            {"sweep_epsilons", eval.sweep_epsilons},
            {"grid_archs", eval.grid_archs},
            {"grid_columns", eval.grid_columns}}},
          {"seed", seed},
          {"out_dir", out_dir}};
}

ExperimentConfig ExperimentConfig::FromJson(const json& j) {
  const ExperimentConfig defaults;
  CheckKeys(j, defaults.ToJson(), "");
  ExperimentConfig c;
  try {
    if (j.contains("dataset")) {
      const json& d = j.at("dataset");
      c.dataset.name = d.value("name", c.dataset.name);
      c.dataset.root = d.value("root", c.dataset.root);
      c.dataset.synthesize = d.value("synthesize", c.dataset.synthesize);
      if (d.contains("synth")) {
        const json& s = d.at("synth");
        c.dataset.synth.identities = s.value("identities", c.dataset.synth.identities);
        c.dataset.synth.images_per_identity =
            s.value("images_per_identity", c.dataset.synth.images_per_identity);
        c.dataset.synth.size = s.value("size", c.dataset.synth.size);
        c.dataset.synth.seed = s.value("seed", c.dataset.synth.seed);
      }
      c.dataset.fractions.values = d.value("fractions", c.dataset.fractions.values);
      c.dataset.image_size = d.value("image_size", c.dataset.image_size);
    }
    if (j.contains("recognizer")) {
      json merged = c.recognizer.ToJson();
      merged.merge_patch(j.at("recognizer"));
      c.recognizer = recog::RecognizerConfig::FromJson(merged);
    }
    if (j.contains("recon")) {
      json merged = c.recon.ToJson();
      merged.merge_patch(j.at("recon"));
      c.recon = recon::ReconConfig::FromJson(merged);
    }
    c.attacker_arch = j.value("attacker_arch", c.attacker_arch);
    if (j.contains("protection")) {
      json merged = c.protection.ToJson();
      merged.merge_patch(j.at("protection"));
      c.protection = ProtectionConfig::FromJson(merged);
    }
    if (j.contains("eval")) {
      const json& e = j.at("eval");
      c.eval.folds = e.value("folds", c.eval.folds);
      c.eval.max_pairs_per_class = e.value("max_pairs_per_class", c.eval.max_pairs_per_class);
      c.eval.enrollment_per_identity =
          e.value("enrollment_per_identity", c.eval.enrollment_per_identity);
      c.eval.srra_same_source = e.value("srra_same_source", c.eval.srra_same_source);
      c.eval.protect_one_side = e.value("protect_one_side", c.eval.protect_one_side);
      c.eval.sweep_epsilons = e.value("sweep_epsilons", c.eval.sweep_epsilons);
      c.eval.grid_archs = e.value("grid_archs", c.eval.grid_archs);
      c.eval.grid_columns = e.value("grid_columns", c.eval.grid_columns);
    }
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out_dir", c.out_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  } catch (const Error& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

void ExperimentConfig::Validate() const {
  auto section = [](const char* name, auto&& check) {
    try {
      check();
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(std::string(name) + ": " + e.what());
    }
  };
  if (dataset.root.empty()) throw ConfigError("dataset.root is empty");
  if (!dataset.synthesize && !fs::is_directory(dataset.root)) {
    throw ConfigError("dataset.root does not exist: " + dataset.root);
  }
  double total = 0.0;
  for (double f : dataset.fractions.values) {
    if (!(f > 0.0)) throw ConfigError("dataset.fractions must all be > 0 (one per split)");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-6) throw ConfigError("dataset.fractions must sum to 1");
  if (dataset.image_size != recognizer.image_size) {
    throw ConfigError("dataset.image_size and recognizer.image_size differ");
  }
  if (dataset.synthesize) {
    if (dataset.synth.identities < 8) throw ConfigError("dataset.synth.identities must be >= 8");
    if (dataset.synth.size < 8) throw ConfigError("dataset.synth.size must be >= 8");
    const auto counts = data::SplitCounts(dataset.synth.identities, dataset.fractions);
    for (int i = 0; i < 4; ++i) {
      if (counts[i] < 2) {
        throw ConfigError(std::string("split ") + data::SplitName(data::kAllSplits[i]) +
                          " would hold fewer than 2 identities");
      }
    }
    if (eval.enrollment_per_identity >= dataset.synth.images_per_identity) {
      throw ConfigError("eval.enrollment_per_identity leaves no images to protect");
    }
  }
  section("recognizer", [&] { recognizer.Validate(); });
  section("recon", [&] { recon.Validate(); });
  section("protection", [&] { protection.Validate(); });
  if (!(protection.alpha > 0.0f) || !(protection.epsilon >= 0.0f)) {
    throw ConfigError("protection.alpha must be > 0 and protection.epsilon >= 0");
  }
  if (eval.folds < 1) throw ConfigError("eval.folds must be >= 1");
  if (eval.max_pairs_per_class < 1) throw ConfigError("eval.max_pairs_per_class must be >= 1");
  if (eval.enrollment_per_identity < 1) throw ConfigError("eval.enrollment_per_identity must be >= 1");
  if (eval.grid_columns < 1) throw ConfigError("eval.grid_columns must be >= 1");
  for (float e : eval.sweep_epsilons) {
    if (!(e >= 0.0f) || !std::isfinite(e)) throw ConfigError("eval.sweep_epsilons must be >= 0");
  }
  if (out_dir.empty()) throw ConfigError("out_dir is empty");

  // Shape chain: image -> extractor -> every decoder in use -> image.
  std::set<ReconKind> kinds;
  section("architecture", [&] {
    kinds.insert(AttackerKind());
    kinds.insert(ShadowKind());
    for (const auto& a : eval.grid_archs) kinds.insert(recon::ParseReconKind(a));
    const auto probe = recog::SplitRecognizer::Build(recognizer, {"a", "b"});
    for (ReconKind k : kinds) {
      recon::BuildRecon(k, probe.feature_shape(), dataset.image_size, recon.widths);
    }
  });
}

// The output location is not part of an experiment's identity.
std::string ExperimentConfig::Hash() const { return Digest(WithoutKeys(ToJson(), {"out_dir"})); }

std::uint64_t ExperimentConfig::StageSeed(const std::string& label) const {
  return DeriveSeed(seed, label);
}

ReconKind ExperimentConfig::AttackerKind() const {
  try {
    return recon::ParseReconKind(attacker_arch);
  } catch (const Error& e) {
    throw ConfigError(std::string("attacker_arch: ") + e.what());
  }
}

ReconKind ExperimentConfig::ShadowKind() const {
  try {
    return recon::ParseReconKind(protection.shadow_arch.empty() ? "transrec" : protection.shadow_arch);
  } catch (const Error& e) {
    throw ConfigError(std::string("protection.shadow_arch: ") + e.what());
  }
}

ExperimentConfig LoadConfig(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  return ExperimentConfig::FromJson(ReadJson(path));
}

void ApplyOverride(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like section.key=value: " + assignment);
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &config;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i])) (*node)[parts[i]] = json::object();
    node = &(*node)[parts[i]];
    if (!node->is_object()) throw ConfigError("override path crosses a value: " + path);
  }
  (*node)[parts.back()] = value;
}

// ----------------------------------------------------------------- manifest

json RunManifest::ToJson() const {
  return {{"config_hash", config_hash},
          {"checkpoints", checkpoints},
          {"vaults", vaults},
          {"reports", reports},
          {"stage_seconds", stage_seconds}};
}

RunManifest RunManifest::FromJson(const json& j) {
  RunManifest m;
  m.config_hash = j.value("config_hash", "");
  m.checkpoints = j.value("checkpoints", m.checkpoints);
  m.vaults = j.value("vaults", m.vaults);
  m.reports = j.value("reports", m.reports);
  m.stage_seconds = j.value("stage_seconds", m.stage_seconds);
  return m;
}

void RunManifest::CheckArtifacts(const fs::path& root) const {
  for (const auto* group : {&checkpoints, &vaults, &reports}) {
    for (const auto& [name, rel] : *group) {
      if (!fs::exists(root / rel)) throw NotFoundError("artifact '" + name + "' missing: " + rel);
    }
  }
}

json OfflineResult::ToJson() const {
  return {{"acc_unprotected", acc_unprotected},
          {"acc_online", acc_online},
          {"acc_offline", acc_offline},
          {"drop", drop()},
          {"recovered", acc_offline - acc_online},
          {"ssim_online", ssim_online},
          {"ssim_offline", ssim_offline},
          {"retrain_loss", retrain_loss},
          {"recognizer_before", recognizer_before},
          {"recognizer_after", recognizer_after}};
}

json Summary::ToJson() const {
  json d = json::array(), s = json::array();
  for (const auto& r : defenses) d.push_back(r.ToJson());
  for (const auto& r : sweep) s.push_back(r.ToJson());
  return {{"defenses", d},
          {"offline", offline.ToJson()},
          {"sweep", s},
          {"transfer", grid.ToJson()},
          {"clean_acc", clean_acc},
          {"threshold", threshold}};
}

// --------------------------------------------------------------- experiment

struct Experiment::EvalData {
  std::vector<data::FaceImage> faces;         // vault sources, split order
  std::vector<std::string> identities;        // per vault source
  Tensor raw;                                 // extracted features of `faces`
  std::vector<data::VaultRecord> enrollment;  // raw features, held-out images
  std::vector<eval::IndexPair> pairs;
};

Experiment::Experiment(ExperimentConfig config, bool force)
    : config_(std::move(config)), force_(force), out_(config_.out_dir) {
  config_.Validate();
  for (const char* sub : {"models", "vaults", "reports", "grids", "tables"}) {
    fs::create_directories(out_ / sub);
  }
  if (fs::exists(out_ / "manifest.json")) {
    manifest_ = RunManifest::FromJson(ReadJson(out_ / "manifest.json"));
  }
  manifest_.config_hash = config_.Hash();
  WriteJson(out_ / "config.json", config_.ToJson());
  SaveManifest();
}

void Experiment::SaveManifest() { WriteJson(out_ / "manifest.json", manifest_.ToJson()); }

void Experiment::Stage(const std::string& name, double seconds) {
  manifest_.stage_seconds[name] += seconds;
  SaveManifest();
}

void Experiment::WriteReport(const std::string& name, const json& j) {
  const std::string rel = "reports/" + name + ".json";
  WriteJson(out_ / rel, j);
  manifest_.reports[name] = rel;
  SaveManifest();
}

fs::path Experiment::SynthFaces() {
  const fs::path root = config_.dataset.root;
  if (!config_.dataset.synthesize) {
    if (!fs::is_directory(root)) throw NotFoundError("dataset root missing: " + root.string());
    return root;
  }
  const bool present = fs::is_directory(root) && !fs::is_empty(root);
  if (present && !force_) {
    spdlog::info("synth-faces: reusing {}", root.string());
    return root;
  }
  const auto t0 = std::chrono::steady_clock::now();
  spdlog::info("synth-faces: rendering {} identities x {} images into {}",
               config_.dataset.synth.identities, config_.dataset.synth.images_per_identity,
               root.string());
  data::WriteSyntheticDataset(root, config_.dataset.synth);
  Stage("synth-faces", Seconds(t0));
  splits_.reset();
  return root;
}

const data::LoadResult& Experiment::Splits() {
  if (!splits_) {
    SynthFaces();
    splits_ = data::LoadDataset(config_.dataset.root, config_.dataset.fractions,
                                config_.StageSeed("split"));
    for (const auto& w : splits_->warnings) spdlog::warn("dataset: {}", w);
    for (auto s : data::kAllSplits) {
      if (splits_->at(s).Identities().size() < 2) {
        throw PreconditionError(std::string("split ") + data::SplitName(s) +
                                " has fewer than 2 identities");
      }
    }
  }
  return *splits_;
}

fs::path Experiment::TrainRecognizer() {
  Recognizer();
  return out_ / manifest_.checkpoints.at("recognizer");
}

const recog::SplitRecognizer& Experiment::Recognizer() {
  if (recognizer_) return *recognizer_;
  const std::string rel = "models/recognizer.ckpt";
  const fs::path path = out_ / rel;
  const json key = {{"dataset", config_.ToJson()["dataset"]},
                    {"recognizer", config_.ToJson()["recognizer"]},
                    {"seed", config_.seed}};
  if (fs::exists(path) && !force_) {
    json meta;
    auto rec = recog::SplitRecognizer::Load(path, &meta);
    if (meta.value("stage_key", "") != Digest(key)) {
      throw ConfigError(path.string() + " was trained with different settings; use --force");
    }
    spdlog::info("train-recognizer: reusing {}", path.string());
    recognizer_ = std::move(rec);
  } else {
    const auto t0 = std::chrono::steady_clock::now();
    const auto faces = data::LoadFaces(Splits().at(data::Split::kRecognizerTrain),
                                       config_.dataset.image_size);
    recog::RecognizerConfig cfg = config_.recognizer;
    cfg.seed = config_.StageSeed("recognizer");
    recog::TrainLog log;
    spdlog::info("train-recognizer: {} images, {} epochs", faces.size(), cfg.epochs);
    recognizer_ = recog::TrainRecognizer(faces, cfg, &log);
    recognizer_->Save(path, {{"stage_key", Digest(key)}, {"epoch_loss", log.epoch_loss}});
    Stage("train-recognizer", Seconds(t0));
  }
  manifest_.checkpoints["recognizer"] = rel;
  SaveManifest();
  return *recognizer_;
}

fs::path Experiment::TrainAttacker(ReconKind kind) { return TrainRecon(Role::kAttacker, kind); }
fs::path Experiment::TrainShadow(ReconKind kind) { return TrainRecon(Role::kShadow, kind); }

fs::path Experiment::TrainRecon(Role role, ReconKind kind) {
  const std::string name = std::string(recon::RoleName(role)) + "_" + recon::ReconKindName(kind);
  const std::string rel = "models/" + name + ".ckpt";
  const fs::path path = out_ / rel;
  const auto& rec = Recognizer();
  const json key = {{"dataset", config_.ToJson()["dataset"]},
                    {"recon", config_.ToJson()["recon"]},
                    {"extractor", rec.extractor_hash()},
                    {"name", name},
                    {"seed", config_.seed}};
  static thread_local std::set<std::string> trained_now;
  const std::string session_key = out_.string() + "|" + name;
  if (fs::exists(path) && (!force_ || trained_now.count(session_key))) {
    json meta;
    recon::ReconModel::Load(path, &meta);
    if (meta.value("stage_key", "") != Digest(key)) {
      throw ConfigError(path.string() + " was trained with different settings; use --force");
    }
    spdlog::info("train-{}: reusing {}", recon::RoleName(role), path.string());
  } else {
    const auto t0 = std::chrono::steady_clock::now();
    recon::ReconConfig cfg = config_.recon;
    cfg.seed = config_.StageSeed("recon-" + name);
    recon::ReconModel model(kind, role, rec.feature_shape(), config_.dataset.image_size,
                            rec.extractor_hash(), cfg.widths,
                            config_.StageSeed("recon-init-" + name));
    recon::ReconTrainLog log;
    spdlog::info("train-{}: {} for {} epochs", recon::RoleName(role), recon::ReconKindName(kind),
                 cfg.epochs);
    model = recon::TrainRecon(std::move(model), Splits().at(recon::RequiredSplit(role)), rec, cfg,
                              &log);
    model.Save(path, {{"stage_key", Digest(key)}, {"log", log.ToJson()}});
    spdlog::info("train-{}: {} held-out L1 {:.4f} -> {:.4f}", recon::RoleName(role),
                 recon::ReconKindName(kind), log.heldout_before, log.heldout_after);
    trained_now.insert(session_key);
    Stage("train-" + name, Seconds(t0));
  }
  manifest_.checkpoints[name] = rel;
  SaveManifest();
  return path;
}

recon::ReconModel Experiment::Model(Role role, ReconKind kind) {
  return recon::ReconModel::Load(TrainRecon(role, kind));
}

const Experiment::EvalData& Experiment::Eval() {
  if (eval_) return *eval_;
  auto data = std::make_shared<EvalData>();
  const auto& rec = Recognizer();
  const auto faces = data::LoadFaces(Splits().at(data::Split::kEval), config_.dataset.image_size);
  std::map<std::string, int> seen;
  std::vector<data::FaceImage> enroll;
  for (const auto& f : faces) {
    if (seen[f.identity]++ < config_.eval.enrollment_per_identity) {
      enroll.push_back(f);
    } else {
      data->faces.push_back(f);
      data->identities.push_back(f.identity);
    }
  }
  if (data->faces.empty()) throw PreconditionError("eval split has no images left to protect");
  data->raw = rec.Extract(data::ToBatch(data->faces));
  const Tensor enroll_z = rec.Extract(data::ToBatch(enroll));
  ProtectionConfig none;
  none.defense = Defense::kNone;
  for (std::size_t i = 0; i < enroll.size(); ++i) {
    data::VaultRecord r;
    r.record_id = enroll[i].source_id;
    r.identity = enroll[i].identity;
    r.shape = rec.feature_shape();
    const auto s = enroll_z.sample(static_cast<int>(i));
    r.feature.assign(s.begin(), s.end());
    r.protection = none;
    r.extractor_hash = rec.extractor_hash();
    r.source_id = enroll[i].source_id;
    data->enrollment.push_back(std::move(r));
  }
  const fs::path enroll_path = out_ / "vaults/enrollment.vault";
  if (fs::exists(enroll_path)) fs::remove(enroll_path);
  {
    data::VaultWriter writer(enroll_path);
    for (const auto& r : data->enrollment) writer.Append(r);
  }
  manifest_.vaults["enrollment"] = "vaults/enrollment.vault";
  data->pairs = eval::BalancedPairs(data->identities, config_.eval.max_pairs_per_class,
                                    config_.StageSeed("pairs"));
  eval_ = data;
  return *eval_;
}

double Experiment::Threshold() {
  if (!threshold_) {
    const auto& e = Eval();
    const auto th = eval::PairVerification(Recognizer(), e.raw, e.raw, e.pairs, config_.eval.folds);
    threshold_ = th.value;
    WriteReport("verification_clean", {{"threshold", th.value},
                                       {"accuracy", th.accuracy},
                                       {"folds", th.folds},
                                       {"fold_accuracy", th.fold_accuracy},
                                       {"pairs", e.pairs.size()}});
  }
  return *threshold_;
}

std::string Experiment::VaultName(Defense defense, std::optional<ReconKind> shadow, float epsilon,
                                  bool train_split) const {
  std::string name = std::string(train_split ? "train_" : "eval_") + DefenseName(defense);
  if (shadow) name += std::string("_") + recon::ReconKindName(*shadow);
  if (defense == Defense::kAdvFace) name += "_" + EpsilonTag(epsilon);
  return name;
}

fs::path Experiment::Protect(Defense defense, std::optional<ReconKind> shadow,
                             std::optional<float> epsilon, bool train_split) {
  const ReconKind kind = shadow.value_or(config_.ShadowKind());
  ProtectionConfig pc = config_.protection;
  pc.defense = defense;
  if (epsilon) pc.epsilon = *epsilon;
  pc.shadow_arch = recon::ReconKindName(kind);
  pc.Validate();
  const std::string name = VaultName(defense, kind, pc.epsilon, train_split);
  pc.seed = config_.StageSeed("protect-" + name);
  const std::string rel = "vaults/" + name + ".vault";
  const fs::path path = out_ / rel;
  const fs::path side = out_ / ("vaults/" + name + ".json");

  const auto& rec = Recognizer();
  const fs::path shadow_path = TrainShadow(kind);
  const auto shadow_model = recon::ReconModel::Load(shadow_path);
  const json key = {{"protection", pc.ToJson()},
                    {"shadow", shadow_model.fingerprint()},
                    {"extractor", rec.extractor_hash()},
                    {"eval", config_.ToJson()["eval"]["enrollment_per_identity"]},
                    {"dataset", config_.ToJson()["dataset"]},
                    {"seed", config_.seed}};
  static thread_local std::set<std::string> written_now;
  const std::string session_key = out_.string() + "|" + name;
  if (fs::exists(path) && fs::exists(side) && (!force_ || written_now.count(session_key))) {
    if (ReadJson(side).value("stage_key", "") != Digest(key)) {
      throw ConfigError(path.string() + " was written with different settings; use --force");
    }
    manifest_.vaults[name] = rel;
    SaveManifest();
    return path;
  }

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<data::FaceImage> train_faces;
  Tensor z;
  const std::vector<data::FaceImage>* faces = nullptr;
  if (train_split) {
    train_faces = data::LoadFaces(Splits().at(data::Split::kRecognizerTrain),
                                  config_.dataset.image_size);
    z = rec.Extract(data::ToBatch(train_faces));
    faces = &train_faces;
  } else {
    z = Eval().raw;
    faces = &Eval().faces;
  }
  spdlog::info("protect: {} ({} features, shadow {})", name, z.n(), pc.shadow_arch);
  protect::ProtectLog log;
  Tensor stored;
  switch (defense) {
    case Defense::kNone:
      stored = protect::ShadowFeatures(shadow_model, rec, z, pc, &log);
      break;
    case Defense::kAdvFace:
      stored = protect::GenerateAdversarial(shadow_model, rec, z, pc, &log);
      break;
    case Defense::kRandom:
      stored = protect::ProtectRandom(protect::ShadowFeatures(shadow_model, rec, z, pc, &log),
                                      pc.random_iterations, pc.random_bound, pc.seed);
      break;
    case Defense::kDp:
      stored = protect::ProtectDp(protect::ShadowFeatures(shadow_model, rec, z, pc, &log),
                                  pc.dp_budget, pc.dp_noise_bound, pc.seed);
      break;
  }
  if (fs::exists(path)) fs::remove(path);
  {
    data::VaultWriter writer(path);
    for (int i = 0; i < stored.n(); ++i) {
      data::VaultRecord r;
      r.record_id = (*faces)[static_cast<std::size_t>(i)].source_id;
      r.identity = (*faces)[static_cast<std::size_t>(i)].identity;
      r.source_id = r.record_id;
      r.shape = rec.feature_shape();
      const auto s = stored.sample(i);
      r.feature.assign(s.begin(), s.end());
      r.protection = pc;
      r.extractor_hash = rec.extractor_hash();
      writer.Append(r);
    }
  }
  int ascended = 0;
  for (std::size_t i = 0; i < log.loss_start.size(); ++i) {
    ascended += log.loss_end[i] >= log.loss_start[i];
  }
  json sidecar = {{"stage_key", Digest(key)},
                  {"protection", pc.ToJson()},
                  {"shadow_fingerprint", shadow_model.fingerprint()},
                  {"partition", log.ToJson()},
                  {"vault_hash", HexDigest(data::VaultHash(path))}};
  if (!log.loss_start.empty()) {
    sidecar["ascent_fraction"] = static_cast<double>(ascended) / log.loss_start.size();
  }
  WriteJson(side, sidecar);
  written_now.insert(session_key);
  manifest_.vaults[name] = rel;
  Stage("protect-" + name, Seconds(t0));
  return path;
}

eval::EvalReport Experiment::Attack(const std::vector<data::VaultRecord>& vault,
                                    const std::string& shadow_fingerprint, ReconKind attacker_kind,
                                    const recog::SplitRecognizer& recognizer,
                                    const std::string& grid_name) {
  const auto attacker = Model(Role::kAttacker, attacker_kind);
  const auto& e = Eval();
  eval::EvalReport report;
  report.dataset = config_.dataset.name;
  report.attacker_arch = recon::ReconKindName(attacker_kind);
  if (!vault.empty()) {
    report.protection = vault.front().protection;
    report.defense = DefenseName(report.protection.defense);
    report.shadow_arch = report.protection.shadow_arch;
  }
  const auto rec_attack = eval::RunReconstructionAttack(attacker, vault, e.faces);
  report.samples = rec_attack.samples;
  report.metrics_defined = rec_attack.defined;
  report.ssim = rec_attack.ssim;
  report.psnr = rec_attack.psnr;
  report.psnr_image_mean = rec_attack.psnr_image_mean;
  report.mse = rec_attack.mse;
  if (!vault.empty()) {
    std::map<std::string, int> index;
    for (std::size_t i = 0; i < e.faces.size(); ++i) index[e.faces[i].source_id] = static_cast<int>(i);
    const int cols = std::min<int>(config_.eval.grid_columns, static_cast<int>(vault.size()));
    std::vector<int> rows;
    for (int i = 0; i < cols; ++i) rows.push_back(index.at(vault[static_cast<std::size_t>(i)].source_id));
    std::vector<data::FaceImage> originals;
    for (int r : rows) originals.push_back(e.faces[static_cast<std::size_t>(r)]);
    const std::vector<Tensor> grid = {data::ToBatch(originals), rec_attack.images.Slice(0, cols)};
    eval::WriteImageGrid(out_ / "grids" / (grid_name + ".png"), grid, cols);

    const auto replay = eval::RunReplayAttack(eval::ModelReconstructor(attacker), recognizer,
                                              Threshold(), vault, e.enrollment,
                                              config_.eval.srra_same_source);
    report.srra_total = replay.total;
    report.srra_skipped = replay.skipped;
    report.srra_defined = replay.total > 0;
    report.srra = replay.srra();

    // Pairs are built over the vault's own rows.
    std::vector<std::string> ids;
    for (const auto& r : vault) ids.push_back(r.identity);
    const auto pairs = eval::BalancedPairs(ids, config_.eval.max_pairs_per_class,
                                           config_.StageSeed("pairs"));
    const Tensor side_a = eval::RecordFeatures(vault);
    Tensor side_b = side_a;
    if (config_.eval.protect_one_side) {
      side_b = Tensor(side_a.n(), side_a.shape());
      for (int i = 0; i < side_a.n(); ++i) {
        side_b.SetSample(i, e.raw.sample(index.at(vault[static_cast<std::size_t>(i)].source_id)));
      }
    }
    if (!pairs.empty()) {
      report.acc = eval::PairVerification(recognizer, side_a, side_b, pairs, config_.eval.folds).accuracy;
      report.acc_defined = true;
    }
  }
  report.trace.config_hash = config_.Hash();
  report.trace.recognizer_hash = recognizer.extractor_hash() + ":" + HexDigest(recognizer.tail_state_hash());
  report.trace.attacker_fingerprint = attacker.fingerprint();
  report.trace.shadow_fingerprint = shadow_fingerprint;
  report.CheckInvariants();
  return report;
}

eval::EvalReport Experiment::Evaluate(const fs::path& vault_path, ReconKind attacker) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& rec = Recognizer();
  const auto records = data::VaultLoadAll(vault_path, rec.feature_shape());
  const fs::path side = fs::path(vault_path).replace_extension(".json");
  const std::string shadow_fp =
      fs::exists(side) ? ReadJson(side).value("shadow_fingerprint", "") : std::string();
  const std::string stem = vault_path.stem().string();
  const std::string name = "eval__" + stem + "__" + recon::ReconKindName(attacker);
  auto report = Attack(records, shadow_fp, attacker, rec, name);
  report.trace.vault_hash = HexDigest(data::VaultHash(vault_path));
  WriteReport(name, report.ToJson());
  Stage("evaluate", Seconds(t0));
  spdlog::info("evaluate: {} vs {}: ssim {:.4f} psnr {:.2f} srra {:.4f} acc {:.4f}", stem,
               recon::ReconKindName(attacker), report.ssim, report.psnr, report.srra, report.acc);
  return report;
}

OfflineResult Experiment::OfflineRetrain() {
  const auto& rec = Recognizer();
  const ReconKind shadow = config_.ShadowKind();
  const fs::path none_vault = Protect(Defense::kNone, shadow);
  const fs::path online_vault = Protect(Defense::kAdvFace, shadow);
  const fs::path train_vault = Protect(Defense::kAdvFace, shadow, std::nullopt, true);

  const std::string rel = "models/recognizer_offline.ckpt";
  const fs::path path = out_ / rel;
  const auto train_records = data::VaultLoadAll(train_vault, rec.feature_shape());
  const json key = {{"recognizer", rec.extractor_hash() + ":" + HexDigest(rec.tail_state_hash())},
                    {"vault", HexDigest(data::VaultHash(train_vault))},
                    {"retrain_epochs", config_.recognizer.retrain_epochs},
                    {"retrain_lr", config_.recognizer.retrain_lr},
                    {"seed", config_.seed}};
  OfflineResult result;
  std::optional<recog::SplitRecognizer> offline;
  static thread_local std::set<std::string> trained_now;
  if (fs::exists(path) && (!force_ || trained_now.count(out_.string()))) {
    json meta;
    offline = recog::SplitRecognizer::Load(path, &meta);
    if (meta.value("stage_key", "") != Digest(key)) {
      throw ConfigError(path.string() + " was trained with different settings; use --force");
    }
    result.retrain_loss = meta.value("epoch_loss", std::vector<double>{});
  } else {
    const auto t0 = std::chrono::steady_clock::now();
    recog::RecognizerConfig cfg = config_.recognizer;
    cfg.seed = config_.StageSeed("offline-retrain");
    recog::TrainLog log;
    offline = recog::OfflineRetrainTail(rec, train_records, cfg, cfg.retrain_epochs, &log);
    offline->Save(path, {{"stage_key", Digest(key)}, {"epoch_loss", log.epoch_loss}});
    result.retrain_loss = log.epoch_loss;
    trained_now.insert(out_.string());
    Stage("offline-retrain", Seconds(t0));
  }
  manifest_.checkpoints["recognizer_offline"] = rel;

  const auto none = Evaluate(none_vault, config_.AttackerKind());
  const auto online = Evaluate(online_vault, config_.AttackerKind());
  const auto online_records = data::VaultLoadAll(online_vault, rec.feature_shape());
  const auto after = Attack(online_records, online.trace.shadow_fingerprint,
                            config_.AttackerKind(), *offline, "offline__" + online_vault.stem().string());
  result.acc_unprotected = none.acc;
  result.acc_online = online.acc;
  result.acc_offline = after.acc;
  result.ssim_online = online.ssim;
  result.ssim_offline = after.ssim;
  result.recognizer_before = rec.extractor_hash() + ":" + HexDigest(rec.tail_state_hash());
  result.recognizer_after = offline->extractor_hash() + ":" + HexDigest(offline->tail_state_hash());
  json j = result.ToJson();
  j["report_after"] = after.ToJson();
  WriteReport("offline", j);
  spdlog::info("offline-retrain: acc unprotected {:.4f} online {:.4f} offline {:.4f}",
               result.acc_unprotected, result.acc_online, result.acc_offline);
  return result;
}

namespace {

void WriteTable(const fs::path& path, const std::vector<eval::EvalReport>& reports) {
  eval::WriteCsv(path, reports);
}

}  // namespace

std::vector<eval::EvalReport> Experiment::SweepEpsilon() {
  std::vector<eval::EvalReport> out;
  for (float eps : config_.eval.sweep_epsilons) {
    const fs::path v = Protect(Defense::kAdvFace, config_.ShadowKind(), eps);
    out.push_back(Evaluate(v, config_.AttackerKind()));
  }
  WriteTable(out_ / "tables/sweep_epsilon.csv", out);
  json arr = json::array();
  for (const auto& r : out) arr.push_back(r.ToJson());
  WriteReport("sweep_epsilon", {{"points", arr}});
  return out;
}

eval::TransferGrid Experiment::TransferGrid() {
  std::vector<ReconKind> kinds;
  for (const auto& a : config_.eval.grid_archs) kinds.push_back(recon::ParseReconKind(a));
  auto exists = [&](Role role) {
    return [this, role](ReconKind k) {
      const fs::path p = out_ / "models" /
                         (std::string(recon::RoleName(role)) + "_" + recon::ReconKindName(k) + ".ckpt");
      return fs::exists(p);
    };
  };
  auto grid = eval::RunTransferGrid(
      config_.dataset.name, kinds, kinds, exists(Role::kShadow), exists(Role::kAttacker),
      [this](ReconKind s, ReconKind a) { return Evaluate(Protect(Defense::kAdvFace, s), a); });
  std::vector<eval::EvalReport> rows;
  for (const auto& c : grid.cells) {
    if (c.report) rows.push_back(*c.report);
    else spdlog::warn("transfer-grid: {} x {}: {}", recon::ReconKindName(c.shadow),
                      recon::ReconKindName(c.attacker), c.gap);
  }
  WriteTable(out_ / "tables/transfer_grid.csv", rows);
  WriteReport("transfer_grid", grid.ToJson());
  return grid;
}

Summary Experiment::RunAll() {
  const auto t0 = std::chrono::steady_clock::now();
  Recognizer();
  std::set<ReconKind> kinds = {config_.AttackerKind(), config_.ShadowKind()};
  for (const auto& a : config_.eval.grid_archs) kinds.insert(recon::ParseReconKind(a));
  for (ReconKind k : kinds) {
    TrainAttacker(k);
    TrainShadow(k);
  }
  Summary s;
  s.threshold = Threshold();
  s.clean_acc = ReadJson(out_ / "reports/verification_clean.json").value("accuracy", 0.0);
  for (Defense d : {Defense::kNone, Defense::kAdvFace, Defense::kRandom, Defense::kDp}) {
    s.defenses.push_back(Evaluate(Protect(d), config_.AttackerKind()));
  }
  WriteTable(out_ / "tables/defenses.csv", s.defenses);
  s.offline = OfflineRetrain();
  s.sweep = SweepEpsilon();
  s.grid = TransferGrid();
  WriteReport("summary", s.ToJson());
  Report();
  Stage("run-all", Seconds(t0));
  manifest_.CheckArtifacts(out_);
  return s;
}

fs::path Experiment::Report() {
  std::vector<eval::EvalReport> all;
  for (const auto& [name, rel] : manifest_.reports) {
    if (name.rfind("eval__", 0) != 0) continue;
    all.push_back(eval::EvalReport::FromJson(ReadJson(out_ / rel)));
  }
  const fs::path path = out_ / "tables/all_reports.csv";
  WriteTable(path, all);
  manifest_.CheckArtifacts(out_);
  SaveManifest();
  return path;
}

}  // namespace advface::exp
