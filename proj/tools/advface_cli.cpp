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

// advface: command-line driver for the desk-scale experiments.
//
// Settings precedence, lowest first: built-in defaults, --config file,
// --set section.key=value overrides (in order), then the dedicated flags
// (--seed, --out, and the protect flags).

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "advface/error.hpp"
#include "advface/experiment.hpp"

namespace {

namespace fs = std::filesystem;
using advface::exp::Experiment;
using advface::exp::ExperimentConfig;
using nlohmann::json;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
  std::vector<std::string> overrides;
  std::string log_level = "info";
};

struct ProtectFlags {
  std::string defense = "advface";
  std::string shadow_arch;
  std::optional<float> epsilon;
  std::optional<float> alpha;
  std::optional<int> iterations;
  std::optional<bool> bn_batch_stats;
  std::string split = "eval";
};

void AddCommon(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file");
  cmd->add_option("--seed", c.seed, "master seed");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_flag("--force", c.force, "retrain / rewrite even when artifacts exist");
  cmd->add_option("--set", c.overrides, "override a config value, e.g. recon.epochs=5");
  cmd->add_option("--log-level", c.log_level, "trace|debug|info|warn|error|off");
}

json BuildConfigJson(const Common& c) {
  json j = c.config.empty() ? ExperimentConfig{}.ToJson()
                            : advface::exp::LoadConfig(c.config).ToJson();
  for (const auto& o : c.overrides) advface::exp::ApplyOverride(j, o);
  if (c.seed) j["seed"] = *c.seed;
  if (!c.out.empty()) j["out_dir"] = c.out;
  return j;
}

int ExitCodeFor(advface::ErrorCode code) { return 2 + static_cast<int>(code); }

void PrintError(const std::string& verb, const std::string& code, const std::string& message,
                const json& extra = json::object()) {
  json record = {{"status", "error"}, {"verb", verb}, {"error", code}, {"message", message}};
  record.update(extra);
  std::cerr << record.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AdvFace desk-scale experiment driver"};
  app.require_subcommand(1);
  Common common;
  ProtectFlags pf;
  std::string arch;
  std::string vault;
  std::string attacker;

  auto* synth = app.add_subcommand("synth-faces", "render the synthetic face dataset");
  auto* train_rec = app.add_subcommand("train-recognizer", "train the split recognizer");
  auto* train_att = app.add_subcommand("train-attacker", "train a reconstruction attacker");
  auto* train_sh = app.add_subcommand("train-shadow", "train a defender shadow model");
  auto* protect = app.add_subcommand("protect", "write a protected feature vault");
  auto* evaluate = app.add_subcommand("evaluate", "attack one vault and report metrics");
  auto* offline = app.add_subcommand("offline-retrain", "retrain the server tail on protected features");
  auto* report = app.add_subcommand("report", "collect every report into tables");
  auto* sweep = app.add_subcommand("sweep-epsilon", "protect and attack over the epsilon grid");
  auto* grid = app.add_subcommand("transfer-grid", "shadow x attacker architecture grid");
  auto* run_all = app.add_subcommand("run-all", "full recipe: every stage in order");
  for (auto* cmd : {synth, train_rec, train_att, train_sh, protect, evaluate, offline, report, sweep,
                    grid, run_all}) {
    AddCommon(cmd, common);
  }
  train_att->add_option("--arch", arch, "transrec|resrec|urec")->required();
  train_sh->add_option("--arch", arch, "transrec|resrec|urec")->required();
  protect->add_option("--defense", pf.defense, "advface|random|dp|none")->required();
  protect->add_option("--shadow-arch", pf.shadow_arch, "shadow architecture");
  protect->add_option("--epsilon", pf.epsilon, "perturbation bound");
  protect->add_option("--alpha", pf.alpha, "step size");
  protect->add_option("--iterations", pf.iterations, "ascent iterations");
  protect->add_option("--bn-batch-stats", pf.bn_batch_stats, "true|false");
  protect->add_option("--split", pf.split, "eval|train")->check(CLI::IsMember({"eval", "train"}));
  evaluate->add_option("--vault", vault, "vault file, or a vault name inside <out>/vaults")
      ->required();
  evaluate->add_option("--attacker", attacker, "attacker architecture (default from config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    PrintError("", "usage", e.what());
    return 1;
  }

  const auto* sub = app.get_subcommands().front();
  const std::string verb = sub->get_name();
  try {
    spdlog::set_level(spdlog::level::from_str(common.log_level));
    json cj = BuildConfigJson(common);
    if (sub == protect) {
      if (!pf.shadow_arch.empty()) cj["protection"]["shadow_arch"] = pf.shadow_arch;
      if (pf.epsilon) cj["protection"]["epsilon"] = *pf.epsilon;
      if (pf.alpha) cj["protection"]["alpha"] = *pf.alpha;
      if (pf.iterations) cj["protection"]["iterations"] = *pf.iterations;
      if (pf.bn_batch_stats) cj["protection"]["bn_batch_stats"] = *pf.bn_batch_stats;
    }
    ExperimentConfig cfg = ExperimentConfig::FromJson(cj);
    Experiment ex(cfg, common.force);
    json result = {{"status", "ok"}, {"verb", verb}, {"out", ex.out().string()}};

    if (sub == synth) {
      result["dataset"] = ex.SynthFaces().string();
    } else if (sub == train_rec) {
      result["checkpoint"] = ex.TrainRecognizer().string();
    } else if (sub == train_att) {
      result["checkpoint"] = ex.TrainAttacker(advface::recon::ParseReconKind(arch)).string();
    } else if (sub == train_sh) {
      result["checkpoint"] = ex.TrainShadow(advface::recon::ParseReconKind(arch)).string();
    } else if (sub == protect) {
      const auto path = ex.Protect(advface::ParseDefense(pf.defense), cfg.ShadowKind(),
                                   std::nullopt, pf.split == "train");
      result["vault"] = path.string();
    } else if (sub == evaluate) {
      fs::path vp = vault;
      if (!fs::exists(vp)) vp = ex.out() / "vaults" / (vault + ".vault");
      if (!fs::exists(vp)) throw advface::NotFoundError("vault not found: " + vault);
      const auto kind =
          attacker.empty() ? cfg.AttackerKind() : advface::recon::ParseReconKind(attacker);
      result["report"] = ex.Evaluate(vp, kind).ToJson();
    } else if (sub == offline) {
      result["offline"] = ex.OfflineRetrain().ToJson();
    } else if (sub == report) {
      result["table"] = ex.Report().string();
    } else if (sub == sweep) {
      json arr = json::array();
      for (const auto& r : ex.SweepEpsilon()) arr.push_back(r.ToJson());
      result["sweep"] = arr;
    } else if (sub == grid) {
      result["transfer"] = ex.TransferGrid().ToJson();
    } else if (sub == run_all) {
      result["summary"] = (ex.out() / "reports/summary.json").string();
      ex.RunAll();
    }
    std::cout << result.dump(2) << std::endl;
    return 0;
  } catch (const advface::NumericError& e) {
    PrintError(verb, advface::ErrorCodeName(e.code()), e.what(), {{"iteration", e.iteration()}});
    return ExitCodeFor(e.code());
  } catch (const advface::TrainingError& e) {
    PrintError(verb, advface::ErrorCodeName(e.code()), e.what(), {{"epoch", e.epoch()}});
    return ExitCodeFor(e.code());
  } catch (const advface::Error& e) {
    PrintError(verb, advface::ErrorCodeName(e.code()), e.what());
    return ExitCodeFor(e.code());
  } catch (const std::exception& e) {
    PrintError(verb, "internal", e.what());
    return 1;
  }
}
