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

// Acceptance runner: checks every criterion and prints one line each.
//
// Criteria 1-4 and the vault half of 10 run in-process. The rest drive the
// `advface` CLI through the shipped recipe twice, in fresh directories, and
// read the reports it writes. --expect-fail N marks a criterion whose
// failure is known and documented; it is still run and reported.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "advface/error.hpp"
#include "advface/metrics.hpp"
#include "advface/protect.hpp"
#include "advface/vault.hpp"
#include "oracles.hpp"

namespace {

namespace fs = std::filesystem;
using namespace advface;
using namespace advface::oracle;
using nlohmann::json;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double Since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- 1 to 4

Outcome GradientCheck() {
  const auto t0 = std::chrono::steady_clock::now();
  nn::Sequential shadow;
  shadow.Emplace<nn::ConvTranspose2d>(4, 3, 3, 1, 0, 0);
  shadow.Emplace<nn::BatchNorm2d>(3);
  shadow.Emplace<nn::Sigmoid>();
  shadow.Init(101);
  FillParams(shadow, -1.0f, 1.0f, 102);
  for (float& v : *shadow.Norms().front()->Buffers()[1]) v = 0.5f;
  const Tensor z = Uniform(2, {4, 3, 3}, -1.0f, 1.0f, 103);
  Tensor target = shadow.Forward(z, nn::Mode::kEval);
  std::mt19937_64 rng(104);
  std::uniform_real_distribution<float> off(0.05f, 0.2f);
  for (float& v : target.values()) v += (rng() & 1 ? 1.0f : -1.0f) * off(rng);

  const Tensor grad = protect::ShadowLossGradient(shadow, z, target);
  const double h = 1e-3;
  std::uniform_int_distribution<std::size_t> pick(0, z.size() - 1);
  double worst = 0.0;
  const int coords = 32;
  for (int k = 0; k < coords; ++k) {
    const std::size_t i = pick(rng);
    Tensor plus = z, minus = z;
    plus.data()[i] += static_cast<float>(h);
    minus.data()[i] -= static_cast<float>(h);
    const double step = static_cast<double>(plus.data()[i]) - minus.data()[i];
    const double numeric =
        (ReferenceLoss(shadow, plus, target) - ReferenceLoss(shadow, minus, target)) / step;
    const double analytic = grad.data()[i];
    worst = std::max(worst, std::abs(numeric - analytic) /
                                std::max({std::abs(numeric), std::abs(analytic), 1e-8}));
  }
  const double secs = Since(t0);
  return {worst <= 1e-3 && secs < 10.0,
          fmt::format("{} coords, max rel err {:.2e} (<= 1e-3), {:.2f}s (< 10s)", coords, worst,
                      secs)};
}

Outcome BoundCheck() {
  const nn::Sequential shadow = TinyShadow(201);
  const auto extract = TinyExtractor(202);
  const Tensor z = Uniform(1200, {4, 3, 3}, 0.0f, 2.0f, 203);
  ProtectionConfig cfg;
  const Tensor base = protect::ShadowFeatures(shadow, extract, z, cfg);
  const Tensor adv = protect::GenerateAdversarial(shadow, extract, z, cfg);
  long violations = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double d = std::abs(static_cast<double>(adv.data()[i]) - base.data()[i]);
    worst = std::max(worst, d);
    violations += d > cfg.epsilon + 1e-6;
  }
  cfg.epsilon = 0.0f;
  const Tensor same = protect::GenerateAdversarial(shadow, extract, z, cfg);
  const bool exact = std::memcmp(same.data(), base.data(), base.size() * sizeof(float)) == 0;
  return {violations == 0 && exact,
          fmt::format("{} features, {} violations, max |d| {:.7f}; eps=0 bit-exact: {}", z.n(),
                      violations, worst, exact ? "yes" : "no")};
}

Outcome LinearOracle() {
  nn::Sequential shadow;
  shadow.Emplace<nn::Conv2d>(2, 3, 1, 1, 0);
  FillParams(shadow, 1.0f, 2.0f, 301);
  shadow.Params()[1]->value.assign(3, 0.0f);
  auto enc = std::make_shared<nn::Sequential>();
  enc->Emplace<nn::Conv2d>(3, 2, 1, 1, 0);
  FillParams(*enc, 1.0f, 2.0f, 302);
  enc->Params()[1]->value.assign(2, 0.0f);
  const protect::FeatureMap extract = [enc](const Tensor& x) {
    return enc->Forward(x, nn::Mode::kEval);
  };
  const Tensor z = Uniform(16, {2, 4, 4}, 0.1f, 1.0f, 303);
  ProtectionConfig cfg;
  const Tensor base = protect::ShadowFeatures(shadow, extract, z, cfg);
  const Tensor adv = protect::GenerateAdversarial(shadow, extract, z, cfg);
  long mismatches = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    mismatches += adv.data()[i] != base.data()[i] + cfg.epsilon;
  }
  return {mismatches == 0, fmt::format("{} elements, {} differ from shadow feature + eps",
                                       z.size(), mismatches)};
}

Outcome MetricOracles() {
  std::mt19937_64 rng(401);
  double e_ssim = 0, e_psnr = 0, e_mse = 0;
  for (int t = 0; t < 50; ++t) {
    const int size = t % 5 == 0 ? 9 : 24 + t % 3 * 8;
    auto [a, b] = t % 2 ? CorrelatedPair(size, rng)
                        : std::make_pair(RandomImage(size, rng), RandomImage(size, rng));
    const double m = RefMse(a, b);
    e_mse = std::max(e_mse, std::abs(eval::Mse(a, b) - m));
    e_psnr = std::max(e_psnr, std::abs(eval::Psnr(a, b) - 10.0 * std::log10(1.0 / m)));
    e_ssim = std::max(e_ssim, std::abs(eval::Ssim(a, b, size) - RefSsim(a, b, size)));
  }
  const auto x = RandomImage(32, rng);
  const bool caps = std::abs(eval::Ssim(x, x, 32) - 1.0) < 1e-12 && eval::Mse(x, x) == 0.0 &&
                    eval::Psnr(x, x) == 100.0;
  return {e_ssim <= 1e-4 && e_psnr <= 1e-6 && e_mse <= 1e-6 && caps,
          fmt::format("50 pairs: ssim err {:.1e}, psnr err {:.1e}, mse err {:.1e}; identity/caps {}",
                      e_ssim, e_psnr, e_mse, caps ? "ok" : "wrong")};
}

Outcome VaultRoundTrip(const fs::path& work) {
  const fs::path v = work / "roundtrip.vault";
  fs::remove(v);
  std::mt19937_64 rng(1001);
  std::normal_distribution<float> n(0.0f, 5.0f);
  std::vector<data::VaultRecord> stored;
  {
    data::VaultWriter w(v);
    for (int i = 0; i < 1000; ++i) {
      data::VaultRecord r;
      r.identity = "id" + std::to_string(i % 37);
      r.shape = {8, 5, 5};
      r.feature.resize(r.shape.size());
      for (auto& x : r.feature) x = n(rng);
      r.extractor_hash = "x";
      r.record_id = w.Append(r);
      stored.push_back(std::move(r));
    }
  }
  const auto back = data::VaultLoadAll(v);
  int exact = 0;
  for (std::size_t i = 0; i < back.size() && i < stored.size(); ++i) {
    exact += back[i].record_id == stored[i].record_id &&
             std::memcmp(back[i].feature.data(), stored[i].feature.data(),
                         stored[i].feature.size() * sizeof(float)) == 0;
  }
  fs::remove(v);
  return {exact == 1000, fmt::format("{}/1000 records bit-exact", exact)};
}

// ---------------------------------------------------------------- recipe

json ReadJson(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot read " + p.string());
  return json::parse(in);
}

struct Run {
  bool ok = false;
  double seconds = 0.0;
  fs::path out;
  std::string error;
};

// Both runs share one dataset path (regenerated each time) so their configs
// hash the same.
Run RunRecipe(const std::string& cli, const std::string& config, const fs::path& dir,
              const fs::path& data) {
  Run r;
  r.out = dir / "run";
  fs::remove_all(dir);
  fs::remove_all(data);
  fs::create_directories(dir);
  const std::string cmd =
      fmt::format("\"{}\" run-all --config \"{}\" --out \"{}\" --set 'dataset.root=\"{}\"' > \"{}\" 2>&1",
                  cli, config, r.out.string(), data.string(), (dir / "log.txt").string());
  std::cout << "# running recipe into " << dir << std::endl;
  const auto t0 = std::chrono::steady_clock::now();
  const int rc = std::system(cmd.c_str());
  r.seconds = Since(t0);
  r.ok = rc == 0;
  if (!r.ok) r.error = fmt::format("run-all exited with {} (see {})", rc, (dir / "log.txt").string());
  return r;
}

const json* Defense(const json& summary, const std::string& name) {
  for (const auto& d : summary.at("defenses")) {
    if (d.at("defense") == name) return &d;
  }
  return nullptr;
}

double Num(const json& j, const char* key) {
  return j.at(key).is_null() ? std::nan("") : j.at(key).get<double>();
}

Outcome DefenseOrdering(const json& s, double seconds) {
  const double none = Num(*Defense(s, "none"), "ssim");
  const double adv = Num(*Defense(s, "advface"), "ssim");
  const double rnd = Num(*Defense(s, "random"), "ssim");
  const double dp = Num(*Defense(s, "dp"), "ssim");
  const bool pass = adv <= 0.6 * none && rnd >= 0.9 * none && dp >= 0.9 * none && seconds < 3600;
  return {pass, fmt::format("SSIM none {:.4f}, advface {:.4f} ({:.2f}x, need <= 0.60), random "
                            "{:.4f} ({:.2f}x), dp {:.4f} ({:.2f}x) (need >= 0.90); recipe {:.1f} min",
                            none, adv, adv / none, rnd, rnd / none, dp, dp / none, seconds / 60)};
}

Outcome SrraCollapse(const json& s) {
  const double none = Num(*Defense(s, "none"), "srra");
  const double adv = Num(*Defense(s, "advface"), "srra");
  const double rnd = Num(*Defense(s, "random"), "srra");
  const double dp = Num(*Defense(s, "dp"), "srra");
  const bool pass = adv <= 0.5 * none && rnd >= 0.8 * none && dp >= 0.8 * none;
  return {pass, fmt::format("SRRA none {:.4f}, advface {:.4f} ({:.2f}x, need <= 0.50), random "
                            "{:.4f} ({:.2f}x), dp {:.4f} ({:.2f}x) (need >= 0.80)",
                            none, adv, adv / none, rnd, rnd / none, dp, dp / none)};
}

Outcome UtilityRetention(const json& s) {
  const auto& o = s.at("offline");
  const double un = o.at("acc_unprotected"), on = o.at("acc_online"), off = o.at("acc_offline");
  const double drop = un - on;
  // With no online drop there is nothing to recover; the same inequality
  // then only asks offline not to fall below online by more than 40% of |drop|.
  const bool pass = on >= un - 0.05 && off >= on + 0.4 * drop;
  return {pass, fmt::format("ACC unprotected {:.4f}, online {:.4f} (drop {:.2f} pts, max 5), offline "
                            "{:.4f} (recovered {:.2f} pts, need >= {:.2f})",
                            un, on, 100 * drop, off, 100 * (off - on), 40 * drop)};
}

Outcome SweepMonotone(const json& s) {
  std::vector<std::pair<double, const json*>> pts;
  for (const auto& p : s.at("sweep")) pts.push_back({p.at("protection").at("epsilon"), &p});
  std::sort(pts.begin(), pts.end(), [](auto& a, auto& b) { return a.first < b.first; });
  int bad = 0;
  std::string curve;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double psnr = Num(*pts[i].second, "psnr"), acc = Num(*pts[i].second, "acc");
    curve += fmt::format("{}{:.2f}:{:.2f}dB/{:.3f}", i ? " " : "", pts[i].first, psnr, acc);
    if (i == 0) continue;
    const double prev_psnr = Num(*pts[i - 1].second, "psnr");
    const double prev_acc = Num(*pts[i - 1].second, "acc");
    bad += psnr > prev_psnr * 1.05;
    bad += acc > prev_acc + 0.01;
  }
  return {pts.size() >= 7 && bad == 0,
          fmt::format("{} points, {} step violations; eps:PSNR/ACC {}", pts.size(), bad, curve)};
}

Outcome Transfer(const json& s) {
  const auto& t = s.at("transfer");
  int present = 0;
  std::map<std::pair<std::string, std::string>, double> ssim;
  for (const auto& c : t.at("cells")) {
    if (c.contains("report") && !c.at("report").is_null()) {
      ++present;
      ssim[{c.at("shadow"), c.at("attacker")}] = Num(c.at("report"), "ssim");
    }
  }
  double worst = 0.0;
  std::string where;
  for (const auto& [key, v] : ssim) {
    if (key.first == key.second) continue;
    const auto diag = ssim.find({key.first, key.first});
    if (diag == ssim.end()) continue;
    const double dev = std::abs(v - diag->second);
    if (dev > worst) {
      worst = dev;
      where = key.first + "->" + key.second;
    }
  }
  return {present == 9 && worst <= 0.15,
          fmt::format("{}/9 cells, max |cell - same-shadow diagonal| {:.4f} at {} (<= 0.15)", present,
                      worst, where)};
}

// Walks two report trees; numbers must agree to 4 decimals, everything else exactly.
void Compare(const json& a, const json& b, const std::string& path, std::vector<std::string>& diffs,
             long& values) {
  if (a.is_number() && b.is_number()) {
    ++values;
    if (std::llround(a.get<double>() * 1e4) != std::llround(b.get<double>() * 1e4)) {
      diffs.push_back(fmt::format("{}: {} vs {}", path, a.dump(), b.dump()));
    }
  } else if (a.is_object() && b.is_object()) {
    for (const auto& [k, v] : a.items()) {
      if (!b.contains(k)) diffs.push_back(path + "." + k + ": missing");
      else Compare(v, b.at(k), path + "." + k, diffs, values);
    }
    for (const auto& [k, v] : b.items()) {
      if (!a.contains(k)) diffs.push_back(path + "." + k + ": extra");
    }
  } else if (a.is_array() && b.is_array() && a.size() == b.size()) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      Compare(a[i], b[i], path + "[" + std::to_string(i) + "]", diffs, values);
    }
  } else if (a != b) {
    ++values;
    diffs.push_back(fmt::format("{}: {} vs {}", path, a.dump(), b.dump()));
  } else {
    ++values;
  }
}

Outcome Rerun(const Run& a, const Run& b) {
  if (!b.ok) return {false, b.error};
  std::vector<std::string> diffs;
  long values = 0;
  int files = 0;
  for (const auto& entry : fs::directory_iterator(a.out / "reports")) {
    const fs::path other = b.out / "reports" / entry.path().filename();
    ++files;
    if (!fs::exists(other)) {
      diffs.push_back(entry.path().filename().string() + ": missing in rerun");
      continue;
    }
    Compare(ReadJson(entry.path()), ReadJson(other), entry.path().filename().string(), diffs,
            values);
  }
  return {diffs.empty() && files > 0,
          fmt::format("{} reports, {} values compared, {} differ{}", files, values, diffs.size(),
                      diffs.empty() ? "" : " (first: " + diffs.front() + ")")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria runner"};
  std::string cli, config, work = "acceptance";
  std::vector<int> expect_fail;
  bool quick = false;
  app.add_option("--cli", cli, "path to the advface binary");
  app.add_option("--config", config, "recipe config")->required();
  app.add_option("--work", work, "scratch directory for the recipe runs");
  app.add_option("--expect-fail", expect_fail, "criteria known to fail (documented)");
  app.add_flag("--quick", quick, "skip the recipe runs (criteria 5-9 and the rerun in 10)");
  CLI11_PARSE(app, argc, argv);
  const std::set<int> known(expect_fail.begin(), expect_fail.end());
  const fs::path root = fs::absolute(work);
  fs::create_directories(root);
  if (!quick && cli.empty()) {
    std::cerr << "--cli is required unless --quick\n";
    return 2;
  }

  std::map<int, Outcome> results;
  auto guard = [&](int id, const std::function<Outcome()>& f) {
    try {
      results[id] = f();
    } catch (const std::exception& e) {
      results[id] = {false, std::string("exception: ") + e.what()};
    }
  };
  guard(1, GradientCheck);
  guard(2, BoundCheck);
  guard(3, LinearOracle);
  guard(4, MetricOracles);
  Outcome vault;
  guard(10, [&] { return VaultRoundTrip(root); });
  vault = results[10];

  if (!quick) {
    const Run a = RunRecipe(cli, fs::absolute(config).string(), root / "run_a", root / "data");
    json summary;
    std::string failure = a.error;
    if (a.ok) {
      try {
        summary = ReadJson(a.out / "reports/summary.json");
      } catch (const std::exception& e) {
        failure = e.what();
      }
    }
    for (int id = 5; id <= 9; ++id) {
      if (!failure.empty()) {
        results[id] = {false, failure};
        continue;
      }
      guard(id, [&]() -> Outcome {
        switch (id) {
          case 5: return DefenseOrdering(summary, a.seconds);
          case 6: return SrraCollapse(summary);
          case 7: return UtilityRetention(summary);
          case 8: return SweepMonotone(summary);
          default: return Transfer(summary);
        }
      });
    }
    Outcome rerun{false, failure};
    if (failure.empty()) {
      const Run b = RunRecipe(cli, fs::absolute(config).string(), root / "run_b", root / "data");
      guard(10, [&] { return Rerun(a, b); });
      rerun = results[10];
    }
    results[10] = {vault.pass && rerun.pass, vault.detail + "; rerun: " + rerun.detail};
  } else {
    for (int id = 5; id <= 9; ++id) results[id] = {false, "skipped (--quick)"};
    results[10].detail += "; rerun skipped (--quick)";
  }

  int unexpected = 0;
  for (const auto& [id, r] : results) {
    const bool skipped = quick && id >= 5;
    std::string status;
    if (skipped) {
      status = "SKIP";
    } else if (r.pass) {
      status = known.count(id) ? "PASS (unexpected)" : "PASS";
    } else if (known.count(id)) {
      status = "FAIL (expected)";
    } else {
      status = "FAIL";
      ++unexpected;
    }
    std::cout << fmt::format("criterion {:>2}: {:<17} {}", id, status, r.detail) << std::endl;
  }
  return unexpected == 0 ? 0 : 1;
}
