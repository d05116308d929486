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

#include "advface/protection_config.hpp"

#include <cmath>

#include "advface/error.hpp"

namespace advface {

const char* DefenseName(Defense d) {
  switch (d) {
    case Defense::kNone: return "none";
    case Defense::kAdvFace: return "advface";
    case Defense::kRandom: return "random";
    case Defense::kDp: return "dp";
  }
  return "?";
}

Defense ParseDefense(const std::string& name) {
  if (name == "none" || name == "unprotected") return Defense::kNone;
  if (name == "advface") return Defense::kAdvFace;
  if (name == "random") return Defense::kRandom;
  if (name == "dp") return Defense::kDp;
  throw ParameterError("unknown defense '" + name + "' (none|advface|random|dp)");
}

const char* BoundModeName(BoundMode m) {
  return m == BoundMode::kBall ? "ball" : "per_step";
}

BoundMode ParseBoundMode(const std::string& name) {
  if (name == "ball") return BoundMode::kBall;
  if (name == "per_step") return BoundMode::kPerStep;
  throw ParameterError("unknown bound mode '" + name + "' (ball|per_step)");
}

void ProtectionConfig::Validate() const {
  if (!(alpha > 0.0f) || !std::isfinite(alpha)) throw ParameterError("alpha must be > 0");
  if (!(epsilon >= 0.0f) || !std::isfinite(epsilon)) throw ParameterError("epsilon must be >= 0");
  if (iterations < 0) throw ParameterError("iterations must be >= 0");
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
  if (random_iterations < 0) throw ParameterError("random iterations must be >= 0");
  if (!(random_bound >= 0.0f)) throw ParameterError("random bound must be >= 0");
  if (!(dp_budget > 0.0f)) throw ParameterError("privacy budget must be > 0");
  if (!(dp_noise_bound >= 0.0f)) throw ParameterError("dp noise bound must be >= 0");
}

nlohmann::json ProtectionConfig::ToJson() const {
  return {{"defense", DefenseName(defense)},
          {"alpha", alpha},
          {"epsilon", epsilon},
          {"iterations", iterations},
          {"norm_order", "inf"},
          {"bound_mode", BoundModeName(bound_mode)},
          {"bn_batch_stats", bn_batch_stats},
          {"batch_size", batch_size},
          {"shadow_arch", shadow_arch},
          {"random_iterations", random_iterations},
          {"random_bound", random_bound},
          {"dp_budget", dp_budget},
          {"dp_noise_bound", dp_noise_bound},
          {"dp_scale", dp_scale()},
          {"seed", seed}};
}

ProtectionConfig ProtectionConfig::FromJson(const nlohmann::json& j) {
  ProtectionConfig c;
  if (j.contains("defense")) c.defense = ParseDefense(j.at("defense"));
  c.alpha = j.value("alpha", c.alpha);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.iterations = j.value("iterations", c.iterations);
  if (j.value("norm_order", std::string("inf")) != "inf") {
    throw ParameterError("only the L-inf norm order is supported");
  }
  if (j.contains("bound_mode")) c.bound_mode = ParseBoundMode(j.at("bound_mode"));
  c.bn_batch_stats = j.value("bn_batch_stats", c.bn_batch_stats);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.shadow_arch = j.value("shadow_arch", c.shadow_arch);
  c.random_iterations = j.value("random_iterations", c.random_iterations);
  c.random_bound = j.value("random_bound", c.random_bound);
  c.dp_budget = j.value("dp_budget", c.dp_budget);
  c.dp_noise_bound = j.value("dp_noise_bound", c.dp_noise_bound);
  c.seed = j.value("seed", c.seed);
  return c;
}

}  // namespace advface
