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

#ifndef ADVFACE_PROTECTION_CONFIG_HPP_
#define ADVFACE_PROTECTION_CONFIG_HPP_

#include <cstdint>
#include <string>

#include "json.hpp"

namespace advface {

enum class Defense { kNone, kAdvFace, kRandom, kDp };

// How the noise bound constrains the iterates.
//   kBall:    every iterate is projected onto the L-inf ball of radius
//             epsilon around the shadow feature.
//   kPerStep: each individual step is clipped to magnitude epsilon; the
//             accumulated drift is unbounded.
enum class BoundMode { kBall, kPerStep };

enum class NormOrder { kInf };

struct ProtectionConfig {
  Defense defense = Defense::kAdvFace;

  // AdvFace
  float alpha = 0.2f;
  float epsilon = 0.2f;
  int iterations = 40;
  NormOrder norm_order = NormOrder::kInf;
  BoundMode bound_mode = BoundMode::kBall;
  bool bn_batch_stats = true;
  int batch_size = 32;
  std::string shadow_arch;  // provenance only

  // Random perturbation baseline
  int random_iterations = 40;
  float random_bound = 0.2f;

  // Laplace baseline: scale = dp_noise_bound / dp_budget
  float dp_budget = 1.0f;
  float dp_noise_bound = 0.2f;

  std::uint64_t seed = 0;

  // Throws ParameterError on the first violated constraint.
  void Validate() const;
  float dp_scale() const { return dp_noise_bound / dp_budget; }

  nlohmann::json ToJson() const;
  static ProtectionConfig FromJson(const nlohmann::json& j);
};

const char* DefenseName(Defense d);
Defense ParseDefense(const std::string& name);
const char* BoundModeName(BoundMode m);
BoundMode ParseBoundMode(const std::string& name);

}  // namespace advface

#endif  // ADVFACE_PROTECTION_CONFIG_HPP_
