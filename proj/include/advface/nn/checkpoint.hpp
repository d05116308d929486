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

#ifndef ADVFACE_NN_CHECKPOINT_HPP_
#define ADVFACE_NN_CHECKPOINT_HPP_

#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"
#include "advface/nn/sequential.hpp"

namespace advface::nn {

// Versioned, self-describing model container:
//   "ADVM" | u32 version | u64 header length | JSON header | f32 state... | u32 CRC32
// The JSON header carries free-form metadata plus, per network, its layer
// list and state length. The CRC covers every preceding byte.
struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::map<std::string, Sequential> networks;
};

void SaveCheckpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

}  // namespace advface::nn

#endif  // ADVFACE_NN_CHECKPOINT_HPP_
