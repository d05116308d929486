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

// Procedural face crops for offline runs: each identity fixes skin, head
// shape, hair and facial layout; each image varies pose, lighting,
// expression, background and sensor noise.

#ifndef ADVFACE_SYNTH_FACES_HPP_
#define ADVFACE_SYNTH_FACES_HPP_

#include <cstdint>
#include <filesystem>

#include "advface/data_io.hpp"

namespace advface::data {

struct SynthOptions {
  int identities = 100;
  int images_per_identity = 20;
  int size = 80;
  std::uint64_t seed = 7;
};

RawImage RenderSyntheticFace(int identity, int image, const SynthOptions& options);

// Writes root/id_XXXX/img_XX.png; existing files are overwritten.
void WriteSyntheticDataset(const std::filesystem::path& root, const SynthOptions& options);

}  // namespace advface::data

#endif  // ADVFACE_SYNTH_FACES_HPP_
