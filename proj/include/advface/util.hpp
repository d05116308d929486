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

#ifndef ADVFACE_UTIL_HPP_
#define ADVFACE_UTIL_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace advface {

// 64-bit FNV-1a over raw bytes.
std::uint64_t Fnv1a64(std::span<const std::byte> bytes,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t Fnv1a64(std::string_view text,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t HashFloats(std::span<const float> values,
                         std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string HexDigest(std::uint64_t value);

// Derives an independent stage seed from the master seed and a label, so
// every stage can be rerun on its own and still see the same stream.
std::uint64_t DeriveSeed(std::uint64_t master, std::string_view label);

std::uint32_t Crc32(std::span<const std::byte> bytes);

}  // namespace advface

#endif  // ADVFACE_UTIL_HPP_
