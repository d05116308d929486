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

#include "advface/util.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdio>

#include "advface/error.hpp"

namespace advface {

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig: return "config_error";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kCorruption: return "corruption_error";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kContract: return "contract_error";
    case ErrorCode::kPrecondition: return "precondition_error";
    case ErrorCode::kTraining: return "training_error";
    case ErrorCode::kNumeric: return "numeric_error";
    case ErrorCode::kParameter: return "parameter_error";
    case ErrorCode::kCalibration: return "calibration_error";
    case ErrorCode::kBuild: return "build_error";
  }
  return "unknown_error";
}

std::uint64_t Fnv1a64(std::span<const std::byte> bytes, std::uint64_t seed) {
  std::uint64_t hash = seed;
  for (std::byte b : bytes) {
    hash ^= static_cast<std::uint64_t>(b);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t Fnv1a64(std::string_view text, std::uint64_t seed) {
  return Fnv1a64(std::as_bytes(std::span(text.data(), text.size())), seed);
}

std::uint64_t HashFloats(std::span<const float> values, std::uint64_t seed) {
  return Fnv1a64(std::as_bytes(values), seed);
}

std::string HexDigest(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(value));
  return buf;
}

std::uint64_t DeriveSeed(std::uint64_t master, std::string_view label) {
  // splitmix64 finalizer over (master, label hash)
  std::uint64_t z = master ^ Fnv1a64(label);
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint32_t Crc32(std::span<const std::byte> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; chunk to stay within range.
  constexpr std::size_t kChunk = 1u << 30;
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const std::size_t len = std::min(kChunk, bytes.size() - offset);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + offset),
                static_cast<uInt>(len));
    offset += len;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace advface
