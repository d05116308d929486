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

#ifndef ADVFACE_VAULT_HPP_
#define ADVFACE_VAULT_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "advface/protection_config.hpp"
#include "advface/tensor.hpp"

namespace advface::data {

// One stored feature. The server keeps only these rows.
struct VaultRecord {
  std::string record_id;
  std::string identity;
  Shape shape;
  std::vector<float> feature;
  ProtectionConfig protection;
  std::string extractor_hash;
  std::string source_id;
  std::uint32_t checksum = 0;  // CRC32 of the payload bytes, filled on store/load
};

// Binary vault file: a sequence of records, each laid out as
//   "ADVF" | u16 version | u16 dtype (1 = f32 LE) | u32 rank | u32 dims[rank]
//   | u32 id_len | id | u32 identity_len | identity | u32 meta_len | JSON meta
//   | payload (f32 LE) | u32 CRC32(payload)
// Writers need exclusive access to a vault file; readers may run concurrently.
class VaultWriter {
 public:
  // Opens for append, indexing existing record ids.
  explicit VaultWriter(const std::filesystem::path& path);
  // Empty record_id gets a generated one. Returns the stored id.
  std::string Append(const VaultRecord& record);

 private:
  std::filesystem::path path_;
  std::set<std::string> ids_;
  std::ofstream out_;
};

std::string VaultStore(const VaultRecord& record, const std::filesystem::path& vault);
// Throws NotFoundError / CorruptionError. When expected_shape is given, a
// shape mismatch is a ContractError.
VaultRecord VaultLoad(const std::filesystem::path& vault, const std::string& record_id,
                      std::optional<Shape> expected_shape = std::nullopt);
std::vector<std::string> VaultList(const std::filesystem::path& vault);
std::vector<VaultRecord> VaultLoadAll(const std::filesystem::path& vault,
                                      std::optional<Shape> expected_shape = std::nullopt);
std::uint64_t VaultHash(const std::filesystem::path& vault);

}  // namespace advface::data

#endif  // ADVFACE_VAULT_HPP_
