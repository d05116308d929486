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

#include "advface/vault.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "json.hpp"
#include "advface/error.hpp"
#include "advface/util.hpp"

namespace advface::data {
namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little,
              "vault I/O assumes a little-endian host");

constexpr char kMagic[4] = {'A', 'D', 'V', 'F'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint16_t kDtypeF32 = 1;
constexpr std::uint32_t kMaxString = 1u << 20;

template <typename T>
void Put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void PutString(std::ostream& out, const std::string& s) {
  Put(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T Get(std::istream& in, const fs::path& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CorruptionError("vault truncated: " + path.string());
  return v;
}

std::string GetString(std::istream& in, const fs::path& path) {
  const auto len = Get<std::uint32_t>(in, path);
  if (len > kMaxString) throw CorruptionError("vault string field too long: " + path.string());
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw CorruptionError("vault truncated: " + path.string());
  return s;
}

struct RecordHeader {
  std::string record_id;
  std::string identity;
  Shape shape;
  nlohmann::json meta;
  std::streamoff payload_offset = 0;
};

// Reads one header; returns false at a clean end of file.
bool ReadHeader(std::istream& in, const fs::path& path, RecordHeader& h) {
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() == 0 && in.eof()) return false;
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw CorruptionError("bad record magic in vault: " + path.string());
  }
  const auto version = Get<std::uint16_t>(in, path);
  if (version != kVersion) {
    throw CorruptionError("unsupported vault format version " + std::to_string(version));
  }
  if (Get<std::uint16_t>(in, path) != kDtypeF32) {
    throw CorruptionError("unsupported vault data type in " + path.string());
  }
  const auto rank = Get<std::uint32_t>(in, path);
  if (rank != 3) throw CorruptionError("vault feature rank must be 3");
  h.shape.c = static_cast<int>(Get<std::uint32_t>(in, path));
  h.shape.h = static_cast<int>(Get<std::uint32_t>(in, path));
  h.shape.w = static_cast<int>(Get<std::uint32_t>(in, path));
  h.record_id = GetString(in, path);
  h.identity = GetString(in, path);
  const std::string meta = GetString(in, path);
  try {
    h.meta = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception&) {
    throw CorruptionError("unreadable record metadata in vault: " + path.string());
  }
  h.payload_offset = in.tellg();
  return true;
}

void SkipPayload(std::istream& in, const RecordHeader& h) {
  in.seekg(h.payload_offset + static_cast<std::streamoff>(h.shape.size() * sizeof(float) + 4));
}

VaultRecord ReadBody(std::istream& in, const fs::path& path, const RecordHeader& h) {
  VaultRecord r;
  r.record_id = h.record_id;
  r.identity = h.identity;
  r.shape = h.shape;
  r.feature.resize(h.shape.size());
  in.seekg(h.payload_offset);
  in.read(reinterpret_cast<char*>(r.feature.data()),
          static_cast<std::streamsize>(r.feature.size() * sizeof(float)));
  if (!in) throw CorruptionError("vault payload truncated: " + path.string());
  const auto stored = Get<std::uint32_t>(in, path);
  r.checksum = Crc32(std::as_bytes(std::span(r.feature)));
  if (r.checksum != stored) {
    throw CorruptionError("checksum mismatch for record '" + r.record_id + "' in " +
                          path.string());
  }
  r.protection = ProtectionConfig::FromJson(h.meta.value("protection", nlohmann::json::object()));
  r.extractor_hash = h.meta.value("extractor_hash", "");
  r.source_id = h.meta.value("source_id", "");
  return r;
}

void CheckShape(const VaultRecord& r, const std::optional<Shape>& expected) {
  if (expected && r.shape != *expected) {
    throw ContractError("vault record '" + r.record_id + "' has shape " + r.shape.ToString() +
                        ", extractor publishes " + expected->ToString());
  }
}

}  // namespace

VaultWriter::VaultWriter(const fs::path& path) : path_(path) {
  if (fs::exists(path)) {
    for (auto& id : VaultList(path)) ids_.insert(std::move(id));
  } else if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  out_.open(path, std::ios::binary | std::ios::app);
  if (!out_) throw IoError("cannot open vault for writing: " + path.string());
}

std::string VaultWriter::Append(const VaultRecord& record) {
  if (record.feature.size() != record.shape.size()) {
    throw ContractError("vault record payload does not match its shape");
  }
  for (float v : record.feature) {
    if (!std::isfinite(v)) throw ContractError("vault records must be finite-valued");
  }
  std::string id = record.record_id;
  if (id.empty()) {
    std::size_t n = ids_.size();
    do {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "rec-%08zu", n++);
      id = buf;
    } while (ids_.count(id));
  } else if (ids_.count(id)) {
    throw ContractError("duplicate record id '" + id + "' in vault " + path_.string());
  }
  const nlohmann::json meta = {{"protection", record.protection.ToJson()},
                               {"extractor_hash", record.extractor_hash},
                               {"source_id", record.source_id}};

  out_.write(kMagic, 4);
  Put(out_, kVersion);
  Put(out_, kDtypeF32);
  Put(out_, static_cast<std::uint32_t>(3));
  Put(out_, static_cast<std::uint32_t>(record.shape.c));
  Put(out_, static_cast<std::uint32_t>(record.shape.h));
  Put(out_, static_cast<std::uint32_t>(record.shape.w));
  PutString(out_, id);
  PutString(out_, record.identity);
  PutString(out_, meta.dump());
  const auto payload = std::as_bytes(std::span(record.feature));
  out_.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size()));
  Put(out_, Crc32(payload));
  out_.flush();
  if (!out_) throw IoError("write failed on vault " + path_.string());
  ids_.insert(id);
  return id;
}

std::string VaultStore(const VaultRecord& record, const fs::path& vault) {
  VaultWriter writer(vault);
  return writer.Append(record);
}

VaultRecord VaultLoad(const fs::path& vault, const std::string& record_id,
                      std::optional<Shape> expected_shape) {
  std::ifstream in(vault, std::ios::binary);
  if (!in) throw NotFoundError("vault not found: " + vault.string());
  RecordHeader h;
  while (ReadHeader(in, vault, h)) {
    if (h.record_id == record_id) {
      VaultRecord r = ReadBody(in, vault, h);
      CheckShape(r, expected_shape);
      return r;
    }
    SkipPayload(in, h);
  }
  throw NotFoundError("record '" + record_id + "' not in vault " + vault.string());
}

std::vector<std::string> VaultList(const fs::path& vault) {
  std::ifstream in(vault, std::ios::binary);
  if (!in) throw NotFoundError("vault not found: " + vault.string());
  std::vector<std::string> ids;
  RecordHeader h;
  while (ReadHeader(in, vault, h)) {
    ids.push_back(h.record_id);
    SkipPayload(in, h);
  }
  return ids;
}

std::vector<VaultRecord> VaultLoadAll(const fs::path& vault, std::optional<Shape> expected_shape) {
  std::ifstream in(vault, std::ios::binary);
  if (!in) throw NotFoundError("vault not found: " + vault.string());
  std::vector<VaultRecord> records;
  RecordHeader h;
  while (ReadHeader(in, vault, h)) {
    records.push_back(ReadBody(in, vault, h));
    CheckShape(records.back(), expected_shape);
  }
  return records;
}

std::uint64_t VaultHash(const fs::path& vault) {
  std::ifstream in(vault, std::ios::binary);
  if (!in) throw NotFoundError("vault not found: " + vault.string());
  std::uint64_t h = Fnv1a64(std::string_view{});
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto n = static_cast<std::size_t>(in.gcount());
    h = Fnv1a64(std::as_bytes(std::span(buf.data(), n)), h);
  }
  return h;
}

}  // namespace advface::data
