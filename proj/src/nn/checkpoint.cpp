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

#include "advface/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "advface/error.hpp"
#include "advface/util.hpp"

namespace advface::nn {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'A', 'D', 'V', 'M'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void Append(std::vector<std::byte>& out, const T& value) {
  const auto* p = reinterpret_cast<const std::byte*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T Read(const std::vector<std::byte>& in, std::size_t& offset) {
  if (offset + sizeof(T) > in.size()) throw CorruptionError("checkpoint truncated");
  T value;
  std::memcpy(&value, in.data() + offset, sizeof(T));
  offset += sizeof(T);
  return value;
}

}  // namespace

void SaveCheckpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  nlohmann::json header;
  header["metadata"] = checkpoint.metadata;
  header["networks"] = nlohmann::json::array();
  std::vector<std::vector<float>> states;
  for (const auto& [name, net] : checkpoint.networks) {
    states.push_back(net.StateVector());
    header["networks"].push_back(
        {{"name", name}, {"layers", net.Spec()}, {"state_size", states.back().size()}});
  }
  const std::string text = header.dump();

  std::vector<std::byte> buf;
  buf.insert(buf.end(), reinterpret_cast<const std::byte*>(kMagic),
             reinterpret_cast<const std::byte*>(kMagic) + 4);
  Append(buf, kVersion);
  Append(buf, static_cast<std::uint64_t>(text.size()));
  buf.insert(buf.end(), reinterpret_cast<const std::byte*>(text.data()),
             reinterpret_cast<const std::byte*>(text.data()) + text.size());
  for (const auto& s : states) {
    const auto bytes = std::as_bytes(std::span(s));
    buf.insert(buf.end(), bytes.begin(), bytes.end());
  }
  Append(buf, Crc32(buf));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + path.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write on checkpoint: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> buf(raw.size());
  std::memcpy(buf.data(), raw.data(), raw.size());

  if (buf.size() < 4 + 4 + 8 + 4 || std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw CorruptionError("not a model checkpoint: " + path.string());
  }
  std::size_t tail = buf.size() - 4;
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, buf.data() + tail, 4);
  if (Crc32(std::span(buf.data(), tail)) != stored_crc) {
    throw CorruptionError("checkpoint checksum mismatch: " + path.string());
  }
  std::size_t offset = 4;
  const auto version = Read<std::uint32_t>(buf, offset);
  if (version != kVersion) {
    throw CorruptionError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = Read<std::uint64_t>(buf, offset);
  if (offset + header_len > tail) throw CorruptionError("checkpoint header truncated");
  const auto header = nlohmann::json::parse(
      std::string(reinterpret_cast<const char*>(buf.data() + offset), header_len));
  offset += header_len;

  Checkpoint ckpt;
  ckpt.metadata = header.at("metadata");
  for (const auto& entry : header.at("networks")) {
    Sequential net = Sequential::FromSpec(entry.at("layers"));
    const std::size_t n = entry.at("state_size").get<std::size_t>();
    if (offset + n * sizeof(float) > tail) throw CorruptionError("checkpoint state truncated");
    std::vector<float> state(n);
    std::memcpy(state.data(), buf.data() + offset, n * sizeof(float));
    offset += n * sizeof(float);
    net.LoadStateVector(state);
    ckpt.networks.emplace(entry.at("name").get<std::string>(), std::move(net));
  }
  return ckpt;
}

}  // namespace advface::nn
