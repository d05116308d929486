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

#include "advface/data_io.hpp"

#include <png.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "advface/error.hpp"
#include "advface/util.hpp"

namespace advface::data {
namespace fs = std::filesystem;

namespace {

bool IsImageFile(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

// Reads the next whitespace-separated token, skipping '#' comments.
std::string NextToken(std::istream& in) {
  std::string tok;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string discard;
      std::getline(in, discard);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}

RawImage ReadPnm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path.string());
  const std::string magic = NextToken(in);
  if (magic != "P2" && magic != "P3" && magic != "P5" && magic != "P6") {
    throw IoError("undecodable image (bad PNM magic): " + path.string());
  }
  RawImage img;
  try {
    img.width = std::stoi(NextToken(in));
    img.height = std::stoi(NextToken(in));
  } catch (const std::exception&) {
    throw IoError("undecodable image (bad PNM header): " + path.string());
  }
  const int maxval = std::stoi(NextToken(in));
  if (img.width <= 0 || img.height <= 0 || maxval <= 0 || maxval > 65535) {
    throw IoError("undecodable image (bad PNM header): " + path.string());
  }
  img.channels = (magic == "P3" || magic == "P6") ? 3 : 1;
  const std::size_t count = static_cast<std::size_t>(img.width) * img.height * img.channels;
  img.bytes.resize(count);
  const bool binary = magic == "P5" || magic == "P6";
  for (std::size_t i = 0; i < count; ++i) {
    int v = 0;
    if (binary) {
      if (maxval < 256) {
        v = in.get();
      } else {
        const int hi = in.get();
        v = (hi << 8) | in.get();
      }
    } else {
      const std::string tok = NextToken(in);
      v = tok.empty() ? -1 : std::stoi(tok);
    }
    if (v < 0) throw IoError("undecodable image (truncated PNM data): " + path.string());
    img.bytes[i] = static_cast<std::uint8_t>(std::lround(255.0 * v / maxval));
  }
  return img;
}

RawImage ReadPng(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError("undecodable image: " + path.string() + " (" + image.message + ")");
  }
  image.format = PNG_FORMAT_RGB;
  RawImage img;
  img.width = static_cast<int>(image.width);
  img.height = static_cast<int>(image.height);
  img.channels = 3;
  img.bytes.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, img.bytes.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("undecodable image: " + path.string() + " (" + image.message + ")");
  }
  return img;
}

}  // namespace

RawImage ReadImage(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("image not found: " + path.string());
  std::ifstream probe(path, std::ios::binary);
  unsigned char sig[8] = {};
  probe.read(reinterpret_cast<char*>(sig), 8);
  if (probe.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0) return ReadPng(path);
  if (probe.gcount() >= 2 && sig[0] == 'P') return ReadPnm(path);
  throw IoError("undecodable image (unknown format): " + path.string());
}

void WritePng(const fs::path& path, const RawImage& raw) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(raw.width);
  image.height = static_cast<png_uint_32>(raw.height);
  switch (raw.channels) {
    case 1: image.format = PNG_FORMAT_GRAY; break;
    case 3: image.format = PNG_FORMAT_RGB; break;
    case 4: image.format = PNG_FORMAT_RGBA; break;
    default: throw ContractError("WritePng: unsupported channel count");
  }
  if (!png_image_write_to_file(&image, path.c_str(), 0, raw.bytes.data(), 0, nullptr)) {
    throw IoError("cannot write png: " + path.string() + " (" + image.message + ")");
  }
}

FaceImage Preprocess(const RawImage& raw, int image_size, std::string identity,
                     std::string source_id) {
  if (image_size < 1) throw ConfigError("image_size must be positive");
  if (raw.width < 8 || raw.height < 8) {
    throw ContractError("image smaller than 8x8: " + source_id);
  }
  if (raw.channels < 1 || raw.channels > 4 ||
      raw.bytes.size() != static_cast<std::size_t>(raw.width) * raw.height * raw.channels) {
    throw ContractError("malformed raw image buffer: " + source_id);
  }
  // Channel conversion: gray -> replicate, alpha dropped.
  auto sample = [&](int c, int y, int x) -> float {
    const int src_c = raw.channels >= 3 ? c : 0;
    return raw.bytes[(static_cast<std::size_t>(y) * raw.width + x) * raw.channels + src_c];
  };

  FaceImage out;
  out.size = image_size;
  out.identity = std::move(identity);
  out.source_id = std::move(source_id);
  out.pixels.resize(3 * static_cast<std::size_t>(image_size) * image_size);

  const double sy = static_cast<double>(raw.height) / image_size;
  const double sx = static_cast<double>(raw.width) / image_size;
  std::vector<int> x0(image_size), x1(image_size);
  std::vector<float> wx(image_size);
  for (int x = 0; x < image_size; ++x) {
    const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, raw.width - 1.0);
    x0[x] = static_cast<int>(std::floor(fx));
    x1[x] = std::min(x0[x] + 1, raw.width - 1);
    wx[x] = static_cast<float>(fx - x0[x]);
  }
  for (int y = 0; y < image_size; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, raw.height - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, raw.height - 1);
    const float wy = static_cast<float>(fy - y0);
    for (int c = 0; c < 3; ++c) {
      for (int x = 0; x < image_size; ++x) {
        const float a = sample(c, y0, x0[x]), b = sample(c, y0, x1[x]);
        const float d = sample(c, y1, x0[x]), e = sample(c, y1, x1[x]);
        const float top = a + wx[x] * (b - a);
        const float bottom = d + wx[x] * (e - d);
        const float v = top + wy * (bottom - top);
        out.pixels[(static_cast<std::size_t>(c) * image_size + y) * image_size + x] =
            std::clamp(v / 255.0f, 0.0f, 1.0f);
      }
    }
  }
  return out;
}

FaceImage LoadFace(const fs::path& path, int image_size, std::string identity,
                   std::string source_id) {
  if (source_id.empty()) source_id = path.string();
  return Preprocess(ReadImage(path), image_size, std::move(identity), std::move(source_id));
}

RawImage ToRaw(const FaceImage& image) {
  RawImage raw;
  raw.width = raw.height = image.size;
  raw.channels = 3;
  raw.bytes.resize(3 * static_cast<std::size_t>(image.size) * image.size);
  for (int y = 0; y < image.size; ++y) {
    for (int x = 0; x < image.size; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
        raw.bytes[(static_cast<std::size_t>(y) * image.size + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  return raw;
}

Tensor ToBatch(std::span<const FaceImage> images) {
  if (images.empty()) return Tensor();
  const Shape shape = images.front().shape();
  Tensor batch(static_cast<int>(images.size()), shape);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != shape) throw ContractError("mixed image sizes in batch");
    batch.SetSample(static_cast<int>(i), images[i].pixels);
  }
  return batch;
}

FaceImage FromBatch(const Tensor& batch, int index, std::string identity,
                    std::string source_id) {
  if (batch.c() != 3 || batch.h() != batch.w()) {
    throw ContractError("FromBatch: expected square RGB tensor, got " + batch.shape().ToString());
  }
  FaceImage img;
  img.size = batch.h();
  const auto s = batch.sample(index);
  img.pixels.assign(s.begin(), s.end());
  img.identity = std::move(identity);
  img.source_id = std::move(source_id);
  return img;
}

// ----------------------------------------------------------------- datasets

const char* SplitName(Split split) {
  switch (split) {
    case Split::kAttackerTrain: return "attacker_train";
    case Split::kShadowTrain: return "shadow_train";
    case Split::kRecognizerTrain: return "recognizer_train";
    case Split::kEval: return "eval";
  }
  return "?";
}

Split ParseSplit(const std::string& name) {
  for (Split s : kAllSplits) {
    if (name == SplitName(s)) return s;
  }
  throw ConfigError("unknown split '" + name + "'");
}

std::vector<std::string> DatasetManifest::Identities() const {
  std::set<std::string> ids;
  for (const auto& e : entries) ids.insert(e.identity);
  return {ids.begin(), ids.end()};
}

std::string DatasetManifest::Fingerprint() const {
  std::uint64_t h = Fnv1a64(SplitName(split));
  for (const auto& e : entries) {
    h = Fnv1a64(e.identity, h);
    h = Fnv1a64("/", h);
    h = Fnv1a64(e.path, h);
  }
  return HexDigest(h);
}

nlohmann::json DatasetManifest::ToJson() const {
  nlohmann::json entries_json = nlohmann::json::array();
  for (const auto& e : entries) entries_json.push_back({e.identity, e.path});
  return {{"root", root.string()},
          {"split", SplitName(split)},
          {"count", entries.size()},
          {"fingerprint", Fingerprint()},
          {"entries", entries_json}};
}

DatasetManifest DatasetManifest::FromJson(const nlohmann::json& j) {
  DatasetManifest m;
  m.root = j.at("root").get<std::string>();
  m.split = ParseSplit(j.at("split"));
  for (const auto& e : j.at("entries")) {
    m.entries.push_back({e.at(0).get<std::string>(), e.at(1).get<std::string>()});
  }
  if (m.entries.size() != j.value("count", m.entries.size())) {
    throw CorruptionError("manifest count does not match its entries");
  }
  return m;
}

std::array<int, 4> SplitCounts(int identities, const SplitFractions& fractions) {
  std::array<int, 4> counts{};
  std::array<double, 4> rem{};
  int assigned = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    const double exact = fractions.values[k] * identities;
    // Guard against 0.3 * 100 = 29.999...
    counts[k] = static_cast<int>(std::floor(exact + 1e-9));
    rem[k] = exact - counts[k];
    assigned += counts[k];
  }
  std::array<std::size_t, 4> order = {0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t i = 0; assigned < identities; ++i, ++assigned) {
    ++counts[order[i % 4]];
  }
  return counts;
}

LoadResult LoadDataset(const fs::path& root, const SplitFractions& fractions,
                       std::uint64_t seed) {
  if (!fs::is_directory(root)) {
    throw ConfigError("dataset root does not exist or is not a directory: " + root.string());
  }
  double total = 0.0;
  for (double f : fractions.values) {
    if (!(f >= 0.0)) throw ConfigError("split fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw ConfigError("split fractions must sum to 1 (got " + std::to_string(total) + ")");
  }

  LoadResult result;
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());

  std::vector<std::pair<std::string, std::vector<std::string>>> identities;
  for (const auto& dir : dirs) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && IsImageFile(entry.path())) {
        files.push_back(fs::relative(entry.path(), root).generic_string());
      }
    }
    const std::string id = dir.filename().string();
    if (files.empty()) {
      result.warnings.push_back("identity '" + id + "' has no images; skipped");
      spdlog::warn("identity '{}' has no images; skipped", id);
      continue;
    }
    std::sort(files.begin(), files.end());
    identities.emplace_back(id, std::move(files));
  }
  if (identities.size() < 4) {
    throw ConfigError("dataset has " + std::to_string(identities.size()) +
                      " usable identities; at least 4 are needed to form all splits");
  }

  std::vector<std::size_t> order(identities.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto counts = SplitCounts(static_cast<int>(identities.size()), fractions);
  std::size_t next = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    DatasetManifest& m = result.manifests[k];
    m.root = root;
    m.split = kAllSplits[k];
    std::vector<std::size_t> chosen(order.begin() + static_cast<std::ptrdiff_t>(next),
                                    order.begin() + static_cast<std::ptrdiff_t>(next + counts[k]));
    next += counts[k];
    std::sort(chosen.begin(), chosen.end());
    for (std::size_t idx : chosen) {
      for (const auto& f : identities[idx].second) {
        m.entries.push_back({identities[idx].first, f});
      }
    }
  }
  return result;
}

std::vector<FaceImage> LoadFaces(const DatasetManifest& manifest, int image_size) {
  std::vector<FaceImage> faces;
  faces.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    faces.push_back(LoadFace(manifest.root / e.path, image_size, e.identity, e.path));
  }
  return faces;
}

// -------------------------------------------------------------------- pairs

PairList ReadPairs(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pair file: " + path.string());
  PairList list;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string a, b, same;
    if (!std::getline(fields, a, '\t') || !std::getline(fields, b, '\t') ||
        !std::getline(fields, same, '\t')) {
      throw IoError("malformed pair line " + std::to_string(lineno) + " in " + path.string());
    }
    while (!same.empty() && std::isspace(static_cast<unsigned char>(same.back()))) same.pop_back();
    if (same != "0" && same != "1") {
      throw IoError("pair label must be 0 or 1 at line " + std::to_string(lineno));
    }
    list.pairs.push_back({a, b, same == "1"});
  }
  return list;
}

void WritePairs(const fs::path& path, const PairList& pairs) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write pair file: " + path.string());
  out << "# path_a\tpath_b\tsame\n";
  for (const auto& p : pairs.pairs) out << p.a << '\t' << p.b << '\t' << (p.same ? 1 : 0) << '\n';
}

void ValidatePairs(const PairList& pairs, std::span<const std::string> known_ids) {
  const std::set<std::string> known(known_ids.begin(), known_ids.end());
  bool pos = false, neg = false;
  for (const auto& p : pairs.pairs) {
    if (!known.count(p.a) || !known.count(p.b)) {
      throw ContractError("pair references an image outside the eval split: " +
                          (known.count(p.a) ? p.b : p.a));
    }
    (p.same ? pos : neg) = true;
  }
  if (!pos || !neg) {
    throw ContractError("pair list needs at least one positive and one negative pair");
  }
}

}  // namespace advface::data
