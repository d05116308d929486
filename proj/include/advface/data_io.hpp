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

#ifndef ADVFACE_DATA_IO_HPP_
#define ADVFACE_DATA_IO_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "advface/tensor.hpp"

namespace advface::data {

// Aligned RGB face crop. Pixels are stored as three planes (R, G, B), each
// size x size, with every value in [0, 1].
struct FaceImage {
  int size = 0;
  std::vector<float> pixels;
  std::string identity;
  std::string source_id;

  Shape shape() const { return {3, size, size}; }
  float at(int channel, int y, int x) const {
    return pixels[(static_cast<std::size_t>(channel) * size + y) * size + x];
  }
};

// Decoded 8-bit image with interleaved channels (1, 3 or 4).
struct RawImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> bytes;
};

// Reads PNG (any bit depth / colour type) or binary/ASCII PPM/PGM.
RawImage ReadImage(const std::filesystem::path& path);
void WritePng(const std::filesystem::path& path, const RawImage& image);

// Converts to RGB, bilinearly resizes to image_size (half-pixel centres, so
// a size-matching image passes through unchanged) and scales into [0, 1].
FaceImage Preprocess(const RawImage& raw, int image_size,
                     std::string identity = {}, std::string source_id = {});
FaceImage LoadFace(const std::filesystem::path& path, int image_size,
                   std::string identity = {}, std::string source_id = {});
RawImage ToRaw(const FaceImage& image);

Tensor ToBatch(std::span<const FaceImage> images);
FaceImage FromBatch(const Tensor& batch, int index, std::string identity = {},
                    std::string source_id = {});

// ---------------------------------------------------------------- datasets

enum class Split { kAttackerTrain = 0, kShadowTrain, kRecognizerTrain, kEval };
inline constexpr std::array<Split, 4> kAllSplits = {
    Split::kAttackerTrain, Split::kShadowTrain, Split::kRecognizerTrain, Split::kEval};
const char* SplitName(Split split);
Split ParseSplit(const std::string& name);

struct ManifestEntry {
  std::string identity;
  std::string path;  // relative to the manifest root
};

struct DatasetManifest {
  std::filesystem::path root;
  Split split = Split::kEval;
  std::vector<ManifestEntry> entries;

  std::size_t size() const { return entries.size(); }
  std::vector<std::string> Identities() const;
  // Stable digest over split name and entries; recorded with trained models.
  std::string Fingerprint() const;
  nlohmann::json ToJson() const;
  static DatasetManifest FromJson(const nlohmann::json& j);
};

// Identity-level split fractions, in split order.
struct SplitFractions {
  std::array<double, 4> values = {0.4, 0.3, 0.2, 0.1};
};

struct LoadResult {
  std::array<DatasetManifest, 4> manifests;
  std::vector<std::string> warnings;

  const DatasetManifest& at(Split split) const {
    return manifests[static_cast<std::size_t>(split)];
  }
};

// Scans root/<identity>/<images>, shuffles the sorted identity list with the
// seed and hands out identities to splits by the given fractions.
LoadResult LoadDataset(const std::filesystem::path& root,
                       const SplitFractions& fractions, std::uint64_t seed);

// Per-split identity counts for n identities (largest-remainder rounding).
std::array<int, 4> SplitCounts(int identities, const SplitFractions& fractions);

std::vector<FaceImage> LoadFaces(const DatasetManifest& manifest, int image_size);

// ------------------------------------------------------------------- pairs

struct FacePair {
  std::string a;
  std::string b;
  bool same = false;
};

struct PairList {
  std::vector<FacePair> pairs;
};

// TSV: path_a <TAB> path_b <TAB> same(0/1); '#' starts a comment line.
PairList ReadPairs(const std::filesystem::path& path);
void WritePairs(const std::filesystem::path& path, const PairList& pairs);
// Checks that every reference resolves within the given image set and that
// both classes are present.
void ValidatePairs(const PairList& pairs, std::span<const std::string> known_ids);

}  // namespace advface::data

#endif  // ADVFACE_DATA_IO_HPP_
