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

#include "advface/synth_faces.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <vector>

#include "advface/error.hpp"
#include "advface/util.hpp"

namespace advface::data {
namespace {

using Rgb = std::array<float, 3>;

struct Identity {
  Rgb skin, hair, iris, lips;
  float face_rx, face_ry, jaw;
  float hair_top, hair_side;
  bool long_hair, bald, glasses, beard;
  float eye_dx, eye_y, eye_r;
  float brow_gap, brow_thick, brow_tilt;
  float nose_len, nose_w;
  float mouth_w, mouth_y, lip_thick;
  float ear_size;
  std::uint64_t texture_seed;
};

struct Nuisance {
  float dx, dy, scale, angle;
  float light, light_side;
  float smile, mouth_open, eye_open;
  Rgb bg_top, bg_bottom;
  struct Blob {
    float cx, cy, rx, ry;
    bool box;
    Rgb colour;
  };
  std::vector<Blob> clutter;
  std::uint64_t bg_seed;
  Rgb shirt;
  float noise;
};

float U(std::mt19937_64& rng, float lo, float hi) {
  return std::uniform_real_distribution<float>(lo, hi)(rng);
}

Identity MakeIdentity(std::mt19937_64& rng) {
  Identity id;
  const float tone = U(rng, 0.3f, 0.95f);
  id.skin = {tone, tone * U(rng, 0.72f, 0.85f), tone * U(rng, 0.55f, 0.7f)};
  static constexpr std::array<Rgb, 6> kHair = {{{0.08f, 0.06f, 0.05f},
                                                {0.35f, 0.2f, 0.1f},
                                                {0.85f, 0.7f, 0.4f},
                                                {0.6f, 0.25f, 0.1f},
                                                {0.7f, 0.7f, 0.7f},
                                                {0.2f, 0.15f, 0.12f}}};
  id.hair = kHair[std::uniform_int_distribution<int>(0, 5)(rng)];
  static constexpr std::array<Rgb, 4> kIris = {{{0.3f, 0.2f, 0.1f},
                                                {0.2f, 0.4f, 0.7f},
                                                {0.3f, 0.5f, 0.3f},
                                                {0.1f, 0.1f, 0.1f}}};
  id.iris = kIris[std::uniform_int_distribution<int>(0, 3)(rng)];
  id.lips = {U(rng, 0.55f, 0.85f), U(rng, 0.2f, 0.4f), U(rng, 0.25f, 0.4f)};
  id.face_rx = U(rng, 0.46f, 0.6f);
  id.face_ry = U(rng, 0.6f, 0.76f);
  id.jaw = U(rng, 0.0f, 0.35f);
  id.hair_top = U(rng, 0.05f, 0.3f);
  id.hair_side = U(rng, 0.0f, 0.12f);
  id.long_hair = U(rng, 0, 1) < 0.35f;
  id.bald = U(rng, 0, 1) < 0.1f;
  id.glasses = U(rng, 0, 1) < 0.25f;
  id.beard = U(rng, 0, 1) < 0.2f;
  id.eye_dx = U(rng, 0.17f, 0.27f);
  id.eye_y = U(rng, -0.16f, -0.02f);
  id.eye_r = U(rng, 0.055f, 0.09f);
  id.brow_gap = U(rng, 0.08f, 0.16f);
  id.brow_thick = U(rng, 0.02f, 0.05f);
  id.brow_tilt = U(rng, -0.25f, 0.25f);
  id.nose_len = U(rng, 0.15f, 0.28f);
  id.nose_w = U(rng, 0.05f, 0.11f);
  id.mouth_w = U(rng, 0.16f, 0.3f);
  id.mouth_y = U(rng, 0.3f, 0.44f);
  id.lip_thick = U(rng, 0.025f, 0.05f);
  id.ear_size = U(rng, 0.07f, 0.13f);
  id.texture_seed = rng();
  return id;
}

Nuisance MakeNuisance(std::mt19937_64& rng) {
  Nuisance n;
  n.dx = U(rng, -0.07f, 0.07f);
  n.dy = U(rng, -0.07f, 0.07f);
  n.scale = U(rng, 0.9f, 1.08f);
  n.angle = U(rng, -0.14f, 0.14f);
  n.light = U(rng, 0.8f, 1.15f);
  n.light_side = U(rng, -0.25f, 0.25f);
  n.smile = U(rng, -0.04f, 0.08f);
  n.mouth_open = U(rng, 0.0f, 1.0f) < 0.3f ? U(rng, 0.01f, 0.04f) : 0.0f;
  n.eye_open = U(rng, 0.6f, 1.0f);
  n.bg_top = {U(rng, 0.1f, 0.9f), U(rng, 0.1f, 0.9f), U(rng, 0.1f, 0.9f)};
  for (int c = 0; c < 3; ++c) n.bg_bottom[c] = std::clamp(n.bg_top[c] + U(rng, -0.3f, 0.3f), 0.0f, 1.0f);
  const int blobs = std::uniform_int_distribution<int>(2, 6)(rng);
  for (int i = 0; i < blobs; ++i) {
    n.clutter.push_back({U(rng, -1.4f, 1.4f), U(rng, -1.4f, 1.0f), U(rng, 0.1f, 0.6f),
                         U(rng, 0.1f, 0.6f), U(rng, 0, 1) < 0.5f,
                         {U(rng, 0.05f, 0.95f), U(rng, 0.05f, 0.95f), U(rng, 0.05f, 0.95f)}});
  }
  n.bg_seed = rng();
  n.shirt = {U(rng, 0.05f, 0.9f), U(rng, 0.05f, 0.9f), U(rng, 0.05f, 0.9f)};
  n.noise = U(rng, 0.005f, 0.025f);
  return n;
}

float Ellipse(float u, float v, float cx, float cy, float rx, float ry) {
  const float a = (u - cx) / rx, b = (v - cy) / ry;
  return a * a + b * b;
}

Rgb Mix(const Rgb& a, const Rgb& b, float t) {
  return {a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])};
}

// Smooth lattice noise in [-1, 1].
float ValueNoise(float u, float v, std::uint64_t seed) {
  const float fu = std::floor(u), fv = std::floor(v);
  const auto ix = static_cast<std::int64_t>(fu), iy = static_cast<std::int64_t>(fv);
  auto corner = [&](std::int64_t a, std::int64_t b) {
    std::uint64_t h = seed ^ (static_cast<std::uint64_t>(a) * 0x9E3779B97F4A7C15ULL) ^
                      (static_cast<std::uint64_t>(b) * 0xC2B2AE3D27D4EB4FULL);
    h ^= h >> 31;
    h *= 0xBF58476D1CE4E5B9ULL;
    h ^= h >> 29;
    return static_cast<float>(h >> 40) / static_cast<float>(1 << 24) * 2.0f - 1.0f;
  };
  float tu = u - fu, tv = v - fv;
  tu = tu * tu * (3 - 2 * tu);
  tv = tv * tv * (3 - 2 * tv);
  const float top = corner(ix, iy) + tu * (corner(ix + 1, iy) - corner(ix, iy));
  const float bottom = corner(ix, iy + 1) + tu * (corner(ix + 1, iy + 1) - corner(ix, iy + 1));
  return top + tv * (bottom - top);
}

Rgb Scale(Rgb c, float k) {
  for (float& ch : c) ch *= k;
  return c;
}

// Colour at face coordinates (u, v), both roughly in [-1, 1], y pointing down.
Rgb Shade(const Identity& id, const Nuisance& n, float u, float v) {
  Rgb c = Mix(n.bg_top, n.bg_bottom, std::clamp((v + 1.0f) / 2.0f, 0.0f, 1.0f));
  for (const auto& b : n.clutter) {
    const bool hit = b.box ? std::abs(u - b.cx) < b.rx && std::abs(v - b.cy) < b.ry
                           : Ellipse(u, v, b.cx, b.cy, b.rx, b.ry) <= 1.0f;
    if (hit) c = Mix(c, b.colour, 0.7f);
  }
  c = Scale(c, 1.0f + 0.12f * ValueNoise(u * 3.0f, v * 3.0f, n.bg_seed) +
                   0.06f * ValueNoise(u * 9.0f, v * 9.0f, n.bg_seed + 1));
  const float top = -id.face_ry;
  const float grain = ValueNoise(u * 14.0f, v * 14.0f, id.texture_seed);
  const float strands = std::sin(70.0f * u + 8.0f * ValueNoise(u * 4.0f, v * 4.0f, id.texture_seed + 2));
  const Rgb hair = Scale(id.hair, 1.0f + 0.18f * strands);

  // hair behind the head
  if (!id.bald && id.long_hair &&
      Ellipse(u, v, 0.0f, 0.05f, id.face_rx + 0.14f, id.face_ry + 0.2f) <= 1.0f && v > top) {
    c = hair;
  }
  // neck
  if (std::abs(u) < id.face_rx * 0.45f && v > 0.3f) c = Mix(id.skin, Rgb{0, 0, 0}, 0.15f);
  // shoulders and shirt
  const float shoulder = 0.62f + 0.35f * u * u;
  if (v > shoulder + 0.12f && std::abs(u) < 1.25f) {
    c = Scale(n.shirt, 0.85f + 0.15f * ValueNoise(u * 6.0f, v * 6.0f, n.bg_seed + 3));
  }
  // ears
  for (float side : {-1.0f, 1.0f}) {
    if (Ellipse(u, v, side * id.face_rx, -0.02f, id.ear_size * 0.6f, id.ear_size) <= 1.0f) {
      c = Mix(id.skin, Rgb{0, 0, 0}, 0.1f);
    }
  }
  // face, narrowing towards the jaw
  const float narrowing = v > 0.0f ? 1.0f - id.jaw * (v / id.face_ry) * (v / id.face_ry) : 1.0f;
  const bool in_face = Ellipse(u, v, 0.0f, 0.0f, id.face_rx * narrowing, id.face_ry) <= 1.0f;
  if (in_face) {
    // rounder shading towards the rim plus fine skin texture
    const float rim = Ellipse(u, v, 0.0f, 0.0f, id.face_rx * narrowing, id.face_ry);
    c = Scale(id.skin, 1.0f - 0.22f * rim * rim + 0.05f * grain);
  }
  // beard
  if (id.beard && in_face && v > id.mouth_y - 0.08f &&
      !(Ellipse(u, v, 0.0f, id.mouth_y, id.mouth_w * 1.05f, id.lip_thick * 1.6f) <= 1.0f)) {
    c = Mix(hair, id.skin, 0.25f);
  }
  // hair cap
  if (!id.bald) {
    const bool cap = Ellipse(u, v, 0.0f, 0.0f, id.face_rx + id.hair_side, id.face_ry + id.hair_top) <= 1.0f &&
                     v < top + id.hair_top + 0.18f &&
                     !(in_face && v > top + id.hair_top + 0.12f);
    if (cap) c = hair;
  }
  // brows
  for (float side : {-1.0f, 1.0f}) {
    const float bx = side * id.eye_dx;
    const float by = id.eye_y - id.eye_r - id.brow_gap + side * id.brow_tilt * (u - bx);
    if (std::abs(u - bx) < id.eye_r * 1.6f && std::abs(v - by) < id.brow_thick) {
      c = Mix(id.hair, Rgb{0, 0, 0}, 0.3f);
    }
  }
  // eyes
  for (float side : {-1.0f, 1.0f}) {
    const float ex = side * id.eye_dx;
    if (Ellipse(u, v, ex, id.eye_y, id.eye_r * 1.5f, id.eye_r * n.eye_open) <= 1.0f) {
      c = {0.95f, 0.95f, 0.92f};
      if (Ellipse(u, v, ex, id.eye_y, id.eye_r * 0.7f, id.eye_r * 0.7f) <= 1.0f) c = id.iris;
      if (Ellipse(u, v, ex, id.eye_y, id.eye_r * 0.3f, id.eye_r * 0.3f) <= 1.0f) c = {0.02f, 0.02f, 0.02f};
    }
    if (id.glasses) {
      const float r = Ellipse(u, v, ex, id.eye_y, id.eye_r * 2.3f, id.eye_r * 1.9f);
      if (r <= 1.0f && r >= 0.72f) c = {0.1f, 0.1f, 0.12f};
    }
  }
  if (id.glasses && std::abs(u) < id.eye_dx - id.eye_r * 2.2f && std::abs(v - id.eye_y) < 0.015f) {
    c = {0.1f, 0.1f, 0.12f};
  }
  // nose: shaded triangle and nostrils
  const float nose_top = id.eye_y + 0.05f;
  const float nose_bottom = nose_top + id.nose_len;
  if (v > nose_top && v < nose_bottom) {
    const float half = id.nose_w * (v - nose_top) / id.nose_len;
    if (u > 0.0f && u < half) c = Mix(c, Rgb{0, 0, 0}, 0.18f);
  }
  for (float side : {-1.0f, 1.0f}) {
    if (Ellipse(u, v, side * id.nose_w * 0.5f, nose_bottom, id.nose_w * 0.3f, 0.02f) <= 1.0f) {
      c = Mix(id.skin, Rgb{0, 0, 0}, 0.55f);
    }
  }
  // mouth: lips curved by the smile, optional open gap
  const float curve = n.smile * (1.0f - (u / id.mouth_w) * (u / id.mouth_w));
  const float my = id.mouth_y + curve;
  if (std::abs(u) < id.mouth_w && std::abs(v - my) < id.lip_thick + n.mouth_open) {
    c = std::abs(v - my) < n.mouth_open ? Rgb{0.15f, 0.03f, 0.05f} : id.lips;
  }
  // lighting: overall gain plus a left/right gradient
  const float gain = n.light * (1.0f + n.light_side * u);
  for (float& ch : c) ch *= gain;
  return c;
}

}  // namespace

RawImage RenderSyntheticFace(int identity, int image, const SynthOptions& options) {
  std::mt19937_64 id_rng(DeriveSeed(options.seed, "identity-" + std::to_string(identity)));
  const Identity id = MakeIdentity(id_rng);
  std::mt19937_64 rng(DeriveSeed(options.seed, "image-" + std::to_string(identity) + "-" +
                                                   std::to_string(image)));
  const Nuisance n = MakeNuisance(rng);
  std::normal_distribution<float> noise(0.0f, n.noise);

  const int s = options.size;
  RawImage out;
  out.width = out.height = s;
  out.channels = 3;
  out.bytes.resize(static_cast<std::size_t>(s) * s * 3);
  const float ca = std::cos(n.angle), sa = std::sin(n.angle);
  constexpr int kSuper = 2;
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      Rgb acc = {0, 0, 0};
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          // pixel -> [-1, 1] image coordinates -> face coordinates
          const float px = ((x + (sx + 0.5f) / kSuper) / s) * 2.0f - 1.0f - n.dx;
          const float py = ((y + (sy + 0.5f) / kSuper) / s) * 2.0f - 1.0f - n.dy;
          const float u = (ca * px + sa * py) / (n.scale * 1.2f);
          const float v = (-sa * px + ca * py) / (n.scale * 1.2f);
          const Rgb c = Shade(id, n, u, v);
          for (int k = 0; k < 3; ++k) acc[k] += c[k];
        }
      }
      for (int k = 0; k < 3; ++k) {
        const float val = acc[k] / (kSuper * kSuper) + noise(rng);
        out.bytes[(static_cast<std::size_t>(y) * s + x) * 3 + k] =
            static_cast<std::uint8_t>(std::lround(std::clamp(val, 0.0f, 1.0f) * 255.0f));
      }
    }
  }
  return out;
}

void WriteSyntheticDataset(const std::filesystem::path& root, const SynthOptions& options) {
  if (options.identities < 1 || options.images_per_identity < 1 || options.size < 8) {
    throw ParameterError("synthetic dataset needs >= 1 identity, >= 1 image and size >= 8");
  }
  for (int i = 0; i < options.identities; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "id_%04d", i);
    const auto dir = root / name;
    std::filesystem::create_directories(dir);
    for (int j = 0; j < options.images_per_identity; ++j) {
      char file[32];
      std::snprintf(file, sizeof(file), "img_%02d.png", j);
      WritePng(dir / file, RenderSyntheticFace(i, j, options));
    }
  }
}

}  // namespace advface::data
