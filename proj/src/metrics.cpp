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

#include "advface/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "advface/error.hpp"

namespace advface::eval {
namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void RequireSameSize(std::size_t a, std::size_t b) {
  if (a != b || a == 0) {
    throw ContractError("metric inputs differ in size (" + std::to_string(a) + " vs " +
                        std::to_string(b) + ")");
  }
}

std::array<double, kWindow> GaussianTaps() {
  std::array<double, kWindow> g{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

std::vector<double> Gray(std::span<const float> img, int size) {
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  std::vector<double> g(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    g[i] = (static_cast<double>(img[i]) + img[plane + i] + img[2 * plane + i]) / 3.0;
  }
  return g;
}

double SsimFromMoments(double mx, double my, double vx, double vy, double cxy) {
  return ((2 * mx * my + kC1) * (2 * cxy + kC2)) /
         ((mx * mx + my * my + kC1) * (vx + vy + kC2));
}

// Separable valid-mode filtering of one plane.
std::vector<double> Filter(const std::vector<double>& in, int size,
                           const std::array<double, kWindow>& g) {
  const int out = size - kWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(size) * out);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < out; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += g[k] * in[y * size + x + k];
      rows[y * out + x] = s;
    }
  }
  std::vector<double> res(static_cast<std::size_t>(out) * out);
  for (int y = 0; y < out; ++y) {
    for (int x = 0; x < out; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += g[k] * rows[(y + k) * out + x];
      res[y * out + x] = s;
    }
  }
  return res;
}

}  // namespace

double Mse(std::span<const float> a, std::span<const float> b) {
  RequireSameSize(a.size(), b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

double PsnrFromMse(double mse) { return 10.0 * std::log10(1.0 / std::max(mse, kMseFloor)); }

double Psnr(std::span<const float> a, std::span<const float> b) { return PsnrFromMse(Mse(a, b)); }

double Ssim(std::span<const float> a, std::span<const float> b, int size) {
  RequireSameSize(a.size(), b.size());
  if (size <= 0 || a.size() != static_cast<std::size_t>(3) * size * size) {
    throw ContractError("ssim expects 3 x size x size images");
  }
  const auto ga = Gray(a, size);
  const auto gb = Gray(b, size);
  if (size < kWindow) {
    const double n = static_cast<double>(ga.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < ga.size(); ++i) {
      mx += ga[i];
      my += gb[i];
    }
    mx /= n;
    my /= n;
    double vx = 0, vy = 0, cxy = 0;
    for (std::size_t i = 0; i < ga.size(); ++i) {
      vx += (ga[i] - mx) * (ga[i] - mx);
      vy += (gb[i] - my) * (gb[i] - my);
      cxy += (ga[i] - mx) * (gb[i] - my);
    }
    return SsimFromMoments(mx, my, vx / n, vy / n, cxy / n);
  }
  const auto g = GaussianTaps();
  std::vector<double> aa(ga.size()), bb(ga.size()), ab(ga.size());
  for (std::size_t i = 0; i < ga.size(); ++i) {
    aa[i] = ga[i] * ga[i];
    bb[i] = gb[i] * gb[i];
    ab[i] = ga[i] * gb[i];
  }
  const auto mx = Filter(ga, size, g), my = Filter(gb, size, g);
  const auto sxx = Filter(aa, size, g), syy = Filter(bb, size, g), sxy = Filter(ab, size, g);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    total += SsimFromMoments(mx[i], my[i], sxx[i] - mx[i] * mx[i], syy[i] - my[i] * my[i],
                             sxy[i] - mx[i] * my[i]);
  }
  return total / static_cast<double>(mx.size());
}

double Mse(const data::FaceImage& a, const data::FaceImage& b) {
  if (a.size != b.size) throw ContractError("metric inputs differ in image size");
  return Mse(a.pixels, b.pixels);
}

double Psnr(const data::FaceImage& a, const data::FaceImage& b) {
  return PsnrFromMse(Mse(a, b));
}

double Ssim(const data::FaceImage& a, const data::FaceImage& b) {
  if (a.size != b.size) throw ContractError("metric inputs differ in image size");
  return Ssim(a.pixels, b.pixels, a.size);
}

}  // namespace advface::eval
