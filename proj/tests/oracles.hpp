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

// Independent reference implementations shared by the unit tests and the
// acceptance runner. Deliberately naive: plain loops in double precision.

#ifndef ADVFACE_TESTS_ORACLES_HPP_
#define ADVFACE_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <utility>
#include <vector>

#include "advface/nn/layers.hpp"
#include "advface/nn/sequential.hpp"
#include "advface/protect.hpp"
#include "advface/tensor.hpp"

namespace advface::oracle {

inline std::vector<float> RandomImage(int size, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> img(3 * size * size);
  for (float& v : img) v = u(rng);
  return img;
}

// Smooth base plus noise, so pairs are correlated like real reconstructions.
inline std::pair<std::vector<float>, std::vector<float>> CorrelatedPair(int size, std::mt19937_64& rng) {
  std::normal_distribution<float> g(0.0f, 0.1f);
  std::uniform_real_distribution<float> u(0.0f, 6.0f);
  const float fx = u(rng), fy = u(rng), ph = u(rng);
  std::vector<float> a(3 * size * size), b(a.size());
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const float base = 0.5f + 0.3f * std::sin(fx * x / size + fy * y / size + ph + c);
        const std::size_t i = (static_cast<std::size_t>(c) * size + y) * size + x;
        a[i] = std::clamp(base + g(rng), 0.0f, 1.0f);
        b[i] = std::clamp(base + g(rng), 0.0f, 1.0f);
      }
  return {a, b};
}

inline double RefMse(const std::vector<float>& a, const std::vector<float>& b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (long double)(a[i] - b[i]) * (a[i] - b[i]);
  return static_cast<double>(s / a.size());
}

// Windowed SSIM computed position by position with the full 2-D kernel.
inline double RefSsim(const std::vector<float>& a, const std::vector<float>& b, int size) {
  std::vector<double> ga(size * size), gb(size * size);
  for (int i = 0; i < size * size; ++i) {
    ga[i] = (a[i] + a[i + size * size] + a[i + 2 * size * size]) / 3.0;
    gb[i] = (b[i] + b[i + size * size] + b[i + 2 * size * size]) / 3.0;
  }
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const int win = size < 11 ? size : 11;
  std::vector<double> w(win * win);
  if (size < 11) {
    std::fill(w.begin(), w.end(), 1.0 / (win * win));
  } else {
    double total = 0;
    for (int y = 0; y < 11; ++y)
      for (int x = 0; x < 11; ++x) {
        w[y * 11 + x] = std::exp(-((y - 5) * (y - 5) + (x - 5) * (x - 5)) / (2 * 1.5 * 1.5));
        total += w[y * 11 + x];
      }
    for (double& v : w) v /= total;
  }
  double sum = 0;
  int count = 0;
  for (int oy = 0; oy + win <= size; ++oy)
    for (int ox = 0; ox + win <= size; ++ox) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int y = 0; y < win; ++y)
        for (int x = 0; x < win; ++x) {
          const double k = w[y * win + x];
          const double va = ga[(oy + y) * size + ox + x], vb = gb[(oy + y) * size + ox + x];
          ma += k * va;
          mb += k * vb;
          saa += k * va * va;
          sbb += k * vb * vb;
          sab += k * va * vb;
        }
      const double vaa = saa - ma * ma, vbb = sbb - mb * mb, vab = sab - ma * mb;
      sum += ((2 * ma * mb + c1) * (2 * vab + c2)) / ((ma * ma + mb * mb + c1) * (vaa + vbb + c2));
      ++count;
    }
  return sum / count;
}

inline Tensor Uniform(int n, Shape s, float lo, float hi, std::uint64_t seed) {
  Tensor t(n, s);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(lo, hi);
  for (float& v : t.values()) v = d(rng);
  return t;
}

inline void FillParams(nn::Sequential& net, float lo, float hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(lo, hi);
  for (auto* p : net.Params()) {
    for (float& v : p->value) v = d(rng);
  }
}

// Small decoder with normalization: 4x3x3 features -> 3x5x5 images.
inline nn::Sequential TinyShadow(std::uint64_t seed) {
  nn::Sequential s;
  s.Emplace<nn::ConvTranspose2d>(4, 6, 3, 1, 0, 0);
  s.Emplace<nn::BatchNorm2d>(6);
  s.Emplace<nn::ReLU>();
  s.Emplace<nn::Conv2d>(6, 3, 3, 1, 1);
  s.Emplace<nn::Sigmoid>();
  s.Init(seed);
  return s;
}

// Images -> features with the matching shape, for round trips.
inline protect::FeatureMap TinyExtractor(std::uint64_t seed) {
  auto net = std::make_shared<nn::Sequential>();
  net->Emplace<nn::Conv2d>(3, 4, 3, 1, 0);
  net->Emplace<nn::ReLU>();
  net->Init(seed);
  return [net](const Tensor& images) { return net->Forward(images, nn::Mode::kEval); };
}

// Double-precision forward of transconv(k3, stride 1, pad 0) -> BN(eval)
// -> sigmoid, summed L1 against the target. Independent of the layer code.
inline double ReferenceLoss(nn::Sequential& shadow, const Tensor& z, const Tensor& target) {
  const auto params = shadow.Params();
  const auto& w = params[0]->value;
  const auto& b = params[1]->value;
  const auto& gamma = params[2]->value;
  const auto& beta = params[3]->value;
  auto* bn = shadow.Norms().front();
  const auto& mean = *bn->Buffers()[0];
  const auto& var = *bn->Buffers()[1];
  const int cin = z.c(), cout = target.c(), k = 3, oh = target.h(), ow = target.w();
  double loss = 0;
  for (int n = 0; n < z.n(); ++n)
    for (int o = 0; o < cout; ++o)
      for (int r = 0; r < oh; ++r)
        for (int c = 0; c < ow; ++c) {
          double y = b[o];
          for (int i = 0; i < cin; ++i)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = r - ky, ix = c - kx;
                if (iy < 0 || ix < 0 || iy >= z.h() || ix >= z.w()) continue;
                y += static_cast<double>(w[((i * cout + o) * k + ky) * k + kx]) * z.at(n, i, iy, ix);
              }
          y = (y - mean[o]) / std::sqrt(static_cast<double>(var[o]) + 1e-5) * gamma[o] + beta[o];
          y = 1.0 / (1.0 + std::exp(-y));
          loss += std::abs(y - target.at(n, o, r, c));
        }
  return loss;
}

}  // namespace advface::oracle

#endif  // ADVFACE_TESTS_ORACLES_HPP_
