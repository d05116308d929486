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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "advface/error.hpp"
#include "advface/nn/checkpoint.hpp"
#include "advface/nn/layers.hpp"
#include "advface/nn/sequential.hpp"

namespace advface::nn {
namespace {

Tensor RandomTensor(int n, Shape s, std::uint64_t seed, float scale = 1.0f) {
  Tensor t(n, s);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, scale);
  for (float& v : t.values()) v = d(rng);
  return t;
}

// Direct-loop convolution; weight [out][in][k][k].
Tensor NaiveConv(const Tensor& x, const std::vector<float>& w, const std::vector<float>& b,
                 int out, int k, int stride, int pad) {
  const int oh = (x.h() + 2 * pad - k) / stride + 1;
  const int ow = (x.w() + 2 * pad - k) / stride + 1;
  Tensor y(x.n(), out, oh, ow);
  for (int n = 0; n < x.n(); ++n)
    for (int o = 0; o < out; ++o)
      for (int r = 0; r < oh; ++r)
        for (int c = 0; c < ow; ++c) {
          double s = b[o];
          for (int i = 0; i < x.c(); ++i)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = r * stride - pad + ky, ix = c * stride - pad + kx;
                if (iy < 0 || ix < 0 || iy >= x.h() || ix >= x.w()) continue;
                s += static_cast<double>(w[((o * x.c() + i) * k + ky) * k + kx]) * x.at(n, i, iy, ix);
              }
          y.at(n, o, r, c) = static_cast<float>(s);
        }
  return y;
}

// Scatter form of the transposed convolution; weight [in][out][k][k].
Tensor NaiveTransConv(const Tensor& x, const std::vector<float>& w, const std::vector<float>& b,
                      int out, int k, int stride, int pad, int output_pad) {
  const int oh = (x.h() - 1) * stride - 2 * pad + k + output_pad;
  const int ow = (x.w() - 1) * stride - 2 * pad + k + output_pad;
  std::vector<double> acc(static_cast<std::size_t>(x.n()) * out * oh * ow, 0.0);
  for (int n = 0; n < x.n(); ++n)
    for (int i = 0; i < x.c(); ++i)
      for (int r = 0; r < x.h(); ++r)
        for (int c = 0; c < x.w(); ++c)
          for (int o = 0; o < out; ++o)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int yy = r * stride - pad + ky, xx = c * stride - pad + kx;
                if (yy < 0 || xx < 0 || yy >= oh || xx >= ow) continue;
                acc[((static_cast<std::size_t>(n) * out + o) * oh + yy) * ow + xx] +=
                    static_cast<double>(w[((i * out + o) * k + ky) * k + kx]) * x.at(n, i, r, c);
              }
  Tensor y(x.n(), out, oh, ow);
  for (std::size_t j = 0; j < acc.size(); ++j) {
    y.data()[j] = static_cast<float>(acc[j] + b[(j / (oh * ow)) % out]);
  }
  return y;
}

float MaxAbsDiff(const Tensor& a, const Tensor& b) {
  EXPECT_EQ(a.size(), b.size());
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

void RandomizeParams(Layer& layer, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, 0.5f);
  for (Param* p : layer.Params())
    for (float& v : p->value) v = d(rng);
}

struct ConvCase {
  int in, out, k, stride, pad, size;
};

class ConvOracleTest : public ::testing::TestWithParam<ConvCase> {};

TEST_P(ConvOracleTest, ConvMatchesDirectLoops) {
  const auto c = GetParam();
  Conv2d conv(c.in, c.out, c.k, c.stride, c.pad);
  RandomizeParams(conv, 3);
  const Tensor x = RandomTensor(2, {c.in, c.size, c.size}, 5);
  const Tensor y = conv.Forward(x, Mode::kEval);
  const Tensor ref = NaiveConv(x, conv.Params()[0]->value, conv.Params()[1]->value, c.out, c.k,
                               c.stride, c.pad);
  ASSERT_EQ(y.shape(), ref.shape());
  EXPECT_LT(MaxAbsDiff(y, ref), 1e-4f);
}

TEST_P(ConvOracleTest, TransposedConvMatchesScatterLoops) {
  const auto c = GetParam();
  for (int output_pad : {0, c.stride - 1}) {
    ConvTranspose2d tc(c.in, c.out, c.k, c.stride, c.pad, output_pad);
    RandomizeParams(tc, 4);
    const Tensor x = RandomTensor(2, {c.in, c.size, c.size}, 6);
    const Tensor y = tc.Forward(x, Mode::kEval);
    const Tensor ref = NaiveTransConv(x, tc.Params()[0]->value, tc.Params()[1]->value, c.out,
                                      c.k, c.stride, c.pad, output_pad);
    ASSERT_EQ(y.shape(), ref.shape());
    EXPECT_LT(MaxAbsDiff(y, ref), 1e-4f);
  }
}

INSTANTIATE_TEST_SUITE_P(Geometries, ConvOracleTest,
                         ::testing::Values(ConvCase{3, 4, 3, 1, 1, 7}, ConvCase{3, 4, 3, 1, 0, 7},
                                           ConvCase{2, 5, 3, 2, 0, 9}, ConvCase{2, 5, 3, 2, 1, 8},
                                           ConvCase{4, 3, 1, 1, 0, 5}, ConvCase{3, 2, 5, 1, 2, 6}));

// Checks dL/dx and dL/dparams of L = sum(r * layer(x)) by central differences.
void CheckGradients(Layer& layer, const Tensor& x, Mode mode, float tol = 2e-2f) {
  const Tensor probe = layer.Forward(x, mode);
  const Tensor r = RandomTensor(probe.n(), probe.shape(), 99);
  auto loss = [&](const Tensor& in) {
    const Tensor y = layer.Forward(in, mode);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<double>(y.data()[i]) * r.data()[i];
    return s;
  };
  for (Param* p : layer.Params()) std::fill(p->grad.begin(), p->grad.end(), 0.0f);
  layer.Forward(x, mode);
  const Tensor dx = layer.Backward(r);
  std::mt19937_64 rng(7);
  // Two step sizes: a ReLU kink inside one stencil rarely sits inside both.
  auto check = [&](double analytic, const std::function<double(double)>& at) {
    double best = 1e30, numeric = 0.0;
    for (double h : {1e-2, 2e-3}) {
      const double n = (at(h) - at(-h)) / (2 * h);
      if (std::abs(n - analytic) < best) {
        best = std::abs(n - analytic);
        numeric = n;
      }
    }
    const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    EXPECT_NEAR(analytic / scale, numeric / scale, tol);
  };
  for (int t = 0; t < 12; ++t) {
    const std::size_t i = std::uniform_int_distribution<std::size_t>(0, x.size() - 1)(rng);
    check(dx.data()[i], [&](double d) {
      Tensor xp = x;
      xp.data()[i] += static_cast<float>(d);
      return loss(xp);
    });
  }
  for (Param* p : layer.Params()) {
    const std::vector<float> grads = p->grad;
    for (int t = 0; t < 6; ++t) {
      const std::size_t i = std::uniform_int_distribution<std::size_t>(0, p->value.size() - 1)(rng);
      check(grads[i], [&](double d) {
        const float saved = p->value[i];
        p->value[i] += static_cast<float>(d);
        const double l = loss(x);
        p->value[i] = saved;
        return l;
      });
    }
  }
}

TEST(GradientTest, Convolutions) {
  for (auto c : {ConvCase{3, 4, 3, 1, 1, 6}, ConvCase{3, 4, 3, 2, 0, 7}, ConvCase{2, 3, 1, 1, 0, 4}}) {
    Conv2d conv(c.in, c.out, c.k, c.stride, c.pad);
    RandomizeParams(conv, 1);
    CheckGradients(conv, RandomTensor(2, {c.in, c.size, c.size}, 2), Mode::kTrain);
    ConvTranspose2d tc(c.in, c.out, c.k, c.stride, c.pad, c.stride - 1);
    RandomizeParams(tc, 1);
    CheckGradients(tc, RandomTensor(2, {c.in, c.size, c.size}, 2), Mode::kTrain);
  }
}

TEST(GradientTest, BatchNormInAllModes) {
  for (Mode mode : {Mode::kTrain, Mode::kBatchStats, Mode::kEval}) {
    BatchNorm2d bn(3);
    RandomizeParams(bn, 2);
    CheckGradients(bn, RandomTensor(4, {3, 3, 3}, 3, 2.0f), mode);
  }
}

TEST(GradientTest, SmoothAndRoutingLayers) {
  Sigmoid sig;
  CheckGradients(sig, RandomTensor(2, {2, 3, 3}, 4), Mode::kTrain);
  Upsample up(2);
  CheckGradients(up, RandomTensor(2, {2, 3, 3}, 5), Mode::kTrain);
  Resize rs(7, 7);
  CheckGradients(rs, RandomTensor(2, {2, 4, 4}, 6), Mode::kTrain);
  GlobalAvgPool gap;
  CheckGradients(gap, RandomTensor(2, {3, 4, 4}, 7), Mode::kTrain);
  Linear lin(12, 5);
  RandomizeParams(lin, 8);
  CheckGradients(lin, RandomTensor(3, {3, 2, 2}, 9), Mode::kTrain);
}

TEST(GradientTest, ResidualBlock) {
  ResidualBlock block(3);
  std::mt19937_64 rng(10);
  block.Init(rng);
  // Offset keeps most ReLU inputs away from the kink.
  Tensor x = RandomTensor(3, {3, 5, 5}, 11);
  for (float& v : x.values()) v += 1.0f;
  CheckGradients(block, x, Mode::kEval);
  // Perturbing a batch-norm scale moves every activation of the channel, so
  // some stencils cross a kink; the looser bound absorbs that.
  CheckGradients(block, x, Mode::kTrain, 5e-2f);
}

TEST(ResizeTest, IntegerRatioMatchesUpsample) {
  const Tensor x = RandomTensor(2, {3, 5, 5}, 12);
  Upsample up(2);
  Resize rs(10, 10);
  EXPECT_EQ(MaxAbsDiff(up.Forward(x, Mode::kEval), rs.Forward(x, Mode::kEval)), 0.0f);
}

TEST(BatchNormTest, BatchStatsLeaveRunningAveragesAlone) {
  BatchNorm2d bn(2);
  const Tensor x = RandomTensor(4, {2, 3, 3}, 13, 3.0f);
  const auto before = *bn.Buffers()[0];
  bn.Forward(x, Mode::kBatchStats);
  EXPECT_EQ(*bn.Buffers()[0], before);
  bn.Forward(x, Mode::kTrain);
  EXPECT_NE(*bn.Buffers()[0], before);
}

TEST(BatchNormTest, OverrideReplacesRunningStatistics) {
  BatchNorm2d bn(2);
  const Tensor x = RandomTensor(4, {2, 3, 3}, 14, 3.0f);
  const Tensor batch = bn.Forward(x, Mode::kBatchStats);
  bn.SetOverride(bn.last_batch_stats());
  EXPECT_LT(MaxAbsDiff(bn.Forward(x, Mode::kEval), batch), 1e-6f);
  bn.SetOverride(std::nullopt);
  EXPECT_GT(MaxAbsDiff(bn.Forward(x, Mode::kEval), batch), 1e-3f);
}

Sequential SmallNet() {
  Sequential net;
  net.Emplace<Conv2d>(3, 4, 3, 2, 1).Emplace<BatchNorm2d>(4).Emplace<ReLU>();
  net.Emplace<ResidualBlock>(4).Emplace<GlobalAvgPool>().Emplace<Linear>(4, 2);
  net.Init(21);
  return net;
}

TEST(SequentialTest, SpecAndStateRoundTrip) {
  Sequential net = SmallNet();
  net.Forward(RandomTensor(4, {3, 8, 8}, 22), Mode::kTrain);  // move running stats
  Sequential copy = Sequential::FromSpec(net.Spec());
  copy.LoadStateVector(net.StateVector());
  EXPECT_EQ(copy.StateHash(), net.StateHash());
  const Tensor x = RandomTensor(2, {3, 8, 8}, 23);
  EXPECT_EQ(MaxAbsDiff(copy.Forward(x, Mode::kEval), net.Forward(x, Mode::kEval)), 0.0f);
}

TEST(SequentialTest, CopiesAreIndependent) {
  Sequential net = SmallNet();
  Sequential copy = net;
  copy.Params()[0]->value[0] += 1.0f;
  EXPECT_NE(copy.StateHash(), net.StateHash());
}

TEST(SequentialTest, AdamReducesQuadratic) {
  Sequential net;
  net.Emplace<Linear>(4, 1);
  net.Init(1);
  Adam adam(0.05f);
  const Tensor x = RandomTensor(16, {4, 1, 1}, 2);
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 200; ++step) {
    net.ZeroGrad();
    Tensor y = net.Forward(x, Mode::kTrain);
    double loss = 0.0;
    for (float& v : y.values()) {
      loss += 0.5 * v * v;
    }
    net.Backward(y);
    adam.Step(net.Params());
    (step == 0 ? first : last) = loss;
  }
  EXPECT_LT(last, 0.01 * first);
}

TEST(CheckpointTest, RoundTripAndTamperDetection) {
  const auto path = std::filesystem::temp_directory_path() / "advface_nn_test.ckpt";
  Checkpoint ck;
  ck.metadata["note"] = "x";
  ck.networks.emplace("net", SmallNet());
  SaveCheckpoint(ck, path);
  Checkpoint back = LoadCheckpoint(path);
  EXPECT_EQ(back.metadata.at("note"), "x");
  EXPECT_EQ(back.networks.at("net").StateHash(), ck.networks.at("net").StateHash());

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-12, std::ios::end);
    char c;
    f.read(&c, 1);
    c ^= 0x10;
    f.seekp(-12, std::ios::end);
    f.write(&c, 1);
  }
  EXPECT_THROW(LoadCheckpoint(path), CorruptionError);
  std::filesystem::remove(path);
  EXPECT_THROW(LoadCheckpoint(path), IoError);
}

}  // namespace
}  // namespace advface::nn
