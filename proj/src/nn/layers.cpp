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

#include "advface/nn/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "advface/error.hpp"
#include "advface/nn/sequential.hpp"

namespace advface::nn {
namespace {

// Sequential accumulation: the result must not depend on buffer alignment.
double FixedSum(const float* p, int n) {
  double s = 0.0;
  for (int k = 0; k < n; ++k) s += p[k];
  return s;
}

using RowMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

// Unfolds one C x H x W sample into (C*k*k) x (oh*ow) patches.
void Im2Col(const float* img, int channels, int height, int width, int kernel,
            int stride, int pad, int oh, int ow, float* col) {
  const int plane = oh * ow;
  for (int c = 0; c < channels; ++c) {
    const float* src = img + static_cast<std::size_t>(c) * height * width;
    for (int kh = 0; kh < kernel; ++kh) {
      for (int kw = 0; kw < kernel; ++kw) {
        float* dst = col + static_cast<std::size_t>((c * kernel + kh) * kernel + kw) * plane;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * stride - pad + kh;
          float* row = dst + y * ow;
          if (iy < 0 || iy >= height) {
            std::fill_n(row, ow, 0.0f);
            continue;
          }
          const float* srow = src + iy * width;
          if (stride == 1) {
            const int x0 = std::max(0, pad - kw);
            const int x1 = std::min(ow, width + pad - kw);
            std::fill_n(row, std::max(0, x0), 0.0f);
            for (int x = x0; x < x1; ++x) row[x] = srow[x - pad + kw];
            for (int x = std::max(x1, 0); x < ow; ++x) row[x] = 0.0f;
          } else {
            for (int x = 0; x < ow; ++x) {
              const int ix = x * stride - pad + kw;
              row[x] = (ix >= 0 && ix < width) ? srow[ix] : 0.0f;
            }
          }
        }
      }
    }
  }
}

// Adjoint of Im2Col: accumulates patches back into the image.
void Col2Im(const float* col, int channels, int height, int width, int kernel,
            int stride, int pad, int oh, int ow, float* img) {
  const int plane = oh * ow;
  for (int c = 0; c < channels; ++c) {
    float* dst = img + static_cast<std::size_t>(c) * height * width;
    for (int kh = 0; kh < kernel; ++kh) {
      for (int kw = 0; kw < kernel; ++kw) {
        const float* src = col + static_cast<std::size_t>((c * kernel + kh) * kernel + kw) * plane;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * stride - pad + kh;
          if (iy < 0 || iy >= height) continue;
          const float* row = src + y * ow;
          float* drow = dst + iy * width;
          for (int x = 0; x < ow; ++x) {
            const int ix = x * stride - pad + kw;
            if (ix >= 0 && ix < width) drow[ix] += row[x];
          }
        }
      }
    }
  }
}

// Stride-1 convolution as k*k shifted GEMMs over a zero-padded copy of the
// input; rows are computed at the padded width and cropped afterwards. This
// avoids materializing the k*k-times larger patch matrix.
class ShiftedConv {
 public:
  using Strided = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
  using ConstStrided = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;

  ShiftedConv(int in, int out, int h, int w, int k, int pad)
      : in_(in), out_(out), h_(h), w_(w), k_(k), pad_(pad), hp_(h + 2 * pad),
        wp_(w + 2 * pad), oh_(hp_ - k + 1), ow_(wp_ - k + 1),
        stride_(static_cast<std::size_t>(hp_) * wp_ + k), len_(oh_ * wp_),
        xp_(static_cast<std::size_t>(in) * stride_),
        yp_(static_cast<std::size_t>(out) * len_) {}

  // taps[ky * k + kx] is the out x in weight matrix of that kernel offset.
  void Forward(const std::vector<RowMatrix>& taps, const float* x, float* y) {
    Pad(x);
    MatMap acc(yp_.data(), out_, len_);
    acc.setZero();
    for (int q = 0; q < k_ * k_; ++q) {
      acc.noalias() += taps[q] * Shifted(q);
    }
    for (int o = 0; o < out_; ++o) {
      for (int r = 0; r < oh_; ++r) {
        const float* src = yp_.data() + static_cast<std::size_t>(o) * len_ + r * wp_;
        std::copy(src, src + ow_, y + (static_cast<std::size_t>(o) * oh_ + r) * ow_);
      }
    }
  }

  void Backward(const std::vector<RowMatrix>& taps, const float* x, const float* dy,
                float* dx, std::vector<RowMatrix>* dtaps) {
    if (dtaps) Pad(x);
    std::fill(yp_.begin(), yp_.end(), 0.0f);
    for (int o = 0; o < out_; ++o) {
      for (int r = 0; r < oh_; ++r) {
        const float* src = dy + (static_cast<std::size_t>(o) * oh_ + r) * ow_;
        std::copy(src, src + ow_, yp_.data() + static_cast<std::size_t>(o) * len_ + r * wp_);
      }
    }
    ConstMatMap g(yp_.data(), out_, len_);
    dxp_.assign(xp_.size(), 0.0f);
    for (int q = 0; q < k_ * k_; ++q) {
      const int off = (q / k_) * wp_ + q % k_;
      Strided(dxp_.data() + off, in_, len_, Eigen::OuterStride<>(stride_)).noalias() +=
          taps[q].transpose() * g;
      if (dtaps) (*dtaps)[q].noalias() += g * Shifted(q).transpose();
    }
    for (int c = 0; c < in_; ++c) {
      for (int r = 0; r < h_; ++r) {
        const float* src = dxp_.data() + c * stride_ + (r + pad_) * wp_ + pad_;
        std::copy(src, src + w_, dx + (static_cast<std::size_t>(c) * h_ + r) * w_);
      }
    }
  }

 private:
  void Pad(const float* x) {
    std::fill(xp_.begin(), xp_.end(), 0.0f);
    for (int c = 0; c < in_; ++c) {
      for (int r = 0; r < h_; ++r) {
        const float* src = x + (static_cast<std::size_t>(c) * h_ + r) * w_;
        std::copy(src, src + w_, xp_.data() + c * stride_ + (r + pad_) * wp_ + pad_);
      }
    }
  }
  ConstStrided Shifted(int q) const {
    const int off = (q / k_) * wp_ + q % k_;
    return ConstStrided(xp_.data() + off, in_, len_, Eigen::OuterStride<>(stride_));
  }

  int in_, out_, h_, w_, k_, pad_, hp_, wp_, oh_, ow_;
  std::size_t stride_;
  int len_;
  std::vector<float> xp_, yp_, dxp_;
};

// Per-offset matrices of a [out][in][k][k] weight; flip reverses the kernel
// and reads a [in][out][k][k] layout instead (transposed convolution).
std::vector<RowMatrix> Taps(const std::vector<float>& weight, int in, int out, int k,
                            bool flip) {
  const int kk = k * k;
  std::vector<RowMatrix> taps(kk, RowMatrix(out, in));
  for (int o = 0; o < out; ++o) {
    for (int c = 0; c < in; ++c) {
      for (int q = 0; q < kk; ++q) {
        taps[q](o, c) = flip ? weight[(static_cast<std::size_t>(c) * out + o) * kk + (kk - 1 - q)]
                             : weight[(static_cast<std::size_t>(o) * in + c) * kk + q];
      }
    }
  }
  return taps;
}

void AddTapGrads(const std::vector<RowMatrix>& dtaps, int in, int out, int k, bool flip,
                 std::vector<float>& grad) {
  const int kk = k * k;
  for (int o = 0; o < out; ++o) {
    for (int c = 0; c < in; ++c) {
      for (int q = 0; q < kk; ++q) {
        const float g = dtaps[q](o, c);
        if (flip) {
          grad[(static_cast<std::size_t>(c) * out + o) * kk + (kk - 1 - q)] += g;
        } else {
          grad[(static_cast<std::size_t>(o) * in + c) * kk + q] += g;
        }
      }
    }
  }
}

void HeInit(std::vector<float>& w, int fan_in, std::mt19937_64& rng) {
  std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
  for (float& v : w) v = dist(rng);
}

void RequireChannels(const Tensor& x, int channels, const char* what) {
  if (x.c() != channels) {
    throw ContractError(std::string(what) + ": expected " +
                        std::to_string(channels) + " input channels, got " +
                        std::to_string(x.c()));
  }
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in, int out, int kernel, int stride, int pad)
    : in_(in), out_(out), kernel_(kernel), stride_(stride), pad_(pad),
      weight_("weight", static_cast<std::size_t>(out) * in * kernel * kernel),
      bias_("bias", static_cast<std::size_t>(out)) {}

Shape Conv2d::OutputShape(Shape in) const {
  const int oh = (in.h + 2 * pad_ - kernel_) / stride_ + 1;
  const int ow = (in.w + 2 * pad_ - kernel_) / stride_ + 1;
  if (in.c != in_ || oh <= 0 || ow <= 0) {
    throw ContractError("conv: incompatible input shape " + in.ToString());
  }
  return {out_, oh, ow};
}

void Conv2d::Init(std::mt19937_64& rng) {
  HeInit(weight_.value, in_ * kernel_ * kernel_, rng);
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0f);
}

Tensor Conv2d::Forward(const Tensor& x, Mode /*mode*/) {
  RequireChannels(x, in_, "conv");
  const Shape os = OutputShape(x.shape());
  if (stride_ == 1 && kernel_ > 1) {
    Tensor y(x.n(), os);
    ShiftedConv sc(in_, out_, x.h(), x.w(), kernel_, pad_);
    const auto taps = Taps(weight_.value, in_, out_, kernel_, false);
    const int plane = os.h * os.w;
    for (int i = 0; i < x.n(); ++i) {
      float* out = y.sample(i).data();
      sc.Forward(taps, x.sample(i).data(), out);
      for (int o = 0; o < out_; ++o) {
        float* p = out + static_cast<std::size_t>(o) * plane;
        for (int j = 0; j < plane; ++j) p[j] += bias_.value[o];
      }
    }
    input_ = x;
    return y;
  }
  const int plane = os.h * os.w;
  const int patch = in_ * kernel_ * kernel_;
  Tensor y(x.n(), os);
  std::vector<float> col(static_cast<std::size_t>(patch) * plane);
  ConstMatMap w(weight_.value.data(), out_, patch);
  for (int i = 0; i < x.n(); ++i) {
    Im2Col(x.sample(i).data(), in_, x.h(), x.w(), kernel_, stride_, pad_, os.h,
           os.w, col.data());
    MatMap out(y.sample(i).data(), out_, plane);
    out.noalias() = w * ConstMatMap(col.data(), patch, plane);
    for (int o = 0; o < out_; ++o) out.row(o).array() += bias_.value[o];
  }
  input_ = x;
  return y;
}

Tensor Conv2d::Backward(const Tensor& dy) {
  const Tensor& x = input_;
  const Shape os = dy.shape();
  if (stride_ == 1 && kernel_ > 1) {
    Tensor dx(x.n(), x.shape());
    ShiftedConv sc(in_, out_, x.h(), x.w(), kernel_, pad_);
    const auto taps = Taps(weight_.value, in_, out_, kernel_, false);
    std::vector<RowMatrix> dtaps(kernel_ * kernel_, RowMatrix::Zero(out_, in_));
    const int plane = os.h * os.w;
    for (int i = 0; i < x.n(); ++i) {
      const float* g = dy.sample(i).data();
      sc.Backward(taps, x.sample(i).data(), g, dx.sample(i).data(),
                  param_grads_ ? &dtaps : nullptr);
      if (param_grads_) {
        for (int o = 0; o < out_; ++o) {
          const float* p = g + static_cast<std::size_t>(o) * plane;
          double s = 0.0;
          for (int j = 0; j < plane; ++j) s += p[j];
          bias_.grad[o] += static_cast<float>(s);
        }
      }
    }
    if (param_grads_) AddTapGrads(dtaps, in_, out_, kernel_, false, weight_.grad);
    return dx;
  }
  const int plane = os.h * os.w;
  const int patch = in_ * kernel_ * kernel_;
  Tensor dx(x.n(), x.shape());
  std::vector<float> col(static_cast<std::size_t>(patch) * plane);
  std::vector<float> dcol(col.size());
  ConstMatMap w(weight_.value.data(), out_, patch);
  MatMap dw(weight_.grad.data(), out_, patch);
  for (int i = 0; i < x.n(); ++i) {
    ConstMatMap g(dy.sample(i).data(), out_, plane);
    if (param_grads_) {
      Im2Col(x.sample(i).data(), in_, x.h(), x.w(), kernel_, stride_, pad_,
             os.h, os.w, col.data());
      dw.noalias() += g * ConstMatMap(col.data(), patch, plane).transpose();
      for (int o = 0; o < out_; ++o) {
        bias_.grad[o] += static_cast<float>(FixedSum(dy.sample(i).data() + static_cast<std::size_t>(o) * plane, plane));
      }
    }
    MatMap(dcol.data(), patch, plane).noalias() = w.transpose() * g;
    Col2Im(dcol.data(), in_, x.h(), x.w(), kernel_, stride_, pad_, os.h, os.w,
           dx.sample(i).data());
  }
  return dx;
}

nlohmann::json Conv2d::Spec() const {
  return {{"type", type()}, {"in", in_}, {"out", out_}, {"kernel", kernel_},
          {"stride", stride_}, {"pad", pad_}};
}

// ------------------------------------------------------- ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(int in, int out, int kernel, int stride,
                                 int pad, int output_pad)
    : in_(in), out_(out), kernel_(kernel), stride_(stride), pad_(pad),
      output_pad_(output_pad),
      weight_("weight", static_cast<std::size_t>(in) * out * kernel * kernel),
      bias_("bias", static_cast<std::size_t>(out)) {}

Shape ConvTranspose2d::OutputShape(Shape in) const {
  const int oh = (in.h - 1) * stride_ - 2 * pad_ + kernel_ + output_pad_;
  const int ow = (in.w - 1) * stride_ - 2 * pad_ + kernel_ + output_pad_;
  if (in.c != in_ || oh <= 0 || ow <= 0) {
    throw ContractError("transconv: incompatible input shape " + in.ToString());
  }
  return {out_, oh, ow};
}

void ConvTranspose2d::Init(std::mt19937_64& rng) {
  // Fan-in of each output pixel is roughly in * k * k / stride^2.
  HeInit(weight_.value, std::max(1, in_ * kernel_ * kernel_ / (stride_ * stride_)), rng);
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0f);
}

Tensor ConvTranspose2d::Forward(const Tensor& x, Mode /*mode*/) {
  RequireChannels(x, in_, "transconv");
  const Shape os = OutputShape(x.shape());
  if (ShiftedPath()) {
    // Equivalent stride-1 convolution with a flipped kernel.
    Tensor y(x.n(), os);
    ShiftedConv sc(in_, out_, x.h(), x.w(), kernel_, kernel_ - 1 - pad_);
    const auto taps = Taps(weight_.value, in_, out_, kernel_, true);
    const int plane = os.h * os.w;
    for (int i = 0; i < x.n(); ++i) {
      float* out = y.sample(i).data();
      sc.Forward(taps, x.sample(i).data(), out);
      for (int o = 0; o < out_; ++o) {
        float* p = out + static_cast<std::size_t>(o) * plane;
        for (int j = 0; j < plane; ++j) p[j] += bias_.value[o];
      }
    }
    input_ = x;
    out_shape_ = os;
    return y;
  }
  const int plane = x.h() * x.w();
  const int patch = out_ * kernel_ * kernel_;
  Tensor y(x.n(), os);
  std::vector<float> col(static_cast<std::size_t>(patch) * plane);
  ConstMatMap w(weight_.value.data(), in_, patch);
  for (int i = 0; i < x.n(); ++i) {
    MatMap(col.data(), patch, plane).noalias() =
        w.transpose() * ConstMatMap(x.sample(i).data(), in_, plane);
    float* out = y.sample(i).data();
    Col2Im(col.data(), out_, os.h, os.w, kernel_, stride_, pad_, x.h(), x.w(), out);
    for (int o = 0; o < out_; ++o) {
      float* p = out + static_cast<std::size_t>(o) * os.h * os.w;
      for (int j = 0; j < os.h * os.w; ++j) p[j] += bias_.value[o];
    }
  }
  input_ = x;
  out_shape_ = os;
  return y;
}

Tensor ConvTranspose2d::Backward(const Tensor& dy) {
  const Tensor& x = input_;
  if (ShiftedPath()) {
    Tensor dx(x.n(), x.shape());
    ShiftedConv sc(in_, out_, x.h(), x.w(), kernel_, kernel_ - 1 - pad_);
    const auto taps = Taps(weight_.value, in_, out_, kernel_, true);
    std::vector<RowMatrix> dtaps(kernel_ * kernel_, RowMatrix::Zero(out_, in_));
    const int plane = out_shape_.h * out_shape_.w;
    for (int i = 0; i < x.n(); ++i) {
      const float* g = dy.sample(i).data();
      sc.Backward(taps, x.sample(i).data(), g, dx.sample(i).data(),
                  param_grads_ ? &dtaps : nullptr);
      if (param_grads_) {
        for (int o = 0; o < out_; ++o) {
          const float* p = g + static_cast<std::size_t>(o) * plane;
          double s = 0.0;
          for (int j = 0; j < plane; ++j) s += p[j];
          bias_.grad[o] += static_cast<float>(s);
        }
      }
    }
    if (param_grads_) AddTapGrads(dtaps, in_, out_, kernel_, true, weight_.grad);
    return dx;
  }
  const int plane = x.h() * x.w();
  const int patch = out_ * kernel_ * kernel_;
  Tensor dx(x.n(), x.shape());
  std::vector<float> col(static_cast<std::size_t>(patch) * plane);
  ConstMatMap w(weight_.value.data(), in_, patch);
  MatMap dw(weight_.grad.data(), in_, patch);
  for (int i = 0; i < x.n(); ++i) {
    const float* g = dy.sample(i).data();
    Im2Col(g, out_, out_shape_.h, out_shape_.w, kernel_, stride_, pad_, x.h(),
           x.w(), col.data());
    ConstMatMap gcol(col.data(), patch, plane);
    MatMap(dx.sample(i).data(), in_, plane).noalias() = w * gcol;
    if (param_grads_) {
      dw.noalias() += ConstMatMap(x.sample(i).data(), in_, plane) * gcol.transpose();
      const int out_plane = out_shape_.h * out_shape_.w;
      for (int o = 0; o < out_; ++o) {
        const float* p = g + static_cast<std::size_t>(o) * out_plane;
        double s = 0.0;
        for (int j = 0; j < out_plane; ++j) s += p[j];
        bias_.grad[o] += static_cast<float>(s);
      }
    }
  }
  return dx;
}

nlohmann::json ConvTranspose2d::Spec() const {
  return {{"type", type()}, {"in", in_}, {"out", out_}, {"kernel", kernel_},
          {"stride", stride_}, {"pad", pad_}, {"output_pad", output_pad_}};
}

// ------------------------------------------------------------ BatchNorm2d

BatchNorm2d::BatchNorm2d(int channels, float momentum, float eps)
    : channels_(channels), momentum_(momentum), eps_(eps),
      gamma_("gamma", static_cast<std::size_t>(channels)),
      beta_("beta", static_cast<std::size_t>(channels)),
      running_mean_(static_cast<std::size_t>(channels), 0.0f),
      running_var_(static_cast<std::size_t>(channels), 1.0f) {
  std::fill(gamma_.value.begin(), gamma_.value.end(), 1.0f);
}

Tensor BatchNorm2d::Forward(const Tensor& x, Mode mode) {
  RequireChannels(x, channels_, "batchnorm");
  const int n = x.n();
  const int plane = x.h() * x.w();
  const double count = static_cast<double>(n) * plane;
  std::vector<float> mean(channels_), var(channels_);

  batch_dependent_ = (mode != Mode::kEval);
  if (batch_dependent_) {
    for (int c = 0; c < channels_; ++c) {
      double s = 0.0, s2 = 0.0;
      for (int i = 0; i < n; ++i) {
        const float* p = x.sample(i).data() + static_cast<std::size_t>(c) * plane;
        s += FixedSum(p, plane);
      }
      const double m = s / count;
      for (int i = 0; i < n; ++i) {
        const float* p = x.sample(i).data() + static_cast<std::size_t>(c) * plane;
        for (int k = 0; k < plane; ++k) {
          const double d = static_cast<double>(p[k] - static_cast<float>(m));
          s2 += d * d;
        }
      }
      mean[c] = static_cast<float>(m);
      var[c] = static_cast<float>(s2 / count);
    }
    last_stats_ = {mean, var};
    if (mode == Mode::kTrain) {
      const double unbias = count > 1 ? count / (count - 1) : 1.0;
      for (int c = 0; c < channels_; ++c) {
        running_mean_[c] = (1 - momentum_) * running_mean_[c] + momentum_ * mean[c];
        running_var_[c] = (1 - momentum_) * running_var_[c] +
                          momentum_ * static_cast<float>(var[c] * unbias);
      }
    }
  } else if (override_) {
    mean = override_->mean;
    var = override_->var;
  } else {
    mean = running_mean_;
    var = running_var_;
  }

  inv_std_.assign(channels_, 0.0f);
  for (int c = 0; c < channels_; ++c) inv_std_[c] = 1.0f / std::sqrt(var[c] + eps_);

  xhat_ = Tensor(n, x.shape());
  Tensor y(n, x.shape());
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < channels_; ++c) {
      const std::size_t off = static_cast<std::size_t>(c) * plane;
      const float* p = x.sample(i).data() + off;
      float* h = xhat_.sample(i).data() + off;
      float* q = y.sample(i).data() + off;
      const float m = mean[c], s = inv_std_[c], g = gamma_.value[c], b = beta_.value[c];
      Eigen::Map<Eigen::ArrayXf> hv(h, plane);
      hv = (Eigen::Map<const Eigen::ArrayXf>(p, plane) - m) * s;
      Eigen::Map<Eigen::ArrayXf>(q, plane) = hv * g + b;
    }
  }
  return y;
}

Tensor BatchNorm2d::Backward(const Tensor& dy) {
  const int n = dy.n();
  const int plane = dy.h() * dy.w();
  const double count = static_cast<double>(n) * plane;
  Tensor dx(n, dy.shape());
  for (int c = 0; c < channels_; ++c) {
    const std::size_t off = static_cast<std::size_t>(c) * plane;
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int i = 0; i < n; ++i) {
      const float* g = dy.sample(i).data() + off;
      const float* h = xhat_.sample(i).data() + off;
      sum_dy += FixedSum(g, plane);
      for (int k = 0; k < plane; ++k) sum_dy_xhat += static_cast<double>(g[k]) * h[k];
    }
    if (param_grads_) {
      gamma_.grad[c] += static_cast<float>(sum_dy_xhat);
      beta_.grad[c] += static_cast<float>(sum_dy);
    }
    const float scale = gamma_.value[c] * inv_std_[c];
    const float mean_dy = static_cast<float>(sum_dy / count);
    const float mean_dy_xhat = static_cast<float>(sum_dy_xhat / count);
    for (int i = 0; i < n; ++i) {
      const float* g = dy.sample(i).data() + off;
      const float* h = xhat_.sample(i).data() + off;
      float* d = dx.sample(i).data() + off;
      Eigen::Map<const Eigen::ArrayXf> gv(g, plane);
      Eigen::Map<Eigen::ArrayXf> dv(d, plane);
      if (batch_dependent_) {
        dv = scale * (gv - mean_dy - Eigen::Map<const Eigen::ArrayXf>(h, plane) * mean_dy_xhat);
      } else {
        dv = scale * gv;
      }
    }
  }
  return dx;
}

nlohmann::json BatchNorm2d::Spec() const {
  return {{"type", type()}, {"channels", channels_}, {"momentum", momentum_},
          {"eps", eps_}};
}

// ------------------------------------------------------------ activations

Tensor ReLU::Forward(const Tensor& x, Mode /*mode*/) {
  output_ = x;
  for (float& v : output_.values()) v = v > 0.0f ? v : 0.0f;
  return output_;
}

Tensor ReLU::Backward(const Tensor& dy) {
  Tensor dx = dy;
  const float* y = output_.data();
  float* d = dx.data();
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(y[i] > 0.0f)) d[i] = 0.0f;
  }
  return dx;
}

Tensor Sigmoid::Forward(const Tensor& x, Mode /*mode*/) {
  output_ = x;
  for (float& v : output_.values()) v = 1.0f / (1.0f + std::exp(-v));
  return output_;
}

Tensor Sigmoid::Backward(const Tensor& dy) {
  Tensor dx = dy;
  const float* y = output_.data();
  float* d = dx.data();
  for (std::size_t i = 0; i < dx.size(); ++i) d[i] *= y[i] * (1.0f - y[i]);
  return dx;
}

// ----------------------------------------------------- Upsample, pooling

Tensor Upsample::Forward(const Tensor& x, Mode /*mode*/) {
  in_shape_ = x.shape();
  if (factor_ == 1) return x;
  const Shape os = OutputShape(x.shape());
  Tensor y(x.n(), os);
  const int planes = x.n() * x.c();
  for (int p = 0; p < planes; ++p) {
    const float* src = x.data() + static_cast<std::size_t>(p) * x.h() * x.w();
    float* dst = y.data() + static_cast<std::size_t>(p) * os.h * os.w;
    for (int oy = 0; oy < os.h; ++oy) {
      const float* srow = src + (oy / factor_) * x.w();
      float* drow = dst + oy * os.w;
      for (int ix = 0; ix < x.w(); ++ix) {
        for (int k = 0; k < factor_; ++k) drow[ix * factor_ + k] = srow[ix];
      }
    }
  }
  return y;
}

Tensor Upsample::Backward(const Tensor& dy) {
  if (factor_ == 1) return dy;
  Tensor dx(dy.n(), in_shape_);
  const int planes = dy.n() * dy.c();
  for (int p = 0; p < planes; ++p) {
    const float* src = dy.data() + static_cast<std::size_t>(p) * dy.h() * dy.w();
    float* dst = dx.data() + static_cast<std::size_t>(p) * in_shape_.h * in_shape_.w;
    for (int oy = 0; oy < dy.h(); ++oy) {
      const float* srow = src + oy * dy.w();
      float* drow = dst + (oy / factor_) * in_shape_.w;
      for (int ix = 0; ix < in_shape_.w; ++ix) {
        float acc = 0.0f;
        for (int k = 0; k < factor_; ++k) acc += srow[ix * factor_ + k];
        drow[ix] += acc;
      }
    }
  }
  return dx;
}

void Resize::Plan(Shape in) {
  if (in == in_shape_ && !rows_.empty()) return;
  in_shape_ = in;
  rows_.resize(height_);
  cols_.resize(width_);
  for (int y = 0; y < height_; ++y) {
    rows_[y] = static_cast<int>(static_cast<long>(y) * in.h / height_);
  }
  for (int x = 0; x < width_; ++x) {
    cols_[x] = static_cast<int>(static_cast<long>(x) * in.w / width_);
  }
}

Tensor Resize::Forward(const Tensor& x, Mode /*mode*/) {
  Plan(x.shape());
  if (x.h() == height_ && x.w() == width_) return x;
  Tensor y(x.n(), OutputShape(x.shape()));
  const int planes = x.n() * x.c();
  for (int p = 0; p < planes; ++p) {
    const float* src = x.data() + static_cast<std::size_t>(p) * x.h() * x.w();
    float* dst = y.data() + static_cast<std::size_t>(p) * height_ * width_;
    for (int oy = 0; oy < height_; ++oy) {
      const float* srow = src + rows_[oy] * x.w();
      float* drow = dst + oy * width_;
      for (int ox = 0; ox < width_; ++ox) drow[ox] = srow[cols_[ox]];
    }
  }
  return y;
}

Tensor Resize::Backward(const Tensor& dy) {
  if (in_shape_.h == height_ && in_shape_.w == width_) return dy;
  Tensor dx(dy.n(), in_shape_);
  const int planes = dy.n() * dy.c();
  for (int p = 0; p < planes; ++p) {
    const float* src = dy.data() + static_cast<std::size_t>(p) * height_ * width_;
    float* dst = dx.data() + static_cast<std::size_t>(p) * in_shape_.h * in_shape_.w;
    for (int oy = 0; oy < height_; ++oy) {
      const float* srow = src + oy * width_;
      float* drow = dst + rows_[oy] * in_shape_.w;
      for (int ox = 0; ox < width_; ++ox) drow[cols_[ox]] += srow[ox];
    }
  }
  return dx;
}

Tensor GlobalAvgPool::Forward(const Tensor& x, Mode /*mode*/) {
  in_shape_ = x.shape();
  const int plane = x.h() * x.w();
  Tensor y(x.n(), Shape{x.c(), 1, 1});
  for (int i = 0; i < x.n(); ++i) {
    for (int c = 0; c < x.c(); ++c) {
      const float* p = x.sample(i).data() + static_cast<std::size_t>(c) * plane;
      double s = 0.0;
      for (int j = 0; j < plane; ++j) s += p[j];
      y.at(i, c, 0, 0) = static_cast<float>(s / plane);
    }
  }
  return y;
}

Tensor GlobalAvgPool::Backward(const Tensor& dy) {
  const int plane = in_shape_.h * in_shape_.w;
  Tensor dx(dy.n(), in_shape_);
  for (int i = 0; i < dy.n(); ++i) {
    for (int c = 0; c < in_shape_.c; ++c) {
      const float g = dy.at(i, c, 0, 0) / static_cast<float>(plane);
      float* p = dx.sample(i).data() + static_cast<std::size_t>(c) * plane;
      std::fill_n(p, plane, g);
    }
  }
  return dx;
}

// ----------------------------------------------------------------- Linear

Linear::Linear(int in, int out)
    : in_(in), out_(out),
      weight_("weight", static_cast<std::size_t>(in) * out),
      bias_("bias", static_cast<std::size_t>(out)) {}

Shape Linear::OutputShape(Shape in) const {
  if (static_cast<int>(in.size()) != in_) {
    throw ContractError("linear: expected " + std::to_string(in_) +
                        " inputs, got " + in.ToString());
  }
  return {out_, 1, 1};
}

void Linear::Init(std::mt19937_64& rng) {
  std::normal_distribution<float> dist(0.0f, std::sqrt(1.0f / static_cast<float>(in_)));
  for (float& v : weight_.value) v = dist(rng);
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0f);
}

Tensor Linear::Forward(const Tensor& x, Mode /*mode*/) {
  OutputShape(x.shape());
  Tensor y(x.n(), Shape{out_, 1, 1});
  ConstMatMap w(weight_.value.data(), out_, in_);
  ConstMatMap in(x.data(), x.n(), in_);
  MatMap out(y.data(), x.n(), out_);
  out.noalias() = in * w.transpose();
  for (int i = 0; i < x.n(); ++i) {
    for (int o = 0; o < out_; ++o) out(i, o) += bias_.value[o];
  }
  input_ = x;
  return y;
}

Tensor Linear::Backward(const Tensor& dy) {
  Tensor dx(dy.n(), input_.shape());
  ConstMatMap w(weight_.value.data(), out_, in_);
  ConstMatMap g(dy.data(), dy.n(), out_);
  MatMap(dx.data(), dy.n(), in_).noalias() = g * w;
  if (param_grads_) {
    MatMap(weight_.grad.data(), out_, in_).noalias() +=
        g.transpose() * ConstMatMap(input_.data(), dy.n(), in_);
    for (int i = 0; i < dy.n(); ++i) {
      for (int o = 0; o < out_; ++o) bias_.grad[o] += g(i, o);
    }
  }
  return dx;
}

nlohmann::json Linear::Spec() const {
  return {{"type", type()}, {"in", in_}, {"out", out_}};
}

// ---------------------------------------------------------- ResidualBlock

ResidualBlock::ResidualBlock(int channels)
    : channels_(channels), body_(std::make_unique<Sequential>()) {
  body_->Emplace<Conv2d>(channels, channels, 3, 1, 1)
      .Emplace<BatchNorm2d>(channels)
      .Emplace<ReLU>()
      .Emplace<Conv2d>(channels, channels, 3, 1, 1)
      .Emplace<BatchNorm2d>(channels);
}

ResidualBlock::ResidualBlock(const ResidualBlock& other)
    : Layer(other), channels_(other.channels_),
      body_(std::make_unique<Sequential>(*other.body_)),
      output_(other.output_) {}

ResidualBlock::~ResidualBlock() = default;

Tensor ResidualBlock::Forward(const Tensor& x, Mode mode) {
  Tensor y = body_->Forward(x, mode);
  float* p = y.data();
  const float* s = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) {
    const float v = p[i] + s[i];
    p[i] = v > 0.0f ? v : 0.0f;
  }
  output_ = y;
  return y;
}

Tensor ResidualBlock::Backward(const Tensor& dy) {
  Tensor dz = dy;
  const float* y = output_.data();
  float* d = dz.data();
  for (std::size_t i = 0; i < dz.size(); ++i) {
    if (!(y[i] > 0.0f)) d[i] = 0.0f;
  }
  Tensor dx = body_->Backward(dz);
  float* q = dx.data();
  for (std::size_t i = 0; i < dx.size(); ++i) q[i] += d[i];
  return dx;
}

std::vector<Param*> ResidualBlock::Params() { return body_->Params(); }
std::vector<std::vector<float>*> ResidualBlock::Buffers() { return body_->Buffers(); }
void ResidualBlock::CollectNorms(std::vector<BatchNorm2d*>& out) {
  for (BatchNorm2d* bn : body_->Norms()) out.push_back(bn);
}
void ResidualBlock::Init(std::mt19937_64& rng) {
  for (std::size_t i = 0; i < body_->size(); ++i) body_->layer(i).Init(rng);
}
void ResidualBlock::SetParamGrads(bool on) {
  param_grads_ = on;
  body_->SetParamGrads(on);
}

// ---------------------------------------------------------------- factory

std::unique_ptr<Layer> MakeLayer(const nlohmann::json& spec) {
  const std::string type = spec.at("type").get<std::string>();
  if (type == "conv") {
    return std::make_unique<Conv2d>(spec.at("in"), spec.at("out"),
                                    spec.at("kernel"), spec.at("stride"),
                                    spec.at("pad"));
  }
  if (type == "transconv") {
    return std::make_unique<ConvTranspose2d>(
        spec.at("in"), spec.at("out"), spec.at("kernel"), spec.at("stride"),
        spec.at("pad"), spec.at("output_pad"));
  }
  if (type == "bn") {
    return std::make_unique<BatchNorm2d>(spec.at("channels"),
                                         spec.value("momentum", 0.1f),
                                         spec.value("eps", 1e-5f));
  }
  if (type == "relu") return std::make_unique<ReLU>();
  if (type == "sigmoid") return std::make_unique<Sigmoid>();
  if (type == "upsample") return std::make_unique<Upsample>(spec.at("factor"));
  if (type == "resize") return std::make_unique<Resize>(spec.at("height"), spec.at("width"));
  if (type == "gap") return std::make_unique<GlobalAvgPool>();
  if (type == "linear") {
    return std::make_unique<Linear>(spec.at("in"), spec.at("out"));
  }
  if (type == "resblock") return std::make_unique<ResidualBlock>(spec.at("channels"));
  throw CorruptionError("unknown layer type in model spec: " + type);
}

}  // namespace advface::nn
