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

#ifndef ADVFACE_NN_LAYERS_HPP_
#define ADVFACE_NN_LAYERS_HPP_

#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "advface/tensor.hpp"

namespace advface::nn {

// kTrain: batch statistics, running averages updated.
// kEval: running statistics (or frozen overrides, see BatchNorm2d).
// kBatchStats: statistics of the current batch, running averages untouched.
enum class Mode { kTrain, kEval, kBatchStats };

struct Param {
  std::string name;
  std::vector<float> value;
  std::vector<float> grad;

  explicit Param(std::string n = {}, std::size_t size = 0)
      : name(std::move(n)), value(size, 0.0f), grad(size, 0.0f) {}
};

class BatchNorm2d;

class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string type() const = 0;
  virtual Shape OutputShape(Shape in) const = 0;
  // Caches whatever Backward needs; Backward must follow the matching Forward.
  virtual Tensor Forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor Backward(const Tensor& dy) = 0;

  virtual std::vector<Param*> Params() { return {}; }
  // Non-trainable state that is serialized (BN running statistics).
  virtual std::vector<std::vector<float>*> Buffers() { return {}; }
  virtual void CollectNorms(std::vector<BatchNorm2d*>& /*out*/) {}
  virtual void Init(std::mt19937_64& /*rng*/) {}
  virtual nlohmann::json Spec() const = 0;
  virtual std::unique_ptr<Layer> Clone() const = 0;

  // When off, Backward only propagates to the input.
  virtual void SetParamGrads(bool on) { param_grads_ = on; }

 protected:
  bool param_grads_ = true;
};

class Conv2d final : public Layer {
 public:
  Conv2d(int in, int out, int kernel, int stride, int pad);

  std::string type() const override { return "conv"; }
  Shape OutputShape(Shape in) const override;
  Tensor Forward(const Tensor& x, Mode mode) override;
  Tensor Backward(const Tensor& dy) override;
  std::vector<Param*> Params() override { return {&weight_, &bias_}; }
  void Init(std::mt19937_64& rng) override;
  nlohmann::json Spec() const override;
  std::unique_ptr<Layer> Clone() const override {
    return std::make_unique<Conv2d>(*this);
  }

 private:
  int in_, out_, kernel_, stride_, pad_;
  Param weight_;  // [out][in * k * k]
  Param bias_;
  Tensor input_;
};

// Transposed convolution; weight layout [in][out * k * k].
class ConvTranspose2d final : public Layer {
 public:
  ConvTranspose2d(int in, int out, int kernel, int stride, int pad,
                  int output_pad);

  std::string type() const override { return "transconv"; }
  Shape OutputShape(Shape in) const override;
  Tensor Forward(const Tensor& x, Mode mode) override;
  Tensor Backward(const Tensor& dy) override;
  std::vector<Param*> Params() override { return {&weight_, &bias_}; }
  void Init(std::mt19937_64& rng) override;
  nlohmann::json Spec() const override;
  std::unique_ptr<Layer> Clone() const override {
    return std::make_unique<ConvTranspose2d>(*this);
  }

 private:
  bool ShiftedPath() const {
    return stride_ == 1 && output_pad_ == 0 && pad_ <= kernel_ - 1 && kernel_ > 1;
  }
  int in_, out_, kernel_, stride_, pad_, output_pad_;
  Param weight_;
  Param bias_;
  Tensor input_;
  Shape out_shape_;
};

struct NormStats {
  std::vector<float> mean;
  std::vector<float> var;  // biased
};

class BatchNorm2d final : public Layer {
 public:
  explicit BatchNorm2d(int channels, float momentum = 0.1f, float eps = 1e-5f);

  std::string type() const override { return "bn"; }
  Shape OutputShape(Shape in) const override { return in; }
  Tensor Forward(const Tensor& x, Mode mode) override;
  Tensor Backward(const Tensor& dy) override;
  std::vector<Param*> Params() override { return {&gamma_, &beta_}; }
  std::vector<std::vector<float>*> Buffers() override {
    return {&running_mean_, &running_var_};
  }
  void CollectNorms(std::vector<BatchNorm2d*>& out) override {
    out.push_back(this);
  }
  nlohmann::json Spec() const override;
  std::unique_ptr<Layer> Clone() const override {
    return std::make_unique<BatchNorm2d>(*this);
  }

  // Statistics computed by the most recent kTrain/kBatchStats forward.
  const NormStats& last_batch_stats() const { return last_stats_; }
  // When set, kEval normalizes with these instead of the running averages.
  void SetOverride(std::optional<NormStats> stats) { override_ = std::move(stats); }
  const std::optional<NormStats>& override_stats() const { return override_; }

 private:
  int channels_;
  float momentum_, eps_;
  Param gamma_, beta_;
  std::vector<float> running_mean_, running_var_;
  std::optional<NormStats> override_;
  NormStats last_stats_;
  // backward cache
  Tensor xhat_;
  std::vector<float> inv_std_;
  bool batch_dependent_ = false;
};

class ReLU final : public Layer {
 public:
  std::string type() const override { return "relu"; }
  Shape OutputShape(Shape in) const override { return in; }
  Tensor Forward(const Tensor& x, Mode mode) override;
  Tensor Backward(const Tensor& dy) override;
  nlohmann::json Spec() const override { return {{"type", type()}}; }
  std::unique_ptr<Layer> Clone() const override {
    return std::make_unique<ReLU>(*this);
  }

 private:
  Tensor output_;
};

class Sigmoid final : public Layer {
 public:
  std::string type() const override { return "sigmoid"; }
  Shape OutputShape(Shape in) const override { return in; }
  Tensor Forward(const Tensor& x, Mode mode) override;
  Tensor Backward(const Tensor& dy) override;
  nlohmann::json Spec() const override { return {{"type", type()}}; }
  std::unique_ptr<Layer> Clone() const override {
    return std::make_unique<Sigmoid>(*this);
  }

 private:
  Tensor output_;
};

// Nearest-neighbour upsampling by an integer factor (1 is the identity).
class Upsample final : public Layer {
 public:
  explicit Upsample(int factor) : factor_(factor) {}
  std::string type() const override { return "upsample"; }
  Shape OutputShape(Shape in) const override {
    return {in.c, in.h * factor_, in.w * factor_};
  }
  Tensor Forward(const Tensor& x, Mode mode) override;
  Tensor Backward(const Tensor& dy) override;
  nlohmann::json Spec() const override {
    return {{"type", type()}, {"factor", factor_}};
  }
  std::unique_ptr<Layer> Clone() const override {
    return std::make_unique<Upsample>(*this);
  }
  int factor() const { return factor_; }

 private:
  int factor_;
  Shape in_shape_;
};

// Nearest-neighbour resize to a fixed spatial size; source index is
// floor(out_index * in / out), so integer ratios match Upsample.
class Resize final : public Layer {
 public:
  Resize(int height, int width) : height_(height), width_(width) {}
  std::string type() const override { return "resize"; }
  Shape OutputShape(Shape in) const override { return {in.c, height_, width_}; }
  Tensor Forward(const Tensor& x, Mode mode) override;
  Tensor Backward(const Tensor& dy) override;
  nlohmann::json Spec() const override {
    return {{"type", type()}, {"height", height_}, {"width", width_}};
  }
  std::unique_ptr<Layer> Clone() const override {
    return std::make_unique<Resize>(*this);
  }

 private:
  int height_, width_;
  Shape in_shape_;
  std::vector<int> rows_, cols_;
  void Plan(Shape in);
};

class GlobalAvgPool final : public Layer {
 public:
  std::string type() const override { return "gap"; }
  Shape OutputShape(Shape in) const override { return {in.c, 1, 1}; }
  Tensor Forward(const Tensor& x, Mode mode) override;
  Tensor Backward(const Tensor& dy) override;
  nlohmann::json Spec() const override { return {{"type", type()}}; }
  std::unique_ptr<Layer> Clone() const override {
    return std::make_unique<GlobalAvgPool>(*this);
  }

 private:
  Shape in_shape_;
};

// Fully connected layer over the flattened sample.
class Linear final : public Layer {
 public:
  Linear(int in, int out);
  std::string type() const override { return "linear"; }
  Shape OutputShape(Shape in) const override;
  Tensor Forward(const Tensor& x, Mode mode) override;
  Tensor Backward(const Tensor& dy) override;
  std::vector<Param*> Params() override { return {&weight_, &bias_}; }
  void Init(std::mt19937_64& rng) override;
  nlohmann::json Spec() const override;
  std::unique_ptr<Layer> Clone() const override {
    return std::make_unique<Linear>(*this);
  }

 private:
  int in_, out_;
  Param weight_;  // [out][in]
  Param bias_;
  Tensor input_;
};

class Sequential;

// conv3-bn-relu-conv3-bn plus identity shortcut, then relu.
class ResidualBlock final : public Layer {
 public:
  explicit ResidualBlock(int channels);
  ResidualBlock(const ResidualBlock& other);
  ~ResidualBlock() override;

  std::string type() const override { return "resblock"; }
  Shape OutputShape(Shape in) const override { return in; }
  Tensor Forward(const Tensor& x, Mode mode) override;
  Tensor Backward(const Tensor& dy) override;
  std::vector<Param*> Params() override;
  std::vector<std::vector<float>*> Buffers() override;
  void CollectNorms(std::vector<BatchNorm2d*>& out) override;
  void Init(std::mt19937_64& rng) override;
  nlohmann::json Spec() const override {
    return {{"type", type()}, {"channels", channels_}};
  }
  std::unique_ptr<Layer> Clone() const override {
    return std::make_unique<ResidualBlock>(*this);
  }
  void SetParamGrads(bool on) override;

 private:
  int channels_;
  std::unique_ptr<Sequential> body_;
  Tensor output_;
};

std::unique_ptr<Layer> MakeLayer(const nlohmann::json& spec);

}  // namespace advface::nn

#endif  // ADVFACE_NN_LAYERS_HPP_
