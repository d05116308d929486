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

#ifndef ADVFACE_NN_SEQUENTIAL_HPP_
#define ADVFACE_NN_SEQUENTIAL_HPP_

#include <cstdint>
#include <memory>
#include <vector>

#include "json.hpp"
#include "advface/nn/layers.hpp"

namespace advface::nn {

// An ordered stack of layers. Copyable (deep copy) so that immutable trained
// models can hand out private working copies for gradient computation.
class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  Sequential& Add(std::unique_ptr<Layer> layer);
  template <typename L, typename... Args>
  Sequential& Emplace(Args&&... args) {
    return Add(std::make_unique<L>(std::forward<Args>(args)...));
  }

  Shape OutputShape(Shape in) const;
  Tensor Forward(const Tensor& x, Mode mode);
  Tensor Backward(const Tensor& dy);

  void Init(std::uint64_t seed);
  void SetParamGrads(bool on);
  void ZeroGrad();

  std::vector<Param*> Params();
  std::vector<std::vector<float>*> Buffers();
  std::vector<BatchNorm2d*> Norms();

  // Snapshot of the batch statistics from the last kBatchStats forward,
  // installed as overrides for subsequent kEval passes.
  void FreezeBatchStats();
  void ClearBatchStatOverrides();

  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }

  nlohmann::json Spec() const;
  static Sequential FromSpec(const nlohmann::json& spec);

  // Flat copy of every parameter and buffer value, in a fixed order.
  std::vector<float> StateVector() const;
  void LoadStateVector(const std::vector<float>& state);
  std::uint64_t StateHash() const;

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

class Adam {
 public:
  explicit Adam(float lr, float beta1 = 0.9f, float beta2 = 0.999f,
                float eps = 1e-8f)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void Step(const std::vector<Param*>& params);
  void set_lr(float lr) { lr_ = lr; }
  float lr() const { return lr_; }

 private:
  float lr_, beta1_, beta2_, eps_;
  long step_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

}  // namespace advface::nn

#endif  // ADVFACE_NN_SEQUENTIAL_HPP_
