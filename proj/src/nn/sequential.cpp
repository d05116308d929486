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

#include "advface/nn/sequential.hpp"

#include <cmath>

#include "advface/error.hpp"
#include "advface/util.hpp"

namespace advface::nn {

Sequential::Sequential(const Sequential& other) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->Clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
  if (this != &other) {
    Sequential copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Sequential& Sequential::Add(std::unique_ptr<Layer> layer) {
  layers_.push_back(std::move(layer));
  return *this;
}

Shape Sequential::OutputShape(Shape in) const {
  for (const auto& l : layers_) in = l->OutputShape(in);
  return in;
}

Tensor Sequential::Forward(const Tensor& x, Mode mode) {
  Tensor h = x;
  for (auto& l : layers_) h = l->Forward(h, mode);
  return h;
}

Tensor Sequential::Backward(const Tensor& dy) {
  Tensor g = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->Backward(g);
  return g;
}

void Sequential::Init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& l : layers_) l->Init(rng);
}

void Sequential::SetParamGrads(bool on) {
  for (auto& l : layers_) l->SetParamGrads(on);
}

void Sequential::ZeroGrad() {
  for (Param* p : Params()) std::fill(p->grad.begin(), p->grad.end(), 0.0f);
}

std::vector<Param*> Sequential::Params() {
  std::vector<Param*> out;
  for (auto& l : layers_) {
    for (Param* p : l->Params()) out.push_back(p);
  }
  return out;
}

std::vector<std::vector<float>*> Sequential::Buffers() {
  std::vector<std::vector<float>*> out;
  for (auto& l : layers_) {
    for (auto* b : l->Buffers()) out.push_back(b);
  }
  return out;
}

std::vector<BatchNorm2d*> Sequential::Norms() {
  std::vector<BatchNorm2d*> out;
  for (auto& l : layers_) l->CollectNorms(out);
  return out;
}

void Sequential::FreezeBatchStats() {
  for (BatchNorm2d* bn : Norms()) bn->SetOverride(bn->last_batch_stats());
}

void Sequential::ClearBatchStatOverrides() {
  for (BatchNorm2d* bn : Norms()) bn->SetOverride(std::nullopt);
}

nlohmann::json Sequential::Spec() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : layers_) layers.push_back(l->Spec());
  return layers;
}

Sequential Sequential::FromSpec(const nlohmann::json& spec) {
  Sequential net;
  for (const auto& l : spec) net.Add(MakeLayer(l));
  return net;
}

std::vector<float> Sequential::StateVector() const {
  // Params()/Buffers() are non-const only because they hand out pointers.
  auto& self = const_cast<Sequential&>(*this);
  std::vector<float> state;
  for (Param* p : self.Params()) state.insert(state.end(), p->value.begin(), p->value.end());
  for (auto* b : self.Buffers()) state.insert(state.end(), b->begin(), b->end());
  return state;
}

void Sequential::LoadStateVector(const std::vector<float>& state) {
  std::size_t offset = 0;
  auto take = [&](std::vector<float>& dst) {
    if (offset + dst.size() > state.size()) {
      throw CorruptionError("model state vector too short for architecture");
    }
    std::copy_n(state.begin() + static_cast<std::ptrdiff_t>(offset), dst.size(), dst.begin());
    offset += dst.size();
  };
  for (Param* p : Params()) take(p->value);
  for (auto* b : Buffers()) take(*b);
  if (offset != state.size()) {
    throw CorruptionError("model state vector longer than architecture");
  }
}

std::uint64_t Sequential::StateHash() const {
  return HashFloats(StateVector());
}

void Adam::Step(const std::vector<Param*>& params) {
  if (m_.empty()) {
    for (Param* p : params) {
      m_.emplace_back(p->value.size(), 0.0f);
      v_.emplace_back(p->value.size(), 0.0f);
    }
  }
  if (m_.size() != params.size()) {
    throw ContractError("Adam: parameter list changed between steps");
  }
  ++step_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  const float step_size = static_cast<float>(lr_ * std::sqrt(c2) / c1);
  const float eps_hat = static_cast<float>(eps_ * std::sqrt(c2));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const float g = p.grad[i];
      m[i] = beta1_ * m[i] + (1.0f - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0f - beta2_) * g * g;
      p.value[i] -= step_size * m[i] / (std::sqrt(v[i]) + eps_hat);
    }
  }
}

}  // namespace advface::nn
