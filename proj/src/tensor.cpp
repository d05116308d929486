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

#include "advface/tensor.hpp"

#include <malloc.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "advface/error.hpp"

namespace advface {
namespace {

// Activations are large and short-lived; keep them on the heap instead of
// fresh mmap pages so repeated forward passes do not pay page-fault costs.
const bool kMallocTuned = [] {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  return true;
}();

}  // namespace

std::string Shape::ToString() const {
  std::ostringstream out;
  out << c << "x" << h << "x" << w;
  return out.str();
}

Tensor::Tensor(int n, Shape shape, float fill)
    : n_(n), shape_(shape),
      data_(static_cast<std::size_t>(n) * shape.size(), fill) {}

Tensor Tensor::Slice(int begin, int count) const {
  if (begin < 0 || count < 0 || begin + count > n_) {
    throw ContractError("tensor slice out of range");
  }
  Tensor out(count, shape_);
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(begin * sample_size()),
              static_cast<std::size_t>(count) * sample_size(), out.data_.begin());
  return out;
}

Tensor Tensor::Gather(std::span<const int> indices) const {
  Tensor out(static_cast<int>(indices.size()), shape_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int src = indices[i];
    if (src < 0 || src >= n_) throw ContractError("tensor gather out of range");
    std::copy_n(sample(src).begin(), sample_size(),
                out.sample(static_cast<int>(i)).begin());
  }
  return out;
}

void Tensor::SetSample(int i, std::span<const float> values) {
  if (values.size() != sample_size()) {
    throw ContractError("sample size mismatch: expected " + shape_.ToString());
  }
  std::copy(values.begin(), values.end(), sample(i).begin());
}

bool Tensor::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](float v) { return std::isfinite(v); });
}

Tensor Tensor::Stack(std::span<const std::vector<float>> samples, Shape shape) {
  Tensor out(static_cast<int>(samples.size()), shape);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.SetSample(static_cast<int>(i), samples[i]);
  }
  return out;
}

}  // namespace advface
