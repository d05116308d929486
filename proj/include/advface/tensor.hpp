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

#ifndef ADVFACE_TENSOR_HPP_
#define ADVFACE_TENSOR_HPP_

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace advface {

// Per-sample shape (channels, height, width).
struct Shape {
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  friend bool operator==(const Shape&, const Shape&) = default;
  std::string ToString() const;
};

// Dense NCHW float tensor. Vectors are stored as N x C x 1 x 1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, Shape shape, float fill = 0.0f);
  Tensor(int n, int c, int h, int w, float fill = 0.0f)
      : Tensor(n, Shape{c, h, w}, fill) {}

  int n() const { return n_; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t sample_size() const { return shape_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& values() { return data_; }
  const std::vector<float>& values() const { return data_; }

  std::span<float> sample(int i) {
    return {data_.data() + static_cast<std::size_t>(i) * sample_size(),
            sample_size()};
  }
  std::span<const float> sample(int i) const {
    return {data_.data() + static_cast<std::size_t>(i) * sample_size(),
            sample_size()};
  }

  float& at(int n, int c, int h, int w) {
    return data_[((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) *
                     shape_.w + w];
  }
  float at(int n, int c, int h, int w) const {
    return data_[((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) *
                     shape_.w + w];
  }

  // Copies samples [begin, begin + count) into a new tensor.
  Tensor Slice(int begin, int count) const;
  // Gathers the listed samples in order.
  Tensor Gather(std::span<const int> indices) const;
  void SetSample(int i, std::span<const float> values);

  bool AllFinite() const;

  // Stacks equally shaped single samples into one batch.
  static Tensor Stack(std::span<const std::vector<float>> samples, Shape shape);

 private:
  int n_ = 0;
  Shape shape_;
  std::vector<float> data_;
};

}  // namespace advface

#endif  // ADVFACE_TENSOR_HPP_
