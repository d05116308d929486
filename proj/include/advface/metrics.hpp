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

// Image-quality metrics on planar RGB images with intensities in [0, 1].

#ifndef ADVFACE_METRICS_HPP_
#define ADVFACE_METRICS_HPP_

#include <span>

#include "advface/data_io.hpp"

namespace advface::eval {

inline constexpr double kMseFloor = 1e-10;  // caps PSNR at 100 dB

double Mse(std::span<const float> a, std::span<const float> b);
double PsnrFromMse(double mse);
double Psnr(std::span<const float> a, std::span<const float> b);
// Mean local SSIM of the channel-mean gray images: 11x11 Gaussian window,
// sigma 1.5, valid positions only. Images under 11 pixels use one global
// window. Inputs are 3 x size x size planar.
double Ssim(std::span<const float> a, std::span<const float> b, int size);

double Mse(const data::FaceImage& a, const data::FaceImage& b);
double Psnr(const data::FaceImage& a, const data::FaceImage& b);
double Ssim(const data::FaceImage& a, const data::FaceImage& b);

}  // namespace advface::eval

#endif  // ADVFACE_METRICS_HPP_
