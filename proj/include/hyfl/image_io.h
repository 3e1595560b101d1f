// Copyright 2026 The hyfl Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef HYFL_IMAGE_IO_H_
#define HYFL_IMAGE_IO_H_

#include <cstdint>
#include <string>
#include <vector>

#include "hyfl/tensor.h"

namespace hyfl {

// 8-bit RGB, row-major interleaved.
struct Rgb8Image {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;  // width * height * 3

  bool operator==(const Rgb8Image&) const = default;
};

// [3, H, W] in [-1, 1] <-> 8-bit (ToLevel rounding, clamped).
Rgb8Image ToRgb8(const Tensor& image);
Tensor FromRgb8(const Rgb8Image& image);

// PNG (any bit depth / color type, reduced to 8-bit RGB) or binary PPM (P6,
// maxval 255), chosen by file signature. Throws IoError.
Rgb8Image ReadRgb8(const std::string& path);
// Format chosen by extension: ".png", otherwise P6 PPM.
void WriteRgb8(const std::string& path, const Rgb8Image& image);

Tensor ReadImage(const std::string& path);
void WriteImage(const std::string& path, const Tensor& image);

// PSNR in dB of two [3, H, W] images after 8-bit quantization; identical
// inputs give kPsnrCap.
inline constexpr double kPsnrCap = 99.0;
double Psnr8(const Tensor& a, const Tensor& b);

}  // namespace hyfl

#endif  // HYFL_IMAGE_IO_H_
