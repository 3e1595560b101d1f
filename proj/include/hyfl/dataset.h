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

#ifndef HYFL_DATASET_H_
#define HYFL_DATASET_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hyfl/rng.h"
#include "hyfl/tensor.h"

namespace hyfl {

enum class TextureKind { kFlat, kGradient, kStripes, kChecker, kBlobs, kNoise };

inline constexpr TextureKind kAllTextureKinds[] = {TextureKind::kFlat,    TextureKind::kGradient,
                                                   TextureKind::kStripes, TextureKind::kChecker,
                                                   TextureKind::kBlobs,   TextureKind::kNoise};

std::string TextureName(TextureKind kind);

// [3, height, width] in [-1, 1]. Patterns are laid out in units of `scale`
// pixels so crops of a large texture look like small textures.
Tensor MakeTexture(TextureKind kind, int height, int width, Rng& rng, int scale = 256);

// `count` textures cycling through every kind.
std::vector<Tensor> MakeTextureCorpus(int count, int size, uint64_t seed);

// [C, H, W] window at (y, x).
Tensor Crop(const Tensor& image, int y, int x, int h, int w);
Tensor RandomCrop(const Tensor& image, int size, Rng& rng);
// One of the 8 flips/rotations of a square [C, S, S] image; 0 is identity.
Tensor Dihedral(const Tensor& image, int transform);
// Channel permutation `transform % 6` of a [3, H, W] image, negated when
// transform >= 6 (12 variants; 0 is identity).
Tensor ColorVariant(const Tensor& image, int transform);
// Stacks equal-shape [C, H, W] tensors into [N, C, H, W].
Tensor Stack(std::span<const Tensor> items);
// Item n of an [N, ...] tensor.
Tensor Unstack(const Tensor& batch, int n);

}  // namespace hyfl

#endif  // HYFL_DATASET_H_
