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

#include "hyfl/dataset.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>

#include "hyfl/errors.h"

namespace hyfl {
namespace {

using Color = std::array<double, 3>;

Color RandomColor(Rng& rng) {
  return {rng.Uniform(-0.9, 0.9), rng.Uniform(-0.9, 0.9), rng.Uniform(-0.9, 0.9)};
}

void Put(Tensor& t, int i, int j, const Color& c, double a = 1.0, const Color& b = {}) {
  const int h = t.dim(1), w = t.dim(2);
  for (int ch = 0; ch < 3; ++ch) t[(ch * h + i) * w + j] = a * c[ch] + (1.0 - a) * b[ch];
}

}  // namespace

std::string TextureName(TextureKind kind) {
  switch (kind) {
    case TextureKind::kFlat: return "flat";
    case TextureKind::kGradient: return "gradient";
    case TextureKind::kStripes: return "stripes";
    case TextureKind::kChecker: return "checker";
    case TextureKind::kBlobs: return "blobs";
    case TextureKind::kNoise: return "noise";
  }
  return "?";
}

Tensor MakeTexture(TextureKind kind, int height, int width, Rng& rng, int scale) {
  Tensor t({3, height, width});
  const Color c0 = RandomColor(rng), c1 = RandomColor(rng);
  const double angle = rng.Uniform(0.0, M_PI);
  const double ca = std::cos(angle), sa = std::sin(angle);
  switch (kind) {
    case TextureKind::kFlat:
      for (int i = 0; i < height; ++i)
        for (int j = 0; j < width; ++j) Put(t, i, j, c0);
      break;
    case TextureKind::kGradient:
      for (int i = 0; i < height; ++i) {
        for (int j = 0; j < width; ++j) {
          const double u = (ca * j + sa * i) / scale;
          Put(t, i, j, c1, std::clamp(0.5 + 0.5 * u, 0.0, 1.0), c0);
        }
      }
      break;
    case TextureKind::kStripes: {
      const double periods = rng.Uniform(1.0, 4.0);
      for (int i = 0; i < height; ++i) {
        for (int j = 0; j < width; ++j) {
          const double u = (ca * j + sa * i) / scale;
          Put(t, i, j, c1, 0.5 + 0.5 * std::sin(2 * M_PI * periods * u), c0);
        }
      }
      break;
    }
    case TextureKind::kChecker: {
      const int cell = std::max(2, scale / (2 << rng.Below(3)));
      for (int i = 0; i < height; ++i)
        for (int j = 0; j < width; ++j) Put(t, i, j, ((i / cell + j / cell) % 2) ? c1 : c0);
      break;
    }
    case TextureKind::kBlobs: {
      const int n = 3 + static_cast<int>(rng.Below(5));
      for (int i = 0; i < height; ++i)
        for (int j = 0; j < width; ++j) Put(t, i, j, c0);
      for (int b = 0; b < n; ++b) {
        const Color c = RandomColor(rng);
        const double cy = rng.Uniform(0, height), cx = rng.Uniform(0, width);
        const double r = scale * rng.Uniform(0.05, 0.25);
        for (int i = 0; i < height; ++i) {
          for (int j = 0; j < width; ++j) {
            const double d2 = ((i - cy) * (i - cy) + (j - cx) * (j - cx)) / (r * r);
            const double a = std::exp(-d2);
            for (int ch = 0; ch < 3; ++ch) {
              double& v = t[(ch * height + i) * width + j];
              v = a * c[ch] + (1.0 - a) * v;
            }
          }
        }
      }
      break;
    }
    case TextureKind::kNoise: {
      // Grain over a base color, independent per pixel and channel.
      const double amp = rng.Uniform(0.15, 0.3);
      for (int i = 0; i < height; ++i) {
        for (int j = 0; j < width; ++j) {
          for (int ch = 0; ch < 3; ++ch) {
            t[(ch * height + i) * width + j] =
                std::clamp(c0[ch] + rng.Uniform(-amp, amp), -1.0, 1.0);
          }
        }
      }
      break;
    }
  }
  return t;
}

std::vector<Tensor> MakeTextureCorpus(int count, int size, uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> out;
  for (int k = 0; k < count; ++k) {
    out.push_back(MakeTexture(kAllTextureKinds[k % 6], size, size, rng, size));
  }
  return out;
}

Tensor Crop(const Tensor& image, int y, int x, int h, int w) {
  ExpectRank(image, 3, "crop input");
  const int c = image.dim(0), H = image.dim(1), W = image.dim(2);
  if (y < 0 || x < 0 || y + h > H || x + w > W) {
    throw DimensionError("crop window outside " + ShapeToString(image.shape()));
  }
  Tensor out({c, h, w});
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < h; ++i)
      std::memcpy(out.data() + (ch * h + i) * w, image.data() + (ch * H + y + i) * W + x,
                  sizeof(double) * w);
  return out;
}

Tensor RandomCrop(const Tensor& image, int size, Rng& rng) {
  const int y = static_cast<int>(rng.Below(image.dim(1) - size + 1));
  const int x = static_cast<int>(rng.Below(image.dim(2) - size + 1));
  return Crop(image, y, x, size, size);
}

Tensor Dihedral(const Tensor& image, int transform) {
  ExpectRank(image, 3, "dihedral input");
  const int c = image.dim(0), s = image.dim(1);
  if (image.dim(2) != s) throw DimensionError("dihedral transform needs a square image");
  Tensor out({c, s, s});
  for (int ch = 0; ch < c; ++ch) {
    for (int i = 0; i < s; ++i) {
      for (int j = 0; j < s; ++j) {
        int y = i, x = j;
        if (transform & 4) std::swap(y, x);
        if (transform & 2) y = s - 1 - y;
        if (transform & 1) x = s - 1 - x;
        out[(ch * s + i) * s + j] = image[(ch * s + y) * s + x];
      }
    }
  }
  return out;
}

Tensor ColorVariant(const Tensor& image, int transform) {
  ExpectRank(image, 3, "color variant input");
  if (image.dim(0) != 3) throw DimensionError("color variant needs 3 channels");
  static constexpr int kPerm[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                      {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  const int* perm = kPerm[transform % 6];
  const double sign = transform >= 6 ? -1.0 : 1.0;
  const size_t plane = static_cast<size_t>(image.dim(1)) * image.dim(2);
  Tensor out(image.shape());
  for (int ch = 0; ch < 3; ++ch) {
    const double* src = image.data() + perm[ch] * plane;
    double* dst = out.data() + ch * plane;
    for (size_t k = 0; k < plane; ++k) dst[k] = sign * src[k];
  }
  return out;
}

Tensor Stack(std::span<const Tensor> items) {
  if (items.empty()) throw DimensionError("cannot stack zero tensors");
  Shape shape = items[0].shape();
  shape.insert(shape.begin(), static_cast<int>(items.size()));
  Tensor out(shape);
  const size_t each = items[0].size();
  for (size_t n = 0; n < items.size(); ++n) {
    if (items[n].shape() != items[0].shape()) {
      throw DimensionError("stack: " + ShapeToString(items[n].shape()) + " vs " +
                           ShapeToString(items[0].shape()));
    }
    std::memcpy(out.data() + n * each, items[n].data(), sizeof(double) * each);
  }
  return out;
}

Tensor Unstack(const Tensor& batch, int n) {
  Shape shape(batch.shape().begin() + 1, batch.shape().end());
  Tensor out(shape);
  std::memcpy(out.data(), batch.data() + n * out.size(), sizeof(double) * out.size());
  return out;
}

}  // namespace hyfl
