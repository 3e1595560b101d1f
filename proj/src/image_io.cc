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

#include "hyfl/image_io.h"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>

#include "hyfl/complexity.h"
#include "hyfl/errors.h"

namespace hyfl {
namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<FILE, FileCloser>;

File OpenFile(const std::string& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path + ": " + std::strerror(errno));
  return f;
}

Rgb8Image ReadPng(const std::string& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError("png " + path + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  Rgb8Image out;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError("png " + path + ": " + msg);
  }
  return out;
}

void WritePng(const std::string& path, const Rgb8Image& image) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = image.width;
  img.height = image.height;
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw IoError("png " + path + ": " + img.message);
  }
}

// Next whitespace-separated PPM header token, skipping comments.
std::string PpmToken(const std::vector<uint8_t>& bytes, size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < bytes.size() && !std::isspace(bytes[pos])) tok += static_cast<char>(bytes[pos++]);
  return tok;
}

Rgb8Image ParsePpm(const std::vector<uint8_t>& bytes, const std::string& path) {
  size_t pos = 0;
  if (PpmToken(bytes, pos) != "P6") throw IoError(path + ": not a P6 PPM or PNG file");
  int dims[3];
  for (int& d : dims) {
    const std::string tok = PpmToken(bytes, pos);
    char* end = nullptr;
    const long v = std::strtol(tok.c_str(), &end, 10);
    if (tok.empty() || *end != '\0' || v <= 0 || v > 65535) {
      throw IoError(path + ": bad PPM header field '" + tok + "'");
    }
    d = static_cast<int>(v);
  }
  if (dims[2] != 255) throw IoError(path + ": only maxval 255 PPM is supported");
  ++pos;  // single whitespace before the raster
  Rgb8Image out;
  out.width = dims[0];
  out.height = dims[1];
  const size_t n = static_cast<size_t>(out.width) * out.height * 3;
  if (bytes.size() < pos + n) throw IoError(path + ": truncated PPM raster");
  out.pixels.assign(bytes.begin() + pos, bytes.begin() + pos + n);
  return out;
}

bool EndsWith(const std::string& s, const char* suffix) {
  const size_t n = std::strlen(suffix);
  if (s.size() < n) return false;
  for (size_t k = 0; k < n; ++k) {
    if (std::tolower(s[s.size() - n + k]) != suffix[k]) return false;
  }
  return true;
}

}  // namespace

Rgb8Image ToRgb8(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("image must be [3,H,W], got " + ShapeToString(image.shape()));
  }
  Rgb8Image out;
  out.height = image.dim(1);
  out.width = image.dim(2);
  const size_t plane = static_cast<size_t>(out.width) * out.height;
  out.pixels.resize(plane * 3);
  for (size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < 3; ++c) out.pixels[p * 3 + c] = ToLevel(image[c * plane + p]);
  }
  return out;
}

Tensor FromRgb8(const Rgb8Image& image) {
  const size_t plane = static_cast<size_t>(image.width) * image.height;
  if (image.pixels.size() != plane * 3) throw DimensionError("rgb8 buffer size mismatch");
  Tensor out({3, image.height, image.width});
  for (size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < 3; ++c) out[c * plane + p] = image.pixels[p * 3 + c] / 127.5 - 1.0;
  }
  return out;
}

Rgb8Image ReadRgb8(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  const std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  static constexpr uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0) return ReadPng(path);
  return ParsePpm(bytes, path);
}

void WriteRgb8(const std::string& path, const Rgb8Image& image) {
  if (EndsWith(path, ".png")) {
    WritePng(path, image);
    return;
  }
  File f = OpenFile(path, "wb");
  std::fprintf(f.get(), "P6\n%d %d\n255\n", image.width, image.height);
  if (std::fwrite(image.pixels.data(), 1, image.pixels.size(), f.get()) != image.pixels.size()) {
    throw IoError("short write to " + path);
  }
}

Tensor ReadImage(const std::string& path) { return FromRgb8(ReadRgb8(path)); }

void WriteImage(const std::string& path, const Tensor& image) { WriteRgb8(path, ToRgb8(image)); }

double Psnr8(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("psnr: " + ShapeToString(a.shape()) + " vs " + ShapeToString(b.shape()));
  }
  if (a.size() == 0) throw DimensionError("psnr of empty images");
  double se = 0;
  for (size_t k = 0; k < a.size(); ++k) {
    const double d = ToLevel(a[k]) - ToLevel(b[k]);
    se += d * d;
  }
  if (se == 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 * a.size() / se));
}

}  // namespace hyfl
