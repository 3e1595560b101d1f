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

#include "hyfl/complexity.h"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>

#include "hyfl/byte_io.h"
#include "hyfl/errors.h"

namespace hyfl {
namespace {

constexpr char kStatsMagic[4] = {'H', 'Y', 'C', 'S'};
constexpr uint32_t kStatsVersion = 1;

double HistogramEntropy(const std::array<uint64_t, 256>& hist, uint64_t total) {
  double h = 0.0;
  for (uint64_t c : hist) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log2(p);
  }
  return h;
}

// Planner calls are not thread-safe in FFTW.
std::mutex& PlannerMutex() {
  static std::mutex mu;
  return mu;
}

// Fraction of non-DC spectral energy outside the centered H/4 x W/4 band.
double HighFrequencyFraction(const std::vector<double>& gray, int h, int w) {
  fftw_complex* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * h * w));
  for (int k = 0; k < h * w; ++k) {
    buf[k][0] = gray[k];
    buf[k][1] = 0.0;
  }
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(PlannerMutex());
    plan = fftw_plan_dft_2d(h, w, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
  }
  fftw_execute(plan);

  // Low band in centered coordinates: [n/2 - n/8, n/2 + n/8).
  const int lo_h = h / 2 - h / 8, hi_h = h / 2 + h / 8;
  const int lo_w = w / 2 - w / 8, hi_w = w / 2 + w / 8;
  double ac = 0.0, high = 0.0;
  for (int u = 0; u < h; ++u) {
    const int su = (u + h / 2) % h;
    for (int v = 0; v < w; ++v) {
      if (u == 0 && v == 0) continue;
      const int sv = (v + w / 2) % w;
      const double re = buf[u * w + v][0], im = buf[u * w + v][1];
      const double e = re * re + im * im;
      ac += e;
      if (su < lo_h || su >= hi_h || sv < lo_w || sv >= hi_w) high += e;
    }
  }
  {
    std::lock_guard<std::mutex> lock(PlannerMutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(buf);
  return high / ac;
}

}  // namespace

ComplexityMetrics MeasureComplexity(const Tensor& region) {
  if (region.rank() != 3 || region.dim(0) != 3) {
    throw DimensionError("complexity region must be 3xHxW, got " + ShapeToString(region.shape()));
  }
  const int h = region.dim(1), w = region.dim(2);
  const int n = h * w;
  const double* px = region.data();

  std::array<std::array<uint64_t, 256>, 3> chan{};
  std::array<uint64_t, 256> gray_hist{};
  std::vector<double> gray(n);
  for (int k = 0; k < n; ++k) {
    const int r = ToLevel(px[k]), g = ToLevel(px[n + k]), b = ToLevel(px[2 * n + k]);
    ++chan[0][r];
    ++chan[1][g];
    ++chan[2][b];
    const double y = 0.299 * r + 0.587 * g + 0.114 * b;
    gray[k] = y / 255.0;
    ++gray_hist[std::min(255, static_cast<int>(y + 0.5))];
  }

  ComplexityMetrics m;
  m.entropy = HistogramEntropy(gray_hist, n);

  // Flat tiles are pinned to exact zeros so round-off in the mean or the
  // transform cannot leak into the calibrated minima.
  const bool flat =
      std::all_of(gray.begin(), gray.end(), [&](double v) { return v == gray[0]; });
  double mean = 0.0;
  for (double y : gray) mean += y;
  mean /= n;
  double var = 0.0;
  for (double y : gray) var += (y - mean) * (y - mean);
  m.contrast = flat ? 0.0 : std::sqrt(var / n);

  m.histogram_entropy = (HistogramEntropy(chan[0], n) + HistogramEntropy(chan[1], n) +
                         HistogramEntropy(chan[2], n)) /
                        3.0;
  m.high_frequency = flat ? 0.0 : HighFrequencyFraction(gray, h, w);
  return m;
}

std::vector<uint8_t> ComplexityStats::Serialize() const {
  ByteWriter w;
  w.Bytes(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(kStatsMagic), 4));
  w.U32(kStatsVersion);
  for (int k = 0; k < 4; ++k) {
    w.F64(min[k]);
    w.F64(max[k]);
  }
  return w.Take();
}

ComplexityStats ComplexityStats::Deserialize(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.Str(4) != std::string(kStatsMagic, 4)) {
    throw ParseError(ParseError::Kind::kBadMagic, "not a complexity stats file");
  }
  const uint32_t version = r.U32();
  if (version != kStatsVersion) {
    throw ParseError(ParseError::Kind::kUnknownVersion,
                     "complexity stats version " + std::to_string(version));
  }
  ComplexityStats s;
  for (int k = 0; k < 4; ++k) {
    s.min[k] = r.F64();
    s.max[k] = r.F64();
    if (!(s.max[k] >= s.min[k])) {
      throw ParseError(ParseError::Kind::kInconsistent, "complexity stats max < min");
    }
  }
  s.calibrated = true;
  return s;
}

void ComplexityStats::Save(const std::string& path) const { WriteFileBytes(path, Serialize()); }

ComplexityStats ComplexityStats::Load(const std::string& path) {
  return Deserialize(ReadFileBytes(path));
}

double NormalizedScore(const ComplexityMetrics& m, const ComplexityStats& stats) {
  if (!stats.calibrated) throw ConfigError("complexity stats are not calibrated");
  const auto raw = m.AsArray();
  double sum = 0.0;
  for (int k = 0; k < 4; ++k) {
    const double range = stats.max[k] - stats.min[k];
    double v = range > 0.0 ? (raw[k] - stats.min[k]) / range : 0.5;
    sum += std::clamp(v, 0.0, 1.0);
  }
  return sum / 4.0;
}

double ComplexityScore(const Tensor& region, const ComplexityStats& stats) {
  if (!stats.calibrated) throw ConfigError("complexity stats are not calibrated");
  return NormalizedScore(MeasureComplexity(region), stats);
}

MaskSchedule SelectSchedule(double score) {
  if (score < kEasyThreshold) return MaskSchedule(MaskKind::k1_9);
  if (score > kHardThreshold) return MaskSchedule(MaskKind::k1_2);
  return MaskSchedule(MaskKind::k1_4);
}

ComplexityStats Calibrate(std::span<const Tensor> tiles) {
  if (tiles.empty()) throw ConfigError("calibration corpus is empty");
  ComplexityStats s;
  s.min.fill(INFINITY);
  s.max.fill(-INFINITY);
  for (const Tensor& t : tiles) {
    const auto raw = MeasureComplexity(t).AsArray();
    for (int k = 0; k < 4; ++k) {
      s.min[k] = std::min(s.min[k], raw[k]);
      s.max[k] = std::max(s.max[k], raw[k]);
    }
  }
  s.calibrated = true;
  return s;
}

}  // namespace hyfl
