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

#ifndef HYFL_COMPLEXITY_H_
#define HYFL_COMPLEXITY_H_

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hyfl/masking.h"
#include "hyfl/tensor.h"

namespace hyfl {

// Raw per-tile measurements. Order matches ComplexityStats arrays.
struct ComplexityMetrics {
  double entropy = 0.0;            // gray-level Shannon entropy, bits
  double contrast = 0.0;           // RMS contrast of gray / 255
  double histogram_entropy = 0.0;  // mean of the R, G, B histogram entropies
  double high_frequency = 0.0;     // AC energy fraction outside the low band

  std::array<double, 4> AsArray() const {
    return {entropy, contrast, histogram_entropy, high_frequency};
  }
};

// Maps a [-1, 1] value to the 8-bit level used by all histogram metrics.
inline int ToLevel(double v) {
  double s = (v + 1.0) * 127.5;
  if (!(s > 0.0)) return 0;
  if (s > 255.0) return 255;
  return static_cast<int>(s + 0.5);
}

// region: 3 x H x W in [-1, 1].
ComplexityMetrics MeasureComplexity(const Tensor& region);

struct ComplexityStats {
  std::array<double, 4> min{};
  std::array<double, 4> max{};
  bool calibrated = false;

  std::vector<uint8_t> Serialize() const;
  static ComplexityStats Deserialize(std::span<const uint8_t> bytes);
  void Save(const std::string& path) const;
  static ComplexityStats Load(const std::string& path);

  bool operator==(const ComplexityStats&) const = default;
};

// Min-max normalizes each metric (degenerate range -> 0.5), clamps to [0, 1]
// and averages. Throws ConfigError when stats are not calibrated.
double NormalizedScore(const ComplexityMetrics& m, const ComplexityStats& stats);
double ComplexityScore(const Tensor& region, const ComplexityStats& stats);

inline constexpr double kEasyThreshold = 0.24;
inline constexpr double kHardThreshold = 0.77;

MaskSchedule SelectSchedule(double score);

// Per-metric min/max over the given tiles. Throws ConfigError if empty.
ComplexityStats Calibrate(std::span<const Tensor> tiles);

}  // namespace hyfl

#endif  // HYFL_COMPLEXITY_H_
