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

#ifndef HYFL_MASKING_H_
#define HYFL_MASKING_H_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hyfl/index_map.h"

namespace hyfl {

// Wire codes of the structured schedules.
enum class MaskKind : uint8_t {
  kNone = 0,
  k1_2 = 1,
  k1_4 = 2,
  k1_9 = 3,
  k1_16 = 4,
  kFull = 5,
};

// A fixed keep/mask lattice over the token grid:
//   1_2  keeps (i + j) even
//   1_4  keeps i even and j even
//   1_9  keeps i % 3 == 1 and j % 3 == 1
//   1_16 keeps i % 4 == 1 and j % 4 == 1
// NONE keeps everything and FULL keeps nothing.
class MaskSchedule {
 public:
  constexpr MaskSchedule() = default;
  constexpr explicit MaskSchedule(MaskKind kind) : kind_(kind) {}

  static std::optional<MaskSchedule> FromCode(uint8_t code);
  // Accepts "none", "1_2", "1_4", "1_9", "1_16", "full".
  static std::optional<MaskSchedule> Parse(std::string_view name);

  MaskKind kind() const { return kind_; }
  uint8_t code() const { return static_cast<uint8_t>(kind_); }
  std::string name() const;

  bool Keeps(int i, int j) const;
  // Keep positions (i * width + j) in row-major order.
  std::vector<int> KeptPositions(int height, int width) const;
  int KeptCount(int height, int width) const;

  bool operator==(const MaskSchedule&) const = default;

 private:
  MaskKind kind_ = MaskKind::kNone;
};

// The schedules in order of increasing sparsity.
inline constexpr MaskSchedule kAllSchedules[] = {
    MaskSchedule(MaskKind::kNone), MaskSchedule(MaskKind::k1_2),  MaskSchedule(MaskKind::k1_4),
    MaskSchedule(MaskKind::k1_9),  MaskSchedule(MaskKind::k1_16), MaskSchedule(MaskKind::kFull)};

struct MaskedIndexMap {
  MaskSchedule schedule;
  int height = 0;
  int width = 0;
  // (position, index) for kept positions in row-major keep order.
  std::vector<std::pair<int, int>> kept;
  // true where the token was dropped.
  std::vector<bool> mask;

  bool operator==(const MaskedIndexMap&) const = default;
};

MaskedIndexMap ApplyMask(const IndexMap& indices, MaskSchedule schedule);

// Rebuilds a MaskedIndexMap from kept indices listed in keep order.
MaskedIndexMap MakeMaskedIndexMap(MaskSchedule schedule, int height, int width,
                                  const std::vector<int>& kept_indices);

}  // namespace hyfl

#endif  // HYFL_MASKING_H_
