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

#include "hyfl/masking.h"

#include "hyfl/errors.h"

namespace hyfl {

std::optional<MaskSchedule> MaskSchedule::FromCode(uint8_t code) {
  if (code > static_cast<uint8_t>(MaskKind::kFull)) return std::nullopt;
  return MaskSchedule(static_cast<MaskKind>(code));
}

std::optional<MaskSchedule> MaskSchedule::Parse(std::string_view name) {
  for (MaskSchedule s : kAllSchedules) {
    if (s.name() == name) return s;
  }
  return std::nullopt;
}

std::string MaskSchedule::name() const {
  switch (kind_) {
    case MaskKind::kNone: return "none";
    case MaskKind::k1_2: return "1_2";
    case MaskKind::k1_4: return "1_4";
    case MaskKind::k1_9: return "1_9";
    case MaskKind::k1_16: return "1_16";
    case MaskKind::kFull: return "full";
  }
  return "?";
}

bool MaskSchedule::Keeps(int i, int j) const {
  switch (kind_) {
    case MaskKind::kNone: return true;
    case MaskKind::k1_2: return (i + j) % 2 == 0;
    case MaskKind::k1_4: return i % 2 == 0 && j % 2 == 0;
    case MaskKind::k1_9: return i % 3 == 1 && j % 3 == 1;
    case MaskKind::k1_16: return i % 4 == 1 && j % 4 == 1;
    case MaskKind::kFull: return false;
  }
  return false;
}

std::vector<int> MaskSchedule::KeptPositions(int height, int width) const {
  std::vector<int> out;
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      if (Keeps(i, j)) out.push_back(i * width + j);
    }
  }
  return out;
}

int MaskSchedule::KeptCount(int height, int width) const {
  return static_cast<int>(KeptPositions(height, width).size());
}

MaskedIndexMap ApplyMask(const IndexMap& indices, MaskSchedule schedule) {
  MaskedIndexMap out;
  out.schedule = schedule;
  out.height = indices.height;
  out.width = indices.width;
  out.mask.assign(indices.size(), true);
  for (int p : schedule.KeptPositions(indices.height, indices.width)) {
    out.kept.emplace_back(p, indices.indices[p]);
    out.mask[p] = false;
  }
  return out;
}

MaskedIndexMap MakeMaskedIndexMap(MaskSchedule schedule, int height, int width,
                                  const std::vector<int>& kept_indices) {
  const std::vector<int> positions = schedule.KeptPositions(height, width);
  if (positions.size() != kept_indices.size()) {
    throw DimensionError("schedule " + schedule.name() + " keeps " +
                         std::to_string(positions.size()) + " tokens, got " +
                         std::to_string(kept_indices.size()));
  }
  MaskedIndexMap out;
  out.schedule = schedule;
  out.height = height;
  out.width = width;
  out.mask.assign(static_cast<size_t>(height) * width, true);
  for (size_t k = 0; k < positions.size(); ++k) {
    out.kept.emplace_back(positions[k], kept_indices[k]);
    out.mask[positions[k]] = false;
  }
  return out;
}

}  // namespace hyfl
