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

#include "hyfl/bit_io.h"

#include <string>

#include "hyfl/errors.h"

namespace hyfl {

void BitWriter::Write(uint32_t value, int nbits) {
  for (int b = nbits - 1; b >= 0; --b) {
    if (bits_ % 8 == 0) bytes_.push_back(0);
    if ((value >> b) & 1u) bytes_.back() |= static_cast<uint8_t>(0x80u >> (bits_ % 8));
    ++bits_;
  }
}

BitReader::BitReader(std::span<const uint8_t> bytes, uint64_t bit_limit)
    : bytes_(bytes), limit_(bit_limit) {
  if ((limit_ + 7) / 8 > bytes_.size()) {
    throw CorruptStreamError("declared " + std::to_string(limit_) + " bits but only " +
                             std::to_string(bytes_.size()) + " bytes present");
  }
}

uint32_t BitReader::Read(int nbits) {
  if (pos_ + nbits > limit_) {
    throw CorruptStreamError("bit read past declared length " + std::to_string(limit_));
  }
  uint32_t v = 0;
  for (int b = 0; b < nbits; ++b, ++pos_) {
    v = (v << 1) | ((bytes_[pos_ / 8] >> (7 - pos_ % 8)) & 1u);
  }
  return v;
}

int BitsPerIndex(int n_z) {
  if (n_z < 2) throw ConfigError("n_z must be >= 2, got " + std::to_string(n_z));
  int bits = 0;
  while ((1 << bits) < n_z) ++bits;
  return bits;
}

PackedBits PackIndices(const MaskedIndexMap& masked, int n_z) {
  const int width = BitsPerIndex(n_z);
  BitWriter w;
  for (const auto& [pos, index] : masked.kept) {
    if (index < 0 || index >= n_z) {
      throw EncodeError("index " + std::to_string(index) + " at position " + std::to_string(pos) +
                        " outside [0, " + std::to_string(n_z) + ")");
    }
    w.Write(static_cast<uint32_t>(index), width);
  }
  PackedBits out;
  out.bit_length = static_cast<uint32_t>(w.bit_count());
  out.bytes = w.Take();
  return out;
}

MaskedIndexMap UnpackIndices(const PackedBits& bits, MaskSchedule schedule, int height, int width,
                             int n_z) {
  const int per = BitsPerIndex(n_z);
  const int count = schedule.KeptCount(height, width);
  if (bits.bit_length != static_cast<uint64_t>(count) * per) {
    throw CorruptStreamError("index substream has " + std::to_string(bits.bit_length) +
                             " bits, schedule " + schedule.name() + " needs " +
                             std::to_string(count * per));
  }
  BitReader r(bits.bytes, bits.bit_length);
  std::vector<int> kept(count);
  for (int k = 0; k < count; ++k) {
    const uint32_t v = r.Read(per);
    if (v >= static_cast<uint32_t>(n_z)) {
      throw CorruptStreamError("decoded index " + std::to_string(v) + " >= n_z " +
                               std::to_string(n_z));
    }
    kept[k] = static_cast<int>(v);
  }
  return MakeMaskedIndexMap(schedule, height, width, kept);
}

}  // namespace hyfl
