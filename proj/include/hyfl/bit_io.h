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

#ifndef HYFL_BIT_IO_H_
#define HYFL_BIT_IO_H_

#include <cstdint>
#include <span>
#include <vector>

#include "hyfl/masking.h"

namespace hyfl {

// MSB-first bit appender. The final partial byte is zero-padded.
class BitWriter {
 public:
  void Write(uint32_t value, int nbits);
  uint64_t bit_count() const { return bits_; }
  const std::vector<uint8_t>& bytes() const { return bytes_; }
  std::vector<uint8_t> Take() { return std::move(bytes_); }

 private:
  std::vector<uint8_t> bytes_;
  uint64_t bits_ = 0;
};

// MSB-first reader limited to a declared bit length. Reading past the limit
// throws CorruptStreamError; bytes past the limit are never touched.
class BitReader {
 public:
  BitReader(std::span<const uint8_t> bytes, uint64_t bit_limit);
  uint32_t Read(int nbits);
  uint64_t position() const { return pos_; }

 private:
  std::span<const uint8_t> bytes_;
  uint64_t limit_;
  uint64_t pos_ = 0;
};

// ceil(log2 n_z); n_z >= 2.
int BitsPerIndex(int n_z);

struct PackedBits {
  std::vector<uint8_t> bytes;
  uint32_t bit_length = 0;

  bool operator==(const PackedBits&) const = default;
};

// Kept indices, keep order, fixed width. Throws EncodeError on an index
// outside [0, n_z).
PackedBits PackIndices(const MaskedIndexMap& masked, int n_z);

// Inverse of PackIndices for the given schedule and grid. Throws
// CorruptStreamError if the bit length disagrees with the schedule or an
// index decodes to >= n_z.
MaskedIndexMap UnpackIndices(const PackedBits& bits, MaskSchedule schedule, int height, int width,
                             int n_z);

}  // namespace hyfl

#endif  // HYFL_BIT_IO_H_
