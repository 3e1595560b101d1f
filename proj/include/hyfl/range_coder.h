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

#ifndef HYFL_RANGE_CODER_H_
#define HYFL_RANGE_CODER_H_

#include <cstdint>
#include <span>
#include <vector>

namespace hyfl {

inline constexpr int kCdfPrecision = 16;
inline constexpr uint32_t kCdfTotal = 1u << kCdfPrecision;

// Frozen cumulative frequency table. cdf[0] == 0, cdf[n] == kCdfTotal and
// every symbol has frequency >= 1.
class CdfTable {
 public:
  CdfTable() = default;
  // Throws ConfigError unless freqs are all positive and sum to kCdfTotal.
  static CdfTable FromFrequencies(std::span<const uint32_t> freqs);
  // Quantizes a probability vector; every symbol keeps frequency >= 1 and
  // the rounding remainder goes to the most probable symbol.
  static CdfTable FromProbabilities(std::span<const double> probs);
  static CdfTable Uniform(int n);

  int size() const { return static_cast<int>(cdf_.size()) - 1; }
  uint32_t start(int s) const { return cdf_[s]; }
  uint32_t freq(int s) const { return cdf_[s + 1] - cdf_[s]; }
  // Ideal code length in bits.
  double Bits(int s) const;
  // Symbol s with start(s) <= value < start(s + 1).
  int Lookup(uint32_t value) const;
  const std::vector<uint32_t>& cdf() const { return cdf_; }

  bool operator==(const CdfTable&) const = default;

 private:
  std::vector<uint32_t> cdf_;
};

// 32-bit range coder with carry propagation into the output buffer.
class RangeEncoder {
 public:
  void Encode(const CdfTable& table, int symbol);
  // Terminates the stream. Trailing zero bytes are dropped; the decoder
  // reads zeros past the end.
  std::vector<uint8_t> Finish();

 private:
  void Carry();

  uint64_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  std::vector<uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const uint8_t> bytes);
  // Throws CorruptStreamError when the input cannot come from the encoder.
  int Decode(const CdfTable& table);

 private:
  uint8_t Next() { return pos_ < bytes_.size() ? bytes_[pos_++] : (++pos_, 0); }

  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  // Offset of the code value from the interval's low end.
  uint32_t code_ = 0;
};

std::vector<uint8_t> RcEncode(std::span<const int> symbols, const CdfTable& table);
std::vector<int> RcDecode(std::span<const uint8_t> bytes, size_t count, const CdfTable& table);

// Sum of ideal code lengths.
double IdealBits(std::span<const int> symbols, const CdfTable& table);

}  // namespace hyfl

#endif  // HYFL_RANGE_CODER_H_
