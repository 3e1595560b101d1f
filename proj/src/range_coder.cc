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

#include "hyfl/range_coder.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "hyfl/errors.h"

namespace hyfl {
namespace {

constexpr uint32_t kTop = 1u << 24;

}  // namespace

CdfTable CdfTable::FromFrequencies(std::span<const uint32_t> freqs) {
  if (freqs.empty()) throw ConfigError("empty frequency table");
  CdfTable t;
  t.cdf_.assign(1, 0);
  uint64_t acc = 0;
  for (uint32_t f : freqs) {
    if (f == 0) throw ConfigError("zero frequency in CDF table");
    acc += f;
    if (acc > kCdfTotal) break;
    t.cdf_.push_back(static_cast<uint32_t>(acc));
  }
  if (acc != kCdfTotal) {
    throw ConfigError("frequencies sum to " + std::to_string(acc) + ", expected " +
                      std::to_string(kCdfTotal));
  }
  return t;
}

CdfTable CdfTable::FromProbabilities(std::span<const double> probs) {
  const size_t n = probs.size();
  if (n == 0 || n > kCdfTotal) throw ConfigError("bad alphabet size " + std::to_string(n));
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ConfigError("invalid probability");
    sum += p;
  }
  if (!(sum > 0.0)) throw ConfigError("probabilities sum to zero");
  const uint32_t spare = kCdfTotal - static_cast<uint32_t>(n);
  std::vector<uint32_t> freqs(n);
  uint64_t used = 0;
  size_t best = 0;
  for (size_t s = 0; s < n; ++s) {
    freqs[s] = 1 + static_cast<uint32_t>(std::floor(probs[s] / sum * spare));
    used += freqs[s];
    if (probs[s] > probs[best]) best = s;
  }
  freqs[best] += static_cast<uint32_t>(kCdfTotal - used);
  return FromFrequencies(freqs);
}

CdfTable CdfTable::Uniform(int n) {
  std::vector<double> p(n, 1.0);
  return FromProbabilities(p);
}

double CdfTable::Bits(int s) const {
  return kCdfPrecision - std::log2(static_cast<double>(freq(s)));
}

int CdfTable::Lookup(uint32_t value) const {
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), value);
  return static_cast<int>(it - cdf_.begin()) - 1;
}

void RangeEncoder::Carry() {
  for (auto it = out_.rbegin(); it != out_.rend(); ++it) {
    if (++*it != 0) return;
  }
}

void RangeEncoder::Encode(const CdfTable& table, int symbol) {
  if (symbol < 0 || symbol >= table.size()) {
    throw EncodeError("symbol " + std::to_string(symbol) + " outside alphabet of " +
                      std::to_string(table.size()));
  }
  const uint32_t r = range_ >> kCdfPrecision;
  low_ += static_cast<uint64_t>(r) * table.start(symbol);
  if (low_ >> 32) {
    Carry();
    low_ &= 0xFFFFFFFFu;
  }
  range_ = r * table.freq(symbol);
  while (range_ < kTop) {
    out_.push_back(static_cast<uint8_t>(low_ >> 24));
    low_ = (low_ << 8) & 0xFFFFFFFFu;
    range_ <<= 8;
  }
}

std::vector<uint8_t> RangeEncoder::Finish() {
  // Any value in [low, low + range) decodes correctly. Round low up to a
  // byte boundary of the top byte; range >= 2^24 keeps it inside.
  low_ = (low_ + kTop - 1) & ~static_cast<uint64_t>(kTop - 1);
  if (low_ >> 32) {
    Carry();
    low_ &= 0xFFFFFFFFu;
  }
  out_.push_back(static_cast<uint8_t>(low_ >> 24));
  while (!out_.empty() && out_.back() == 0) out_.pop_back();
  low_ = 0;
  range_ = 0xFFFFFFFFu;
  return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const uint8_t> bytes) : bytes_(bytes) {
  for (int k = 0; k < 4; ++k) code_ = (code_ << 8) | Next();
}

int RangeDecoder::Decode(const CdfTable& table) {
  const uint32_t r = range_ >> kCdfPrecision;
  const uint32_t v = code_ / r;
  if (v >= kCdfTotal) throw CorruptStreamError("range decoder value outside table");
  const int s = table.Lookup(v);
  code_ -= r * table.start(s);
  range_ = r * table.freq(s);
  while (range_ < kTop) {
    code_ = (code_ << 8) | Next();
    range_ <<= 8;
  }
  return s;
}

std::vector<uint8_t> RcEncode(std::span<const int> symbols, const CdfTable& table) {
  RangeEncoder enc;
  for (int s : symbols) enc.Encode(table, s);
  return enc.Finish();
}

std::vector<int> RcDecode(std::span<const uint8_t> bytes, size_t count, const CdfTable& table) {
  RangeDecoder dec(bytes);
  std::vector<int> out(count);
  for (size_t k = 0; k < count; ++k) out[k] = dec.Decode(table);
  return out;
}

double IdealBits(std::span<const int> symbols, const CdfTable& table) {
  double bits = 0.0;
  for (int s : symbols) bits += table.Bits(s);
  return bits;
}

}  // namespace hyfl
