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

#ifndef HYFL_CONTAINER_H_
#define HYFL_CONTAINER_H_

#include <cstdint>
#include <span>
#include <vector>

#include "hyfl/bit_io.h"
#include "hyfl/masking.h"

namespace hyfl {

inline constexpr uint8_t kContainerVersion = 1;
// Pixels per token along each axis.
inline constexpr int kTokenStride = 16;

struct ContainerHeader {
  uint8_t version = kContainerVersion;
  uint16_t width = 0;
  uint16_t height = 0;
  uint16_t tile = 256;
  uint16_t n_z = 1024;

  int TilesX() const { return (width + tile - 1) / tile; }
  int TilesY() const { return (height + tile - 1) / tile; }
  int TileCount() const { return TilesX() * TilesY(); }
  int GridSide() const { return tile / kTokenStride; }

  bool operator==(const ContainerHeader&) const = default;
};

struct TileRecord {
  MaskSchedule schedule;
  PackedBits index;
  // Serialized continuous substream; empty when the stream is off.
  PackedBits cont;

  bool operator==(const TileRecord&) const = default;
};

// The transmission unit: header then row-major tile records.
struct Container {
  ContainerHeader header;
  std::vector<TileRecord> tiles;

  bool operator==(const Container&) const = default;
};

// Layout, integers little-endian:
//   "HYFL" | u8 version | u16 width | u16 height | u16 tile | u16 n_z
//   per tile: u8 schedule | u32 index_bits | index bytes
//             | u32 cont_bits | cont bytes
std::vector<uint8_t> WriteContainer(const Container& c);
// Throws ParseError with a kind per failure class. A successful parse is
// structurally valid: tile count, schedule codes and index bit lengths agree
// with the header.
Container ReadContainer(std::span<const uint8_t> bytes);

inline constexpr int kContainerHeaderBytes = 13;
inline constexpr int kTileFramingBytes = 9;

// Continuous substream:
//   u16 symbol_count | u8 channels | u8 side | payload bytes | u32 payload_bits
struct ContinuousSubstream {
  uint16_t symbol_count = 0;
  uint8_t channels = 0;
  uint8_t side = 0;
  std::vector<uint8_t> payload;
  uint32_t payload_bits = 0;

  bool operator==(const ContinuousSubstream&) const = default;
};

PackedBits SerializeContinuous(const ContinuousSubstream& s);
// Throws CorruptStreamError on inconsistent framing.
ContinuousSubstream ParseContinuous(const PackedBits& bits);

struct BppBreakdown {
  uint64_t pixels = 0;
  uint64_t total_bits = 0;
  uint64_t header_bits = 0;  // all framing and padding
  uint64_t index_bits = 0;
  uint64_t continuous_bits = 0;

  double total_bpp() const { return static_cast<double>(total_bits) / pixels; }
  double header_bpp() const { return static_cast<double>(header_bits) / pixels; }
  double index_bpp() const { return static_cast<double>(index_bits) / pixels; }
  double continuous_bpp() const { return static_cast<double>(continuous_bits) / pixels; }
};

// Throws ConfigError for a zero-pixel image.
BppBreakdown ComputeBpp(const Container& c);

}  // namespace hyfl

#endif  // HYFL_CONTAINER_H_
