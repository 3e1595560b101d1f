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

#include "hyfl/container.h"

#include <string>

#include "hyfl/byte_io.h"
#include "hyfl/errors.h"

namespace hyfl {
namespace {

constexpr char kMagic[4] = {'H', 'Y', 'F', 'L'};

size_t BytesFor(uint64_t bits) { return static_cast<size_t>((bits + 7) / 8); }

void WriteBits(ByteWriter& w, const PackedBits& b, const char* what) {
  if (b.bytes.size() != BytesFor(b.bit_length)) {
    throw EncodeError(std::string(what) + " substream: " + std::to_string(b.bit_length) +
                      " bits in " + std::to_string(b.bytes.size()) + " bytes");
  }
  w.U32(b.bit_length);
  w.Bytes(b.bytes);
}

PackedBits ReadBits(ByteReader& r) {
  PackedBits b;
  b.bit_length = r.U32();
  auto bytes = r.Bytes(BytesFor(b.bit_length));
  b.bytes.assign(bytes.begin(), bytes.end());
  return b;
}

ParseError Inconsistent(const std::string& what) {
  return ParseError(ParseError::Kind::kInconsistent, what);
}

}  // namespace

std::vector<uint8_t> WriteContainer(const Container& c) {
  const ContainerHeader& h = c.header;
  if (static_cast<int>(c.tiles.size()) != h.TileCount()) {
    throw EncodeError("container has " + std::to_string(c.tiles.size()) + " tiles, header needs " +
                      std::to_string(h.TileCount()));
  }
  ByteWriter w;
  w.Str(std::string_view(kMagic, 4));
  w.U8(h.version);
  w.U16(h.width);
  w.U16(h.height);
  w.U16(h.tile);
  w.U16(h.n_z);
  for (const TileRecord& t : c.tiles) {
    w.U8(t.schedule.code());
    WriteBits(w, t.index, "index");
    WriteBits(w, t.cont, "continuous");
  }
  return w.Take();
}

Container ReadContainer(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || r.Str(4) != std::string(kMagic, 4)) {
    throw ParseError(ParseError::Kind::kBadMagic, "missing HYFL magic");
  }
  Container c;
  ContainerHeader& h = c.header;
  h.version = r.U8();
  if (h.version != kContainerVersion) {
    throw ParseError(ParseError::Kind::kUnknownVersion,
                     "unknown container version " + std::to_string(h.version));
  }
  h.width = r.U16();
  h.height = r.U16();
  h.tile = r.U16();
  h.n_z = r.U16();
  if (h.tile == 0 || h.tile % kTokenStride != 0) {
    throw Inconsistent("tile size " + std::to_string(h.tile) + " is not a multiple of " +
                       std::to_string(kTokenStride));
  }
  if (h.n_z < 2) throw Inconsistent("n_z " + std::to_string(h.n_z) + " < 2");
  const int per_index = BitsPerIndex(h.n_z);
  const int side = h.GridSide();
  const int count = h.TileCount();
  c.tiles.reserve(count);
  for (int k = 0; k < count; ++k) {
    TileRecord t;
    const uint8_t code = r.U8();
    auto schedule = MaskSchedule::FromCode(code);
    if (!schedule) {
      throw Inconsistent("tile " + std::to_string(k) + ": unknown schedule code " +
                         std::to_string(code));
    }
    t.schedule = *schedule;
    t.index = ReadBits(r);
    const uint64_t want = static_cast<uint64_t>(t.schedule.KeptCount(side, side)) * per_index;
    if (t.index.bit_length != want) {
      throw Inconsistent("tile " + std::to_string(k) + ": index substream has " +
                         std::to_string(t.index.bit_length) + " bits, schedule needs " +
                         std::to_string(want));
    }
    t.cont = ReadBits(r);
    c.tiles.push_back(std::move(t));
  }
  if (r.remaining() != 0) {
    throw Inconsistent(std::to_string(r.remaining()) + " trailing bytes after last tile");
  }
  return c;
}

PackedBits SerializeContinuous(const ContinuousSubstream& s) {
  if (s.payload.size() != BytesFor(s.payload_bits)) {
    throw EncodeError("continuous payload: " + std::to_string(s.payload_bits) + " bits in " +
                      std::to_string(s.payload.size()) + " bytes");
  }
  ByteWriter w;
  w.U16(s.symbol_count);
  w.U8(s.channels);
  w.U8(s.side);
  w.Bytes(s.payload);
  w.U32(s.payload_bits);
  PackedBits out;
  out.bytes = w.Take();
  out.bit_length = static_cast<uint32_t>(out.bytes.size() * 8);
  return out;
}

ContinuousSubstream ParseContinuous(const PackedBits& bits) {
  const size_t n = bits.bytes.size();
  if (bits.bit_length != n * 8 || n < 8) {
    throw CorruptStreamError("continuous substream framing: " + std::to_string(bits.bit_length) +
                             " bits in " + std::to_string(n) + " bytes");
  }
  ByteReader head(std::span<const uint8_t>(bits.bytes).first(4));
  ByteReader tail(std::span<const uint8_t>(bits.bytes).last(4));
  ContinuousSubstream s;
  s.symbol_count = head.U16();
  s.channels = head.U8();
  s.side = head.U8();
  s.payload_bits = tail.U32();
  s.payload.assign(bits.bytes.begin() + 4, bits.bytes.end() - 4);
  if (BytesFor(s.payload_bits) != s.payload.size()) {
    throw CorruptStreamError("continuous payload declares " + std::to_string(s.payload_bits) +
                             " bits but carries " + std::to_string(s.payload.size()) + " bytes");
  }
  if (s.symbol_count != 0 && s.symbol_count != s.channels * s.side * s.side) {
    throw CorruptStreamError("continuous symbol count " + std::to_string(s.symbol_count) +
                             " does not match " + std::to_string(s.channels) + "x" +
                             std::to_string(s.side) + "x" + std::to_string(s.side));
  }
  return s;
}

BppBreakdown ComputeBpp(const Container& c) {
  BppBreakdown b;
  b.pixels = static_cast<uint64_t>(c.header.width) * c.header.height;
  if (b.pixels == 0) throw ConfigError("bpp is undefined for a zero-pixel image");
  b.total_bits = 8ull * kContainerHeaderBytes;
  for (const TileRecord& t : c.tiles) {
    b.index_bits += t.index.bit_length;
    b.continuous_bits += t.cont.bit_length;
    b.total_bits += 8ull * (kTileFramingBytes + t.index.bytes.size() + t.cont.bytes.size());
  }
  b.header_bits = b.total_bits - b.index_bits - b.continuous_bits;
  return b;
}

}  // namespace hyfl
