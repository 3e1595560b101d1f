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

#include "hyfl/params.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "hyfl/byte_io.h"
#include "hyfl/errors.h"

namespace hyfl {

namespace {

constexpr char kCheckpointMagic[4] = {'H', 'Y', 'C', 'K'};
constexpr uint32_t kCheckpointVersion = 1;

bool HasPrefix(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

}  // namespace

Parameter& ParameterStore::Add(const std::string& name, Tensor value, bool trainable) {
  if (params_.count(name)) throw ConfigError("duplicate parameter " + name);
  Parameter p;
  p.name = name;
  p.grad = Tensor(value.shape());
  p.m = Tensor(value.shape());
  p.v = Tensor(value.shape());
  p.value = std::move(value);
  p.trainable = trainable;
  return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParameterStore::Get(std::string_view name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter " + std::string(name));
  return it->second;
}

const Parameter& ParameterStore::Get(std::string_view name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter " + std::string(name));
  return it->second;
}

bool ParameterStore::Contains(std::string_view name) const {
  return params_.find(name) != params_.end();
}

void ParameterStore::Set(const std::string& name, Tensor value) {
  auto it = params_.find(name);
  if (it == params_.end()) {
    Add(name, std::move(value));
    return;
  }
  Parameter& p = it->second;
  if (p.value.shape() != value.shape()) {
    p.grad = Tensor(value.shape());
    p.m = Tensor(value.shape());
    p.v = Tensor(value.shape());
  }
  p.value = std::move(value);
}

std::vector<std::string> ParameterStore::Names(std::string_view prefix) const {
  std::vector<std::string> out;
  for (const auto& [name, p] : params_) {
    if (HasPrefix(name, prefix)) out.push_back(name);
  }
  return out;
}

void ParameterStore::SetTrainable(std::string_view prefix, bool trainable) {
  for (auto& [name, p] : params_) {
    if (HasPrefix(name, prefix)) p.trainable = trainable;
  }
}

void ParameterStore::ZeroGrad(std::string_view prefix) {
  for (auto& [name, p] : params_) {
    if (HasPrefix(name, prefix)) p.grad.Fill(0.0);
  }
}

size_t ParameterStore::NumValues(std::string_view prefix) const {
  size_t n = 0;
  for (const auto& [name, p] : params_) {
    if (HasPrefix(name, prefix)) n += p.value.size();
  }
  return n;
}

uint64_t ParameterStore::Hash(const std::function<bool(const Parameter&)>& pred) const {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, size_t n) {
    const auto* b = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, p] : params_) {
    if (!pred(p)) continue;
    mix(name.data(), name.size());
    mix(p.value.data(), p.value.size() * sizeof(double));
  }
  return h;
}

uint64_t ParameterStore::HashPrefix(std::string_view prefix) const {
  return Hash([prefix](const Parameter& p) { return HasPrefix(p.name, prefix); });
}

double CosineLearningRate(double base, double floor, int64_t step, int64_t total) {
  if (total <= 1) return base;
  const double t = std::clamp(static_cast<double>(step - 1) / (total - 1), 0.0, 1.0);
  return floor + 0.5 * (base - floor) * (1.0 + std::cos(M_PI * t));
}

void AdamStep(ParameterStore& store, const AdamOptions& opts, int64_t step) {
  AdamStep(store, opts, step, {});
}

void AdamStep(ParameterStore& store, const AdamOptions& opts, int64_t step,
              std::string_view prefix) {
  const double c1 = 1.0 - std::pow(opts.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(opts.beta2, static_cast<double>(step));
  for (auto& [name, p] : store) {
    if (!p.trainable || !name.starts_with(prefix)) continue;
    double* w = p.value.data();
    const double* g = p.grad.data();
    double* m = p.m.data();
    double* v = p.v.data();
    for (size_t i = 0; i < p.value.size(); ++i) {
      m[i] = opts.beta1 * m[i] + (1.0 - opts.beta1) * g[i];
      v[i] = opts.beta2 * v[i] + (1.0 - opts.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= opts.lr * mhat / (std::sqrt(vhat) + opts.eps);
    }
  }
}

std::vector<uint8_t> SerializeCheckpoint(const ParameterStore& store) {
  ByteWriter w;
  w.Str(std::string_view(kCheckpointMagic, 4));
  w.U32(kCheckpointVersion);
  uint32_t count = 0;
  for ([[maybe_unused]] const auto& kv : store) ++count;
  w.U32(count);
  for (const auto& [name, p] : store) {
    w.U32(static_cast<uint32_t>(name.size()));
    w.Str(name);
    w.U32(static_cast<uint32_t>(p.value.rank()));
    for (int d : p.value.shape()) w.U32(static_cast<uint32_t>(d));
    for (double v : p.value.values()) w.F64(v);
  }
  return w.Take();
}

void DeserializeCheckpoint(ParameterStore& store, const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes);
  if (r.Str(4) != std::string_view(kCheckpointMagic, 4)) {
    throw ParseError(ParseError::Kind::kBadMagic, "not a checkpoint file");
  }
  const uint32_t version = r.U32();
  if (version != kCheckpointVersion) {
    throw ParseError(ParseError::Kind::kUnknownVersion,
                     "unsupported checkpoint version " + std::to_string(version));
  }
  const uint32_t count = r.U32();
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = r.U32();
    std::string name = r.Str(name_len);
    const uint32_t rank = r.U32();
    if (rank > 8) throw ParseError(ParseError::Kind::kInconsistent, "bad rank for " + name);
    Shape shape(rank);
    size_t n = 1;
    for (auto& d : shape) {
      const uint32_t v = r.U32();
      if (v > (1u << 28)) throw ParseError(ParseError::Kind::kInconsistent, "bad dim for " + name);
      d = static_cast<int>(v);
      n *= v;
    }
    if (n * 8 > r.remaining()) {
      throw ParseError(ParseError::Kind::kTruncated, "truncated data for " + name);
    }
    std::vector<double> data(n);
    for (auto& v : data) v = r.F64();
    store.Set(name, Tensor(std::move(shape), std::move(data)));
  }
  if (r.remaining() != 0) {
    throw ParseError(ParseError::Kind::kInconsistent, "trailing bytes in checkpoint");
  }
}

void SaveCheckpoint(const ParameterStore& store, const std::string& path) {
  WriteFileBytes(path, SerializeCheckpoint(store));
}

void LoadCheckpoint(ParameterStore& store, const std::string& path) {
  DeserializeCheckpoint(store, ReadFileBytes(path));
}

std::vector<uint8_t> ReadFileBytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void WriteFileBytes(const std::string& path, std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace hyfl
