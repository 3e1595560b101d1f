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

#ifndef HYFL_PARAMS_H_
#define HYFL_PARAMS_H_

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "hyfl/tensor.h"

namespace hyfl {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;  // same shape as value
  // Adam moments.
  Tensor m;
  Tensor v;
  bool trainable = true;
};

// Named parameters in name order. Entries are never relocated, so references
// returned by Add/Get stay valid for the lifetime of the store.
class ParameterStore {
 public:
  Parameter& Add(const std::string& name, Tensor value, bool trainable = true);
  Parameter& Get(std::string_view name);
  const Parameter& Get(std::string_view name) const;
  bool Contains(std::string_view name) const;
  // Adds or overwrites the value of `name`, keeping the trainable flag.
  void Set(const std::string& name, Tensor value);

  std::vector<std::string> Names(std::string_view prefix = {}) const;
  void SetTrainable(std::string_view prefix, bool trainable);
  void ZeroGrad(std::string_view prefix = {});
  size_t NumValues(std::string_view prefix = {}) const;

  // FNV-1a over names and raw value bytes of every parameter matching `pred`.
  uint64_t Hash(const std::function<bool(const Parameter&)>& pred) const;
  uint64_t HashPrefix(std::string_view prefix) const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Parameter, std::less<>> params_;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Cosine decay from `base` at step 1 to `floor` at step `total`.
double CosineLearningRate(double base, double floor, int64_t step, int64_t total);

// One Adam update of every trainable parameter from its grad buffer.
// `step` is the 1-based update count used for bias correction.
void AdamStep(ParameterStore& store, const AdamOptions& opts, int64_t step);
// Restricted to parameters whose name starts with `prefix`.
void AdamStep(ParameterStore& store, const AdamOptions& opts, int64_t step,
              std::string_view prefix);

// Versioned little-endian checkpoint:
//   "HYCK" | u32 version | u32 count |
//   count x (u32 name_len | name | u32 rank | u32 dims[rank] | f64 data[])
// Trainable flags are not stored; each training stage sets its own.
void SaveCheckpoint(const ParameterStore& store, const std::string& path);
std::vector<uint8_t> SerializeCheckpoint(const ParameterStore& store);
// Replaces values of existing parameters and adds unknown ones.
void LoadCheckpoint(ParameterStore& store, const std::string& path);
void DeserializeCheckpoint(ParameterStore& store, const std::vector<uint8_t>& bytes);

}  // namespace hyfl

#endif  // HYFL_PARAMS_H_
