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

#include "hyfl/layers.h"

#include <cmath>

#include "hyfl/ops.h"
#include "hyfl/rng.h"

namespace hyfl {

void InitConv(ParameterStore& store, const std::string& name, int out, int in, int k, Rng& rng,
              bool bias, double gain) {
  const double sd = gain * std::sqrt(2.0 / (in * k * k));
  store.Add(name + ".w", Tensor::RandomNormal({out, in, k, k}, rng, sd));
  if (bias) store.Add(name + ".b", Tensor({out}));
}

void InitLinear(ParameterStore& store, const std::string& name, int out, int in, Rng& rng,
                bool bias, double gain) {
  store.Add(name + ".w", Tensor::RandomNormal({out, in}, rng, gain / std::sqrt(in)));
  if (bias) store.Add(name + ".b", Tensor({out}));
}

void InitLayerNorm(ParameterStore& store, const std::string& name, int dim) {
  store.Add(name + ".g", Tensor({dim}, 1.0));
  store.Add(name + ".b", Tensor({dim}));
}

Var ConvLayer(Graph& g, const ParamView& p, const std::string& name, Var x, int stride) {
  Var w = p(g, name + ".w");
  Var y = ops::Conv2d(x, w, stride, w.shape()[2] / 2);
  if (p.Has(name + ".b")) y = ops::AddChannelBias(y, p(g, name + ".b"));
  return y;
}

Var UpConvLayer(Graph& g, const ParamView& p, const std::string& name, Var x) {
  Var y = ops::UpsampleConv(x, p(g, name + ".w"), 2);
  if (p.Has(name + ".b")) y = ops::AddChannelBias(y, p(g, name + ".b"));
  return y;
}

Var LinearLayer(Graph& g, const ParamView& p, const std::string& name, Var x) {
  return ops::Linear(x, p(g, name + ".w"), p.Has(name + ".b") ? p(g, name + ".b") : Var());
}

Var LayerNormLayer(Graph& g, const ParamView& p, const std::string& name, Var x) {
  return ops::LayerNorm(x, p(g, name + ".g"), p(g, name + ".b"));
}

}  // namespace hyfl
