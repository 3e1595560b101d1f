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

#ifndef HYFL_LAYERS_H_
#define HYFL_LAYERS_H_

#include <string>
#include <string_view>

#include "hyfl/graph.h"
#include "hyfl/params.h"

namespace hyfl {

class Rng;

// Parameter source for a forward pass. Built from a mutable store, trainable
// parameters become gradient leaves; built from a const store, every
// parameter enters the graph as a constant.
class ParamView {
 public:
  ParamView(ParameterStore& store) : mutable_(&store), store_(&store) {}  // NOLINT
  ParamView(const ParameterStore& store) : store_(&store) {}              // NOLINT

  Var operator()(Graph& g, std::string_view name) const {
    return mutable_ ? g.Param(mutable_->Get(name)) : g.FrozenParam(store_->Get(name));
  }
  bool Has(std::string_view name) const { return store_->Contains(name); }
  const Tensor& Value(std::string_view name) const { return store_->Get(name).value; }
  const ParameterStore& store() const { return *store_; }

 private:
  ParameterStore* mutable_ = nullptr;
  const ParameterStore* store_;
};

// He-normal kernel name.w [out, in, k, k] scaled by `gain`; zero bias name.b
// when `bias` is set.
void InitConv(ParameterStore& store, const std::string& name, int out, int in, int k, Rng& rng,
              bool bias, double gain = 1.0);
// Normal weight name.w [out, in] with std `gain / sqrt(in)`; zero bias name.b.
void InitLinear(ParameterStore& store, const std::string& name, int out, int in, Rng& rng,
                bool bias, double gain = 1.0);
// name.g = 1, name.b = 0.
void InitLayerNorm(ParameterStore& store, const std::string& name, int dim);

// Convolution with pad k/2, plus bias when name.b exists.
Var ConvLayer(Graph& g, const ParamView& p, const std::string& name, Var x, int stride = 1);
// Nearest x2 upsample then convolution, plus bias when name.b exists.
Var UpConvLayer(Graph& g, const ParamView& p, const std::string& name, Var x);
Var LinearLayer(Graph& g, const ParamView& p, const std::string& name, Var x);
Var LayerNormLayer(Graph& g, const ParamView& p, const std::string& name, Var x);

}  // namespace hyfl

#endif  // HYFL_LAYERS_H_
