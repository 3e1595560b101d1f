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

#ifndef HYFL_GRAD_CHECK_H_
#define HYFL_GRAD_CHECK_H_

#include <functional>
#include <string>
#include <vector>

#include "hyfl/graph.h"
#include "hyfl/params.h"

namespace hyfl {

class Rng;

struct GradCheckResult {
  // max |analytic - numeric| / max(1, |numeric|)
  double max_rel_error = 0.0;
  std::string worst;  // "input 2[17]" or "param name[5]"
};

// Builds a scalar loss from leaf Vars created for `inputs`.
using InputLossFn = std::function<Var(Graph&, const std::vector<Var>&)>;

// Compares reverse-mode gradients with central differences for every
// element of every input.
GradCheckResult GradCheck(const InputLossFn& loss, const std::vector<Tensor>& inputs,
                          double eps = 1e-5);

// Builds a scalar loss from parameters in `store` (bound with Graph::Param).
using ParamLossFn = std::function<Var(Graph&)>;

// Same comparison with respect to trainable parameters whose name starts with
// one of `prefixes`. At most `max_coords` randomly chosen coordinates are
// probed per parameter (all of them when max_coords <= 0).
GradCheckResult GradCheckParams(const ParamLossFn& loss, ParameterStore& store,
                                const std::vector<std::string>& prefixes, Rng& rng,
                                int max_coords = 0, double eps = 1e-5);

}  // namespace hyfl

#endif  // HYFL_GRAD_CHECK_H_
