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

#include "hyfl/grad_check.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hyfl/errors.h"
#include "hyfl/rng.h"

namespace hyfl {

namespace {

void Update(GradCheckResult& r, double analytic, double numeric, const std::string& where) {
  const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
  if (!(err <= r.max_rel_error)) {
    r.max_rel_error = err;
    r.worst = where;
  }
}

}  // namespace

GradCheckResult GradCheck(const InputLossFn& loss, const std::vector<Tensor>& inputs, double eps) {
  std::vector<Tensor> analytic;
  {
    Graph g;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(g.Input(t));
    Var out = loss(g, vars);
    g.Backward(out);
    for (Var v : vars) analytic.push_back(g.Grad(v));
  }
  auto eval = [&](const std::vector<Tensor>& xs) {
    Graph g(false);
    std::vector<Var> vars;
    for (const Tensor& t : xs) vars.push_back(g.Input(t));
    return g.Value(loss(g, vars))[0];
  };
  GradCheckResult result;
  std::vector<Tensor> probe = inputs;
  for (size_t k = 0; k < inputs.size(); ++k) {
    for (size_t i = 0; i < inputs[k].size(); ++i) {
      const double x0 = inputs[k][i];
      probe[k][i] = x0 + eps;
      const double fp = eval(probe);
      probe[k][i] = x0 - eps;
      const double fm = eval(probe);
      probe[k][i] = x0;
      Update(result, analytic[k][i], (fp - fm) / (2 * eps),
             "input " + std::to_string(k) + "[" + std::to_string(i) + "]");
    }
  }
  return result;
}

GradCheckResult GradCheckParams(const ParamLossFn& loss, ParameterStore& store,
                                const std::vector<std::string>& prefixes, Rng& rng,
                                int max_coords, double eps) {
  store.ZeroGrad();
  {
    Graph g;
    Var out = loss(g);
    g.Backward(out);
  }
  auto eval = [&]() {
    Graph g(false);
    return g.Value(loss(g))[0];
  };
  GradCheckResult result;
  for (auto& [name, p] : store) {
    if (!p.trainable) continue;
    const bool selected = std::any_of(prefixes.begin(), prefixes.end(), [&](const std::string& s) {
      return name.compare(0, s.size(), s) == 0;
    });
    if (!selected) continue;
    std::vector<size_t> coords(p.value.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (max_coords > 0 && coords.size() > static_cast<size_t>(max_coords)) {
      for (size_t i = 0; i < static_cast<size_t>(max_coords); ++i) {
        std::swap(coords[i], coords[i + rng.Below(coords.size() - i)]);
      }
      coords.resize(max_coords);
    }
    const Tensor analytic = p.grad;
    for (size_t i : coords) {
      const double x0 = p.value[i];
      p.value[i] = x0 + eps;
      const double fp = eval();
      p.value[i] = x0 - eps;
      const double fm = eval();
      p.value[i] = x0;
      Update(result, analytic[i], (fp - fm) / (2 * eps), name + "[" + std::to_string(i) + "]");
    }
  }
  store.ZeroGrad();
  return result;
}

}  // namespace hyfl
