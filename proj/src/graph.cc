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

#include "hyfl/graph.h"

#include <algorithm>
#include <cmath>

#include "hyfl/errors.h"

namespace hyfl {

const Tensor& Var::value() const { return graph_->Value(*this); }
const Tensor& Var::grad() const { return graph_->Grad(*this); }
bool Var::requires_grad() const { return graph_->RequiresGrad(*this); }

Var Graph::Constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::Input(Tensor value) {
  Node n;
  n.op = "input";
  n.value = std::move(value);
  n.requires_grad = record_grad_;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::Param(Parameter& p) {
  auto it = bound_params_.find(&p);
  if (it != bound_params_.end()) return Var(this, it->second);
  Node n;
  n.op = "param";
  n.value = p.value;
  n.requires_grad = record_grad_ && p.trainable;
  n.param = n.requires_grad ? &p : nullptr;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  bound_params_[&p] = id;
  return Var(this, id);
}

Var Graph::FrozenParam(const Parameter& p) {
  auto it = bound_params_.find(&p);
  if (it != bound_params_.end()) return Var(this, it->second);
  const int id = Constant(p.value).id();
  bound_params_[&p] = id;
  return Var(this, id);
}

Var Graph::Record(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  if (record_grad_) {
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                  [this](Var v) { return nodes_[v.id()].requires_grad; });
  }
  if (n.requires_grad) {
    n.inputs = std::move(inputs);
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

const Tensor& Graph::Grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.shape() != n.value.shape()) {
    throw ConfigError("no gradient recorded for node " + std::to_string(v.id()) + " (" + n.op +
                      ")");
  }
  return n.grad;
}

void Graph::Backward(Var loss) {
  if (!record_grad_) throw ConfigError("Backward on a graph built without gradients");
  Node& root = nodes_[loss.id()];
  if (root.value.size() != 1) {
    throw DimensionError("Backward needs a scalar loss, got " + ShapeToString(root.value.shape()));
  }
  if (!root.requires_grad) return;
  for (int i = 0; i <= loss.id(); ++i) {
    if (nodes_[i].requires_grad) nodes_[i].grad = Tensor(nodes_[i].value.shape());
  }
  root.grad[0] = 1.0;

  std::vector<Tensor*> input_grads;
  for (int i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad) continue;
    if (!n.grad.AllFinite()) {
      throw NumericError("non-finite gradient at node " + std::to_string(i) + " (" + n.op + ")");
    }
    if (n.param) {
      double* dst = n.param->grad.data();
      for (size_t k = 0; k < n.grad.size(); ++k) dst[k] += n.grad[k];
      continue;
    }
    if (!n.backward) continue;
    input_grads.clear();
    for (Var in : n.inputs) {
      Node& src = nodes_[in.id()];
      input_grads.push_back(src.requires_grad ? &src.grad : nullptr);
    }
    n.backward(BackwardArgs{*this, n.inputs, n.value, n.grad, input_grads});
  }
}

}  // namespace hyfl
