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

#ifndef HYFL_GRAPH_H_
#define HYFL_GRAPH_H_

#include <functional>
#include <initializer_list>
#include <string>
#include <unordered_map>
#include <vector>

#include "hyfl/params.h"
#include "hyfl/tensor.h"

namespace hyfl {

class Graph;

// Handle to a node of a Graph. Cheap to copy; only valid while the Graph
// that created it is alive.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, int id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }
  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Graph* graph_ = nullptr;
  int id_ = -1;
};

// Arguments handed to a node's backward function. `input_grads[i]` is null
// when input i does not need a gradient.
struct BackwardArgs {
  const Graph& graph;
  const std::vector<Var>& inputs;
  const Tensor& output;
  const Tensor& output_grad;
  const std::vector<Tensor*>& input_grads;
};
using BackwardFn = std::function<void(const BackwardArgs&)>;

// Tape of recorded primitive ops. Nodes are appended in evaluation order,
// which is a topological order, and Backward walks them once in reverse.
// A Graph built with record_grad = false only evaluates values.
class Graph {
 public:
  explicit Graph(bool record_grad = true) : record_grad_(record_grad) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool record_grad() const { return record_grad_; }

  Var Constant(Tensor value);
  // Leaf that receives a gradient (used by gradient checks and tests).
  Var Input(Tensor value);
  // Leaf bound to a parameter. On Backward its gradient is added to
  // `p.grad` if the parameter is trainable. Binding the same parameter twice
  // returns the same node.
  Var Param(Parameter& p);
  // Leaf bound to a parameter that never receives a gradient.
  Var FrozenParam(const Parameter& p);

  Var Record(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& Value(Var v) const { return nodes_[v.id()].value; }
  const Tensor& Grad(Var v) const;
  bool RequiresGrad(Var v) const { return nodes_[v.id()].requires_grad; }
  const char* OpName(Var v) const { return nodes_[v.id()].op; }
  size_t size() const { return nodes_.size(); }

  // Reverse pass from a scalar. Throws NumericError naming the first node
  // whose incoming gradient is not finite.
  void Backward(Var loss);

 private:
  struct Node {
    const char* op = "";
    Tensor value;
    Tensor grad;
    std::vector<Var> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    Parameter* param = nullptr;
  };

  bool record_grad_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> bound_params_;
};

}  // namespace hyfl

#endif  // HYFL_GRAPH_H_
