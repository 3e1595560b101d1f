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

#ifndef HYFL_OPS_H_
#define HYFL_OPS_H_

#include <vector>

#include "hyfl/graph.h"

// Differentiable primitives. Image tensors are NCHW; token tensors are
// [tokens, width] or [batch, tokens, width]. Every op records a node on the
// graph that owns its inputs and throws DimensionError on shape mismatch.
namespace hyfl::ops {

Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var Mul(Var a, Var b);
Var Scale(Var a, double s);
Var Sum(Var a);
Var Mean(Var a);
Var Reshape(Var a, Shape shape);
// Value copy with no gradient path (stop-gradient).
Var Detach(Var a);

Var Relu(Var a);
// Exact (erf) GELU.
Var Gelu(Var a);
Var Tanh(Var a);

// x [N,C,H,W], kernel [O,C,k,k]. Output spatial size
// floor((h + 2*pad - k) / stride) + 1.
Var Conv2d(Var x, Var kernel, int stride, int pad);
// x [N,C,H,W] + bias [C] broadcast over N, H, W.
Var AddChannelBias(Var x, Var bias);
// Nearest-neighbour resize: out[i][j] = in[i*H/out_h][j*W/out_w].
Var NearestResize(Var x, int out_h, int out_w);
// Nearest-neighbour upsample by `factor` followed by a size-preserving
// convolution (pad = k/2). Only factor 2 is supported.
Var UpsampleConv(Var x, Var kernel, int factor);
// Mean over non-overlapping factor x factor blocks.
Var MeanPool(Var x, int factor);
// [N,C,H,W] -> [N*H*W, C] (row index (n*H + y)*W + x) and back.
Var ChannelsToRows(Var x);
Var RowsToChannels(Var rows, int n, int h, int w);

// x [..., in] * weight[out, in]^T + bias[out]. `bias` may be a default Var.
Var Linear(Var x, Var weight, Var bias = {});
// Normalizes over the last dimension.
Var LayerNorm(Var x, Var gamma, Var beta, double eps = 1e-5);
// Softmax over the last dimension.
Var Softmax(Var x);
// Multi-head scaled dot-product attention without projections.
// q [B,Tq,D], k and v [B,Tk,D]; D divisible by heads.
Var Attention(Var q, Var k, Var v, int heads);
// Rows of table [V,D] selected by ids -> [ids.size(), D].
Var Embedding(Var table, const std::vector<int>& ids);
// [total, D] whose row positions[i] is rows[i] and every other row is
// fill [D]. Positions must be distinct.
Var ScatterRows(Var rows, const std::vector<int>& positions, int total, Var fill);

// sum_r weights[r] * -log softmax(logits[r])[targets[r]] / normalizer.
// Rows with zero weight contribute neither loss nor gradient.
Var CrossEntropyFromLogits(Var logits, const std::vector<int>& targets,
                           const std::vector<double>& weights, double normalizer);
Var L1Loss(Var a, Var b);
Var MseLoss(Var a, Var b);
// Total bits -sum log2 P(y) where P(y) is the mass of [y-1/2, y+1/2) under a
// per-channel logistic with location loc[C] and scale exp(log_scale[C]).
// y is [N,C,H,W].
Var FactorizedRateBits(Var y, Var loc, Var log_scale);

}  // namespace hyfl::ops

#endif  // HYFL_OPS_H_
