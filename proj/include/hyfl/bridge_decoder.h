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

#ifndef HYFL_BRIDGE_DECODER_H_
#define HYFL_BRIDGE_DECODER_H_

#include <cstdint>

#include "hyfl/graph.h"
#include "hyfl/layers.h"
#include "hyfl/params.h"
#include "hyfl/rng.h"
#include "hyfl/tensor.h"
#include "hyfl/vq_stream.h"

namespace hyfl {

struct BridgeConfig {
  int f = 8;  // continuous latent channels
  double w1 = 1.0;
  double w2 = 0.1;
  // Perceptual proxy widths (three 3x3 convs, the last two stride 2).
  int proxy_channels = 8;
};

// Correction net under "bridge.": bridge.corr.* copied from the trained
// vq.dec trunk, bridge.adapt (1x1 f -> c, zero bias) and zero-initialized
// 1x1 fusion projections bridge.fuse{s}. Also adds the frozen proxy.* net.
void InitBridgeParams(const VqConfig& vq, const BridgeConfig& cfg, ParameterStore& store,
                      Rng& rng);
// Frozen random conv net for the perceptual proxy ("proxy.*").
void InitProxyParams(const BridgeConfig& cfg, ParameterStore& store, Rng& rng);

// vq_latent [N, c, h, w], cont_latent [N, f, h', w'] (resized to h x w).
// The correction trunk's stage outputs go through the fusion projections and
// are added to the VQ decoder's stages before their nonlinearity.
Var FusedDecoderForward(Graph& g, const ParamView& p, const VqConfig& vq, Var vq_latent,
                        Var cont_latent);
// Unbatched: [c, h, w] and [f, h', w'] -> image [3, 16h, 16w].
Tensor FusedDecode(const ParameterStore& store, const VqConfig& vq, const Tensor& vq_latent,
                   const Tensor& cont_latent);

// Feature maps of the proxy net, one per layer.
std::vector<Var> ProxyFeatures(Graph& g, const ParamView& p, Var image);
// Sum over proxy layers of the mean squared feature difference.
Var PerceptualProxy(Graph& g, const ParamView& p, Var x, Var xhat);
// w1 * mean |x - xhat| + w2 * PerceptualProxy.
Var PixelLoss(Graph& g, const ParamView& p, Var x, Var xhat, double w1, double w2);

struct BridgeLossReport {
  int64_t step = 0;
  double loss = 0.0;
  double l1 = 0.0;
};

// Stage-3 training of bridge.* only. Every other parameter is checked
// against its hash after each step; a change throws InvariantError.
class BridgeTrainer {
 public:
  BridgeTrainer(const VqConfig& vq, const BridgeConfig& cfg, ParameterStore& store,
                const AdamOptions& adam);
  // images [N, 3, H, W], vq_latents [N, c, H/16, W/16],
  // cont_latents [N, f, H/32, W/32].
  BridgeLossReport Step(const Tensor& images, const Tensor& vq_latents,
                        const Tensor& cont_latents);
  void set_learning_rate(double lr) { adam_.lr = lr; }
  uint64_t frozen_hash() const { return frozen_hash_; }

 private:
  VqConfig vq_;
  BridgeConfig cfg_;
  ParameterStore& store_;
  AdamOptions adam_;
  int64_t step_ = 0;
  uint64_t frozen_hash_ = 0;
};

// Hash of every parameter outside bridge.*.
uint64_t NonBridgeHash(const ParameterStore& store);

}  // namespace hyfl

#endif  // HYFL_BRIDGE_DECODER_H_
