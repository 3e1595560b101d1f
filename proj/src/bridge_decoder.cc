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

#include "hyfl/bridge_decoder.h"

#include <cmath>
#include <string>
#include <vector>

#include "hyfl/errors.h"
#include "hyfl/ops.h"

namespace hyfl {
namespace {

std::string Fuse(int s) { return "bridge.fuse" + std::to_string(s); }

}  // namespace

void InitProxyParams(const BridgeConfig& cfg, ParameterStore& store, Rng& rng) {
  const int c = cfg.proxy_channels;
  InitConv(store, "proxy.l0", c, 3, 3, rng, true);
  InitConv(store, "proxy.l1", 2 * c, c, 3, rng, true);
  InitConv(store, "proxy.l2", 2 * c, 2 * c, 3, rng, true);
  store.SetTrainable("proxy.", false);
}

void InitBridgeParams(const VqConfig& vq, const BridgeConfig& cfg, ParameterStore& store,
                      Rng& rng) {
  const std::string trunk = "vq.dec.";
  int copied = 0;
  for (const std::string& name : store.Names(trunk)) {
    if (name.starts_with("vq.dec.head")) continue;
    store.Set("bridge.corr." + name.substr(trunk.size()), store.Get(name).value);
    ++copied;
  }
  if (copied == 0) throw ConfigError("bridge init needs a trained vq decoder");
  store.SetTrainable("bridge.corr.", true);
  store.Add("bridge.adapt.w", Tensor::RandomNormal({vq.c, cfg.f, 1, 1}, rng, 1.0 / std::sqrt(cfg.f)));
  store.Add("bridge.adapt.b", Tensor({vq.c}));
  for (int s = 0; s < kVqStages; ++s) {
    const int ch = vq.dec_channels[s + 1];
    store.Add(Fuse(s) + ".w", Tensor({ch, ch, 1, 1}));
  }
  if (!store.Contains("proxy.l0.w")) InitProxyParams(cfg, store, rng);
}

Var FusedDecoderForward(Graph& g, const ParamView& p, const VqConfig& vq, Var vq_latent,
                        Var cont_latent) {
  const Shape& vs = vq_latent.shape();
  if (vs.size() != 4 || cont_latent.shape().size() != 4 || cont_latent.shape()[0] != vs[0]) {
    throw DimensionError("fused decode: latents " + ShapeToString(vs) + " and " +
                         ShapeToString(cont_latent.shape()));
  }
  Var adapted = ops::NearestResize(cont_latent, vs[2], vs[3]);
  adapted = ConvLayer(g, p, "bridge.adapt", adapted);
  std::vector<Var> corr;
  DecoderTrunk(g, p, "bridge.corr", vq, adapted, {}, &corr);
  std::vector<Var> inject;
  for (int s = 0; s < kVqStages; ++s) inject.push_back(ConvLayer(g, p, Fuse(s), corr[s]));
  return VqDecoderForward(g, p, vq, vq_latent, inject);
}

Tensor FusedDecode(const ParameterStore& store, const VqConfig& vq, const Tensor& vq_latent,
                   const Tensor& cont_latent) {
  if (vq_latent.rank() != 3 || cont_latent.rank() != 3) {
    throw DimensionError("fused decode expects [c,h,w] and [f,h,w] latents");
  }
  Graph g(false);
  auto batch1 = [](const Tensor& t) { return t.Reshaped({1, t.dim(0), t.dim(1), t.dim(2)}); };
  const Tensor out = FusedDecoderForward(g, store, vq, g.Constant(batch1(vq_latent)),
                                         g.Constant(batch1(cont_latent)))
                         .value();
  return out.Reshaped({3, out.dim(2), out.dim(3)});
}

std::vector<Var> ProxyFeatures(Graph& g, const ParamView& p, Var image) {
  std::vector<Var> out;
  Var h = ops::Gelu(ConvLayer(g, p, "proxy.l0", image));
  out.push_back(h);
  h = ops::Gelu(ConvLayer(g, p, "proxy.l1", h, 2));
  out.push_back(h);
  h = ops::Gelu(ConvLayer(g, p, "proxy.l2", h, 2));
  out.push_back(h);
  return out;
}

Var PerceptualProxy(Graph& g, const ParamView& p, Var x, Var xhat) {
  const std::vector<Var> a = ProxyFeatures(g, p, x);
  const std::vector<Var> b = ProxyFeatures(g, p, xhat);
  Var total = ops::MseLoss(a[0], b[0]);
  for (size_t l = 1; l < a.size(); ++l) total = ops::Add(total, ops::MseLoss(a[l], b[l]));
  return total;
}

Var PixelLoss(Graph& g, const ParamView& p, Var x, Var xhat, double w1, double w2) {
  if (w1 < 0 || w2 < 0) throw ConfigError("pixel loss weights must be non-negative");
  Var loss = ops::Scale(ops::L1Loss(x, xhat), w1);
  if (w2 == 0.0) return loss;
  return ops::Add(loss, ops::Scale(PerceptualProxy(g, p, x, xhat), w2));
}

uint64_t NonBridgeHash(const ParameterStore& store) {
  return store.Hash([](const Parameter& p) { return !p.name.starts_with("bridge."); });
}

BridgeTrainer::BridgeTrainer(const VqConfig& vq, const BridgeConfig& cfg, ParameterStore& store,
                             const AdamOptions& adam)
    : vq_(vq), cfg_(cfg), store_(store), adam_(adam) {
  if (!store_.Contains("bridge.adapt.w")) throw ConfigError("bridge parameters missing");
  store_.SetTrainable("", false);
  store_.SetTrainable("bridge.", true);
  frozen_hash_ = NonBridgeHash(store_);
}

BridgeLossReport BridgeTrainer::Step(const Tensor& images, const Tensor& vq_latents,
                                     const Tensor& cont_latents) {
  ++step_;
  Graph g;
  const ParamView p(store_);
  Var x = g.Constant(images);
  Var xhat = FusedDecoderForward(g, p, vq_, g.Constant(vq_latents), g.Constant(cont_latents));
  Var loss = PixelLoss(g, p, x, xhat, cfg_.w1, cfg_.w2);
  BridgeLossReport r;
  r.step = step_;
  r.loss = loss.value()[0];
  r.l1 = ops::L1Loss(x, xhat).value()[0];
  if (!std::isfinite(r.loss)) {
    throw NumericError("bridge step " + std::to_string(step_) + ": non-finite loss");
  }
  store_.ZeroGrad("bridge.");
  g.Backward(loss);
  AdamStep(store_, adam_, step_, "bridge.");
  if (NonBridgeHash(store_) != frozen_hash_) {
    throw InvariantError("bridge step " + std::to_string(step_) + " changed a frozen parameter");
  }
  return r;
}

}  // namespace hyfl
