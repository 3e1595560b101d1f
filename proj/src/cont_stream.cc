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

#include "hyfl/cont_stream.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "hyfl/container.h"
#include "hyfl/errors.h"
#include "hyfl/ops.h"

namespace hyfl {
namespace {

double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void CheckConfig(const ContConfig& cfg) {
  if (cfg.pool < 1 || cfg.tile % cfg.Stride() != 0 || cfg.f < 1 || cfg.support < 1) {
    throw ConfigError("cont: tile " + std::to_string(cfg.tile) + " not divisible by stride " +
                      std::to_string(cfg.Stride()));
  }
}

}  // namespace

void InitContParams(const ContConfig& cfg, ParameterStore& store, Rng& rng) {
  CheckConfig(cfg);
  InitConv(store, "cont.enc.s0", cfg.hidden, 3, 3, rng, true);
  InitConv(store, "cont.enc.s1", cfg.hidden, cfg.hidden, 3, rng, true);
  InitConv(store, "cont.enc.s2", cfg.f, cfg.hidden, 3, rng, true);
  InitConv(store, "cont.dec.s0", cfg.hidden, cfg.f, 3, rng, true);
  InitConv(store, "cont.dec.s1", cfg.hidden, cfg.hidden, 3, rng, true);
  InitConv(store, "cont.dec.s2", 3, cfg.hidden, 3, rng, true);
  store.Add("cont.prior.loc", Tensor({cfg.f}));
  store.Add("cont.prior.log_scale", Tensor({cfg.f}));
}

Var ContDownsample(Var image, const ContConfig& cfg) { return ops::MeanPool(image, cfg.pool); }

Var ContEncoderForward(Graph& g, const ParamView& p, const ContConfig& cfg, Var pooled) {
  (void)cfg;
  Var h = ops::Gelu(ConvLayer(g, p, "cont.enc.s0", pooled, 2));
  h = ops::Gelu(ConvLayer(g, p, "cont.enc.s1", h, 2));
  return ConvLayer(g, p, "cont.enc.s2", h, 2);
}

Var ContDecoderForward(Graph& g, const ParamView& p, const ContConfig& cfg, Var latent) {
  (void)cfg;
  Var h = ops::Gelu(UpConvLayer(g, p, "cont.dec.s0", latent));
  h = ops::Gelu(UpConvLayer(g, p, "cont.dec.s1", h));
  return ops::Tanh(UpConvLayer(g, p, "cont.dec.s2", h));
}

std::vector<double> ChannelProbabilities(double loc, double log_scale, int support) {
  const double s = std::exp(log_scale);
  std::vector<double> p(2 * support + 1);
  for (int k = -support; k <= support; ++k) {
    const double hi = k == support ? 1.0 : Sigmoid((k + 0.5 - loc) / s);
    const double lo = k == -support ? 0.0 : Sigmoid((k - 0.5 - loc) / s);
    p[k + support] = std::max(hi - lo, 0.0);
  }
  return p;
}

void FreezeEntropyModel(const ContConfig& cfg, ParameterStore& store) {
  const int n = 2 * cfg.support + 1;
  const Tensor& loc = store.Get("cont.prior.loc").value;
  const Tensor& ls = store.Get("cont.prior.log_scale").value;
  Tensor cdf({cfg.f, n + 1});
  for (int ch = 0; ch < cfg.f; ++ch) {
    const CdfTable t = CdfTable::FromProbabilities(ChannelProbabilities(loc[ch], ls[ch], cfg.support));
    for (int k = 0; k <= n; ++k) cdf[ch * (n + 1) + k] = t.cdf()[k];
  }
  if (store.Contains("cont.cdf")) {
    store.Set("cont.cdf", cdf);
  } else {
    store.Add("cont.cdf", cdf, false);
  }
  store.Get("cont.cdf").trainable = false;
}

bool EntropyModelFrozen(const ParameterStore& store) { return store.Contains("cont.cdf"); }

std::vector<CdfTable> EntropyTables(const ContConfig& cfg, const ParameterStore& store) {
  if (!EntropyModelFrozen(store)) throw ConfigError("continuous entropy model is not frozen");
  const Tensor& cdf = store.Get("cont.cdf").value;
  const int n = 2 * cfg.support + 1;
  if (cdf.shape() != Shape{cfg.f, n + 1}) {
    throw ConfigError("cont.cdf shape " + ShapeToString(cdf.shape()) + " does not match config");
  }
  std::vector<CdfTable> tables;
  for (int ch = 0; ch < cfg.f; ++ch) {
    std::vector<uint32_t> freqs(n);
    for (int k = 0; k < n; ++k) {
      freqs[k] = static_cast<uint32_t>(cdf[ch * (n + 1) + k + 1] - cdf[ch * (n + 1) + k]);
    }
    tables.push_back(CdfTable::FromFrequencies(freqs));
  }
  return tables;
}

std::vector<int> ContSymbols(const ParameterStore& store, const ContConfig& cfg,
                             const Tensor& image, int* saturated) {
  CheckConfig(cfg);
  if (image.shape() != Shape{3, cfg.tile, cfg.tile}) {
    throw DimensionError("cont_encode expects [3x" + std::to_string(cfg.tile) + "x" +
                         std::to_string(cfg.tile) + "], got " + ShapeToString(image.shape()));
  }
  Graph g(false);
  Var x = g.Constant(image.Reshaped({1, 3, cfg.tile, cfg.tile}));
  const Tensor y = ContEncoderForward(g, store, cfg, ContDownsample(x, cfg)).value();
  std::vector<int> symbols(y.size());
  int sat = 0;
  for (size_t k = 0; k < y.size(); ++k) {
    const double r = std::round(y[k]);
    const double c = std::clamp(r, static_cast<double>(-cfg.support),
                                static_cast<double>(cfg.support));
    if (c != r || !std::isfinite(y[k])) ++sat;
    symbols[k] = std::isfinite(c) ? static_cast<int>(c) : 0;
  }
  if (saturated) *saturated = sat;
  return symbols;
}

PackedBits ContPack(const ContConfig& cfg, const std::vector<CdfTable>& tables,
                    const std::vector<int>& symbols) {
  const int side = cfg.Side();
  const size_t plane = static_cast<size_t>(side) * side;
  if (symbols.size() != plane * cfg.f) {
    throw EncodeError("continuous symbol count " + std::to_string(symbols.size()) +
                      " does not match f x side x side");
  }
  RangeEncoder enc;
  for (size_t k = 0; k < symbols.size(); ++k) {
    enc.Encode(tables[k / plane], symbols[k] + cfg.support);
  }
  ContinuousSubstream s;
  s.symbol_count = static_cast<uint16_t>(symbols.size());
  s.channels = static_cast<uint8_t>(cfg.f);
  s.side = static_cast<uint8_t>(side);
  s.payload = enc.Finish();
  s.payload_bits = static_cast<uint32_t>(s.payload.size() * 8);
  return SerializeContinuous(s);
}

ContEncoded ContEncode(const ParameterStore& store, const ContConfig& cfg, const Tensor& image) {
  ContEncoded out;
  out.symbols = ContSymbols(store, cfg, image, &out.saturated);
  out.bits = ContPack(cfg, EntropyTables(cfg, store), out.symbols);
  return out;
}

Tensor ContDecode(const ParameterStore& store, const ContConfig& cfg, const PackedBits& bits) {
  const int side = cfg.Side();
  Tensor latent({cfg.f, side, side});
  if (bits.bit_length == 0 && bits.bytes.empty()) return latent;
  const ContinuousSubstream s = ParseContinuous(bits);
  if (s.channels != cfg.f || s.side != side) {
    throw CorruptStreamError("continuous substream is " + std::to_string(s.channels) + "x" +
                             std::to_string(s.side) + "x" + std::to_string(s.side) +
                             ", model expects " + std::to_string(cfg.f) + "x" +
                             std::to_string(side) + "x" + std::to_string(side));
  }
  if (s.symbol_count == 0) {
    if (!s.payload.empty()) throw CorruptStreamError("payload without symbols");
    return latent;
  }
  const std::vector<CdfTable> tables = EntropyTables(cfg, store);
  const size_t plane = static_cast<size_t>(side) * side;
  RangeDecoder dec(s.payload);
  for (size_t k = 0; k < latent.size(); ++k) {
    latent[k] = dec.Decode(tables[k / plane]) - cfg.support;
  }
  return latent;
}

ContTrainer::ContTrainer(const ContConfig& cfg, ParameterStore& store, const AdamOptions& adam,
                         uint64_t seed)
    : cfg_(cfg), store_(store), adam_(adam), rng_(seed) {
  CheckConfig(cfg);
}

ContLossReport ContTrainer::Step(const Tensor& batch) {
  ++step_;
  Graph g;
  ParamView p(store_);
  Var pooled = ContDownsample(g.Constant(batch), cfg_);
  Var y = ContEncoderForward(g, p, cfg_, pooled);
  const Tensor noise = Tensor::RandomUniform(y.shape(), rng_, -0.5, 0.5);
  Var ytilde = ops::Add(y, g.Constant(noise));
  Var bits = ops::FactorizedRateBits(ytilde, p(g, "cont.prior.loc"), p(g, "cont.prior.log_scale"));
  const Shape ps = pooled.shape();
  const double pixels = static_cast<double>(ps[0]) * ps[2] * ps[3];
  Var rate = ops::Scale(bits, 1.0 / pixels);
  Var mse = ops::MseLoss(pooled, ContDecoderForward(g, p, cfg_, ytilde));
  // [-1, 1] MSE is 4x the [0, 1] MSE.
  Var total = ops::Add(rate, ops::Scale(mse, cfg_.lambda * 255.0 * 255.0 / 4.0));

  ContLossReport r;
  r.step = step_;
  r.total = total.value()[0];
  r.rate_bits = bits.value()[0] / ps[0];
  r.rate_bpp = rate.value()[0];
  r.mse = mse.value()[0];
  if (!std::isfinite(r.total)) {
    throw NumericError("cont step " + std::to_string(step_) + ": non-finite loss");
  }
  store_.ZeroGrad("cont.");
  g.Backward(total);
  AdamStep(store_, adam_, step_, "cont.");
  return r;
}

}  // namespace hyfl
