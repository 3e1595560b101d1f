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

#include "hyfl/vq_stream.h"

#include <cmath>
#include <string>

#include "hyfl/errors.h"
#include "hyfl/ops.h"

namespace hyfl {
namespace {

std::string Stage(const std::string& prefix, int s) { return prefix + ".s" + std::to_string(s); }

void CheckConfig(const VqConfig& cfg) {
  if (cfg.enc_channels.size() != kVqStages || cfg.dec_channels.size() != kVqStages + 1) {
    throw ConfigError("vq: need 4 encoder and 5 decoder channel counts");
  }
  if (cfg.n_z < 2 || cfg.c < 1) throw ConfigError("vq: bad n_z or c");
}

// [N, c, h, w] latent values -> nearest indices per position, row order
// (n*h + y)*w + x.
std::vector<int> NearestRows(const Tensor& y, const Tensor& codebook) {
  const int n = y.dim(0), c = y.dim(1), hw = y.dim(2) * y.dim(3);
  std::vector<int> ids(static_cast<size_t>(n) * hw);
  std::vector<double> v(c);
  for (int b = 0; b < n; ++b) {
    for (int p = 0; p < hw; ++p) {
      for (int ch = 0; ch < c; ++ch) v[ch] = y[(static_cast<size_t>(b) * c + ch) * hw + p];
      ids[static_cast<size_t>(b) * hw + p] = NearestCodeword(v.data(), codebook);
    }
  }
  return ids;
}

}  // namespace

void InitDecoderTrunk(const VqConfig& cfg, const std::string& prefix, ParameterStore& store,
                      Rng& rng) {
  CheckConfig(cfg);
  const auto& ch = cfg.dec_channels;
  InitConv(store, prefix + ".in", ch[0], cfg.c, 3, rng, false);
  for (int s = 0; s < kVqStages; ++s) {
    InitConv(store, Stage(prefix, s) + ".up", ch[s + 1], ch[s], 3, rng, false);
    InitConv(store, Stage(prefix, s) + ".res", ch[s + 1], ch[s + 1], 3, rng, false, 0.5);
  }
}

void InitVqParams(const VqConfig& cfg, ParameterStore& store, Rng& rng) {
  CheckConfig(cfg);
  int in = 3;
  for (int s = 0; s < kVqStages; ++s) {
    const int out = cfg.enc_channels[s];
    InitConv(store, Stage("vq.enc", s), out, in, 3, rng, true);
    InitConv(store, Stage("vq.enc", s) + ".res", out, out, 3, rng, true, 0.5);
    in = out;
  }
  InitConv(store, "vq.enc.out", cfg.c, in, 1, rng, false);
  store.Add("vq.codebook", Tensor::RandomNormal({cfg.n_z, cfg.c}, rng, 0.1));
  InitDecoderTrunk(cfg, "vq.dec", store, rng);
  InitConv(store, "vq.dec.head", 3, cfg.dec_channels.back(), 3, rng, true);
}

Var VqEncoderForward(Graph& g, const ParamView& p, const VqConfig& cfg, Var image) {
  const Shape& in = image.shape();
  if (in.size() != 4 || in[1] != 3 || in[2] % 16 != 0 || in[3] % 16 != 0) {
    throw DimensionError("vq encoder input must be [N,3,16a,16b], got " + ShapeToString(in));
  }
  Var h = image;
  for (int s = 0; s < kVqStages; ++s) {
    h = ops::Gelu(ConvLayer(g, p, Stage("vq.enc", s), h, 2));
    h = ops::Add(h, ops::Gelu(ConvLayer(g, p, Stage("vq.enc", s) + ".res", h)));
  }
  if (h.shape()[1] != cfg.enc_channels.back()) throw ConfigError("vq encoder channel mismatch");
  return ConvLayer(g, p, "vq.enc.out", h);
}

Var DecoderTrunk(Graph& g, const ParamView& p, const std::string& prefix, const VqConfig& cfg,
                 Var latent, std::span<const Var> injections, std::vector<Var>* features) {
  if (!injections.empty() && injections.size() != kVqStages) {
    throw DimensionError("decoder expects 4 stage injections, got " +
                         std::to_string(injections.size()));
  }
  if (latent.shape().size() != 4 || latent.shape()[1] != cfg.c) {
    throw DimensionError("decoder latent must be [N," + std::to_string(cfg.c) + ",h,w], got " +
                         ShapeToString(latent.shape()));
  }
  Var h = ConvLayer(g, p, prefix + ".in", latent);
  for (int s = 0; s < kVqStages; ++s) {
    Var u = UpConvLayer(g, p, Stage(prefix, s) + ".up", h);
    if (!injections.empty()) {
      if (injections[s].shape() != u.shape()) {
        throw DimensionError("stage " + std::to_string(s) + " injection " +
                             ShapeToString(injections[s].shape()) + " vs decoder feature " +
                             ShapeToString(u.shape()));
      }
      u = ops::Add(u, injections[s]);
    }
    Var a = ops::Gelu(u);
    h = ops::Add(a, ConvLayer(g, p, Stage(prefix, s) + ".res", a));
    if (features) features->push_back(h);
  }
  return h;
}

Var VqDecoderForward(Graph& g, const ParamView& p, const VqConfig& cfg, Var latent,
                     std::span<const Var> injections, std::vector<Var>* features) {
  Var h = DecoderTrunk(g, p, "vq.dec", cfg, latent, injections, features);
  return ops::Tanh(ConvLayer(g, p, "vq.dec.head", h));
}

int NearestCodeword(const double* v, const Tensor& codebook) {
  const int n_z = codebook.dim(0), c = codebook.dim(1);
  const double* cb = codebook.data();
  int best = 0;
  double best_d = INFINITY;
  for (int k = 0; k < n_z; ++k) {
    double d = 0.0;
    for (int ch = 0; ch < c; ++ch) {
      const double e = v[ch] - cb[k * c + ch];
      d += e * e;
    }
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

IndexMap QuantizeToIndices(const Tensor& latent, const Tensor& codebook) {
  ExpectRank(latent, 3, "latent");
  ExpectRank(codebook, 2, "codebook");
  if (latent.dim(0) != codebook.dim(1)) {
    throw DimensionError("latent " + ShapeToString(latent.shape()) + " vs codebook " +
                         ShapeToString(codebook.shape()));
  }
  const std::vector<int> ids =
      NearestRows(latent.Reshaped({1, latent.dim(0), latent.dim(1), latent.dim(2)}), codebook);
  IndexMap m(latent.dim(1), latent.dim(2));
  m.indices = ids;
  return m;
}

Tensor Dequantize(const IndexMap& indices, const Tensor& codebook) {
  ExpectRank(codebook, 2, "codebook");
  const int n_z = codebook.dim(0), c = codebook.dim(1), hw = indices.size();
  Tensor out({c, indices.height, indices.width});
  for (int p = 0; p < hw; ++p) {
    const int k = indices.indices[p];
    if (k < 0 || k >= n_z) {
      throw CorruptStreamError("index " + std::to_string(k) + " at position " +
                               std::to_string(p) + " outside codebook of " + std::to_string(n_z));
    }
    for (int ch = 0; ch < c; ++ch) out[ch * hw + p] = codebook[k * c + ch];
  }
  return out;
}

Tensor VqEncode(const ParameterStore& store, const VqConfig& cfg, const Tensor& image) {
  if (image.shape() != Shape{3, cfg.tile, cfg.tile}) {
    throw DimensionError("vq_encode expects [3x" + std::to_string(cfg.tile) + "x" +
                         std::to_string(cfg.tile) + "], got " + ShapeToString(image.shape()));
  }
  Graph g(false);
  Var x = g.Constant(image.Reshaped({1, 3, cfg.tile, cfg.tile}));
  Tensor y = VqEncoderForward(g, store, cfg, x).value();
  return y.Reshaped({y.dim(1), y.dim(2), y.dim(3)});
}

VqDecoded VqDecode(const ParameterStore& store, const VqConfig& cfg, const Tensor& latent) {
  const int side = cfg.tile / 16;
  if (latent.shape() != Shape{cfg.c, side, side}) {
    throw DimensionError("vq_decode expects [" + std::to_string(cfg.c) + "x" +
                         std::to_string(side) + "x" + std::to_string(side) + "], got " +
                         ShapeToString(latent.shape()));
  }
  Graph g(false);
  std::vector<Var> feats;
  Var x = VqDecoderForward(g, store, cfg, g.Constant(latent.Reshaped({1, cfg.c, side, side})), {},
                           &feats);
  VqDecoded out;
  out.image = x.value().Reshaped({3, cfg.tile, cfg.tile});
  for (int s = 0; s < kVqStages; ++s) {
    const Tensor& f = feats[s].value();
    out.features[s] = f.Reshaped({f.dim(1), f.dim(2), f.dim(3)});
  }
  return out;
}

Var StraightThrough(Var y, Var cd) { return ops::Add(y, ops::Detach(ops::Sub(cd, y))); }

VqLossVars VqLoss(Var x, Var xhat, Var y, Var cd, double beta) {
  VqLossVars v;
  v.l1 = ops::L1Loss(x, xhat);
  v.codebook = ops::MseLoss(ops::Detach(y), cd);
  v.commit = ops::MseLoss(y, ops::Detach(cd));
  v.total = ops::Add(ops::Add(v.l1, v.codebook), ops::Scale(v.commit, beta));
  return v;
}

VqTrainer::VqTrainer(const VqConfig& cfg, ParameterStore& store, const AdamOptions& adam,
                     uint64_t seed)
    : cfg_(cfg), store_(store), adam_(adam), rng_(seed), last_used_(cfg.n_z, 0) {
  CheckConfig(cfg);
}

void VqTrainer::InitCodebook(const Tensor& rows) {
  Tensor& cb = store_.Get("vq.codebook").value;
  const int m = rows.dim(0), c = rows.dim(1);
  for (int k = 0; k < cfg_.n_z; ++k) {
    const int r = static_cast<int>(rng_.Below(m));
    for (int ch = 0; ch < c; ++ch) cb[k * c + ch] = rows[r * c + ch] + 0.01 * rng_.Normal();
  }
  codebook_ready_ = true;
}

VqLossReport VqTrainer::Step(const Tensor& batch) {
  ++step_;
  Graph g;
  ParamView p(store_);
  Var x = g.Constant(batch);
  Var y = VqEncoderForward(g, p, cfg_, x);
  const int n = y.shape()[0], h = y.shape()[2], w = y.shape()[3];
  // Rows [N*h*w, c] of latent vectors for codebook maintenance.
  const Tensor rows = ops::ChannelsToRows(ops::Detach(y)).value();
  if (!codebook_ready_) InitCodebook(rows);

  Var codebook = p(g, "vq.codebook");
  const std::vector<int> ids = NearestRows(y.value(), codebook.value());
  Var cd = ops::RowsToChannels(ops::Embedding(codebook, ids), n, h, w);
  Var xhat = VqDecoderForward(g, p, cfg_, StraightThrough(y, cd));
  VqLossVars loss = VqLoss(x, xhat, y, cd, cfg_.beta);

  VqLossReport r;
  r.step = step_;
  r.total = loss.total.value()[0];
  r.l1 = loss.l1.value()[0];
  r.codebook = loss.codebook.value()[0];
  r.commit = loss.commit.value()[0];
  if (!std::isfinite(r.total)) {
    throw NumericError("vq step " + std::to_string(step_) + ": non-finite loss");
  }
  store_.ZeroGrad("vq.");
  g.Backward(loss.total);
  AdamStep(store_, adam_, step_, "vq.");

  for (int id : ids) last_used_[id] = step_;
  Tensor& cb = store_.Get("vq.codebook").value;
  const int c = cfg_.c;
  for (int k = 0; k < cfg_.n_z; ++k) {
    if (step_ - last_used_[k] < cfg_.dead_after) continue;
    const int src = static_cast<int>(rng_.Below(rows.dim(0)));
    for (int ch = 0; ch < c; ++ch) cb[k * c + ch] = rows[src * c + ch];
    last_used_[k] = step_;
    ++r.reseeded;
  }
  if (!cb.AllFinite()) {
    throw NumericError("vq step " + std::to_string(step_) + ": non-finite codebook entry");
  }
  return r;
}

}  // namespace hyfl
