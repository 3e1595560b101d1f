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

#include "hyfl/token_predictor.h"

#include <cmath>
#include <cstdio>
#include <string>

#include "hyfl/errors.h"
#include "hyfl/ops.h"

namespace hyfl {
namespace {

std::string Block(const char* stack, int i) {
  return std::string("pred.") + stack + ".b" + std::to_string(i);
}

void InitAttention(ParameterStore& store, const std::string& name, int w, Rng& rng,
                   double out_gain) {
  for (const char* proj : {".q", ".k", ".v"}) InitLinear(store, name + proj, w, w, rng, true);
  InitLinear(store, name + ".o", w, w, rng, true, out_gain);
}

void InitMlp(ParameterStore& store, const std::string& name, int w, int ratio, Rng& rng) {
  InitLinear(store, name + ".fc1", ratio * w, w, rng, true, std::sqrt(2.0));
  InitLinear(store, name + ".fc2", w, ratio * w, rng, true);
}

// x [1, T, W] attends over mem [1, S, W].
Var AttentionLayer(Graph& g, const ParamView& p, const std::string& name, Var x, Var mem,
                   int heads) {
  Var q = LinearLayer(g, p, name + ".q", x);
  Var k = LinearLayer(g, p, name + ".k", mem);
  Var v = LinearLayer(g, p, name + ".v", mem);
  return LinearLayer(g, p, name + ".o", ops::Attention(q, k, v, heads));
}

Var MlpLayer(Graph& g, const ParamView& p, const std::string& name, Var x) {
  return LinearLayer(g, p, name + ".fc2", ops::Gelu(LinearLayer(g, p, name + ".fc1", x)));
}

void CheckConfig(const PredictorConfig& cfg) {
  if (cfg.width <= 0 || cfg.heads <= 0 || cfg.width % cfg.heads != 0) {
    throw ConfigError("predictor width " + std::to_string(cfg.width) + " not divisible by " +
                      std::to_string(cfg.heads) + " heads");
  }
  if (cfg.width % 4 != 0) {
    throw ConfigError("predictor width " + std::to_string(cfg.width) + " not divisible by 4");
  }
}

// Fixed 2-D sin-cos code [grid * grid, width] added to decoder inputs and
// to the guidance memory.
Tensor GridPositionCode(int grid, int width) {
  // Dims cycle (sin row, cos row, sin col, cos col); frequency falls with
  // the dim index from pi/2 to pi/16.
  const int n_freq = width / 4;
  Tensor code({grid * grid, width});
  for (int p = 0; p < grid * grid; ++p) {
    for (int d = 0; d < width; ++d) {
      const int k = d / 4;
      const double omega =
          0.5 * M_PI * std::pow(0.125, n_freq > 1 ? static_cast<double>(k) / (n_freq - 1) : 0.0);
      const double x = omega * ((d / 2) % 2 ? p % grid : p / grid);
      code[p * width + d] = d % 2 ? std::cos(x) : std::sin(x);
    }
  }
  return code;
}

}  // namespace

void InitPredictorParams(const PredictorConfig& cfg, ParameterStore& store, Rng& rng) {
  CheckConfig(cfg);
  const int w = cfg.width, t = cfg.Tokens();
  store.Add("pred.tok_emb", Tensor::RandomNormal({cfg.Vocabulary(), w}, rng, 0.02));
  store.Add("pred.pos_enc", Tensor::RandomNormal({t, w}, rng, 0.02));
  store.Add("pred.pos_dec", Tensor::RandomNormal({t, w}, rng, 0.02));
  for (int i = 0; i < cfg.enc_blocks; ++i) {
    const std::string b = Block("enc", i);
    InitLayerNorm(store, b + ".ln1", w);
    InitAttention(store, b + ".attn", w, rng, 1.0);
    InitLayerNorm(store, b + ".ln2", w);
    InitMlp(store, b + ".mlp", w, cfg.mlp_ratio, rng);
  }
  InitLayerNorm(store, "pred.enc.ln", w);
  for (int i = 0; i < cfg.dec_blocks; ++i) {
    const std::string b = Block("dec", i);
    InitLayerNorm(store, b + ".ln1", w);
    InitAttention(store, b + ".self", w, rng, 1.0);
    InitLayerNorm(store, b + ".ln2", w);
    InitAttention(store, b + ".cross", w, rng, 0.0);
    // Queries and keys share the grid position code, so scaled identity
    // projections start out attending to the aligned memory token.
    Tensor eye({w, w});
    for (int d = 0; d < w; ++d) eye[d * w + d] = 2.0;
    store.Set(b + ".cross.q.w", eye);
    store.Set(b + ".cross.k.w", eye);
    InitLayerNorm(store, b + ".ln3", w);
    InitMlp(store, b + ".mlp", w, cfg.mlp_ratio, rng);
  }
  InitLayerNorm(store, "pred.head.ln", w);
  InitLinear(store, "pred.head.fc1", w, w, rng, true, std::sqrt(2.0));
  InitLinear(store, "pred.head.fc2", cfg.n_z, w, rng, true);
  InitLinear(store, "pred.guide.proj", w, cfg.f, rng, true);
  store.Add("pred.guide.row", Tensor::RandomNormal({cfg.grid, w}, rng, 0.02));
  store.Add("pred.guide.col", Tensor::RandomNormal({cfg.grid, w}, rng, 0.02));
}

Var BuildGuidance(Graph& g, const ParamView& p, const PredictorConfig& cfg, Var latent) {
  const Shape want{cfg.f, cfg.latent_side, cfg.latent_side};
  if (latent.shape() != want) {
    throw DimensionError("guidance: latent " + ShapeToString(latent.shape()) + ", expected " +
                         ShapeToString(want));
  }
  Var x = ops::Reshape(latent, {1, cfg.f, cfg.latent_side, cfg.latent_side});
  x = ops::ChannelsToRows(ops::NearestResize(x, cfg.grid, cfg.grid));
  std::vector<int> rows(cfg.Tokens()), cols(cfg.Tokens());
  for (int k = 0; k < cfg.Tokens(); ++k) {
    rows[k] = k / cfg.grid;
    cols[k] = k % cfg.grid;
  }
  Var pos = ops::Add(ops::Embedding(p(g, "pred.guide.row"), rows),
                     ops::Embedding(p(g, "pred.guide.col"), cols));
  pos = ops::Add(pos, g.Constant(GridPositionCode(cfg.grid, cfg.width)));
  return ops::Add(LinearLayer(g, p, "pred.guide.proj", x), pos);
}

Var PredictorLogits(Graph& g, const ParamView& p, const PredictorConfig& cfg,
                    const MaskedIndexMap& masked, Var guidance) {
  CheckConfig(cfg);
  const int w = cfg.width, t = cfg.Tokens();
  if (masked.height != cfg.grid || masked.width != cfg.grid) {
    throw DimensionError("predictor: index map " + std::to_string(masked.height) + "x" +
                         std::to_string(masked.width) + ", grid " + std::to_string(cfg.grid));
  }
  Var table = p(g, "pred.tok_emb");
  Var mask_row = ops::Reshape(ops::Embedding(table, {cfg.n_z}), {w});
  Var x;
  if (masked.kept.empty()) {
    x = ops::Embedding(table, std::vector<int>(t, cfg.n_z));
  } else {
    std::vector<int> ids, pos;
    for (const auto& [position, index] : masked.kept) {
      if (index < 0 || index >= cfg.n_z) {
        throw DimensionError("predictor: index " + std::to_string(index) + " outside codebook");
      }
      pos.push_back(position);
      ids.push_back(index);
    }
    const int k = static_cast<int>(ids.size());
    Var h = ops::Add(ops::Embedding(table, ids), ops::Embedding(p(g, "pred.pos_enc"), pos));
    h = ops::Reshape(h, {1, k, w});
    for (int i = 0; i < cfg.enc_blocks; ++i) {
      const std::string b = Block("enc", i);
      Var n = LayerNormLayer(g, p, b + ".ln1", h);
      h = ops::Add(h, AttentionLayer(g, p, b + ".attn", n, n, cfg.heads));
      h = ops::Add(h, MlpLayer(g, p, b + ".mlp", LayerNormLayer(g, p, b + ".ln2", h)));
    }
    h = ops::Reshape(LayerNormLayer(g, p, "pred.enc.ln", h), {k, w});
    x = ops::ScatterRows(h, pos, t, mask_row);
  }
  x = ops::Add(ops::Add(x, p(g, "pred.pos_dec")), g.Constant(GridPositionCode(cfg.grid, w)));
  x = ops::Reshape(x, {1, t, w});
  Var mem;
  if (guidance.valid()) mem = ops::Reshape(guidance, {1, t, w});
  for (int i = 0; i < cfg.dec_blocks; ++i) {
    const std::string b = Block("dec", i);
    Var n = LayerNormLayer(g, p, b + ".ln1", x);
    x = ops::Add(x, AttentionLayer(g, p, b + ".self", n, n, cfg.heads));
    if (mem.valid()) {
      x = ops::Add(x, AttentionLayer(g, p, b + ".cross", LayerNormLayer(g, p, b + ".ln2", x), mem,
                                     cfg.heads));
    }
    x = ops::Add(x, MlpLayer(g, p, b + ".mlp", LayerNormLayer(g, p, b + ".ln3", x)));
  }
  Var h = LayerNormLayer(g, p, "pred.head.ln", x);
  h = ops::Gelu(LinearLayer(g, p, "pred.head.fc1", h));
  return ops::Reshape(LinearLayer(g, p, "pred.head.fc2", h), {t, cfg.n_z});
}

Var MaskedPredictionLoss(Var logits, const std::vector<int>& targets,
                         const std::vector<bool>& mask, double normalizer) {
  if (mask.size() != targets.size()) {
    throw DimensionError("masked loss: " + std::to_string(mask.size()) + " mask entries for " +
                         std::to_string(targets.size()) + " targets");
  }
  std::vector<double> weights(mask.size());
  for (size_t k = 0; k < mask.size(); ++k) weights[k] = mask[k] ? 1.0 : 0.0;
  return ops::CrossEntropyFromLogits(logits, targets, weights, normalizer);
}

IndexMap PredictFullMap(const ParameterStore& store, const PredictorConfig& cfg,
                        const MaskedIndexMap& masked, const Tensor* latent) {
  if (!store.Contains("pred.tok_emb")) throw ConfigError("predictor is not trained or loaded");
  IndexMap out(masked.height, masked.width);
  for (const auto& [position, index] : masked.kept) out.indices[position] = index;
  if (masked.kept.size() == static_cast<size_t>(out.size())) return out;
  Graph g(false);
  const ParamView p(store);
  Var guidance;
  if (latent) guidance = BuildGuidance(g, p, cfg, g.Constant(*latent));
  const Tensor& logits = PredictorLogits(g, p, cfg, masked, guidance).value();
  for (int k = 0; k < out.size(); ++k) {
    if (!masked.mask[k]) continue;
    const double* row = logits.data() + static_cast<size_t>(k) * cfg.n_z;
    int best = 0;
    for (int c = 1; c < cfg.n_z; ++c) {
      if (row[c] > row[best]) best = c;
    }
    out.indices[k] = best;
  }
  return out;
}

void SetPredictorPhase(ParameterStore& store, const PredictorConfig& cfg, PredictorPhase phase) {
  store.SetTrainable("pred.", phase == PredictorPhase::kPretrain);
  if (phase == PredictorPhase::kPretrain) return;
  for (int i = 0; i < cfg.dec_blocks; ++i) {
    const std::string b = Block("dec", i);
    for (const char* part : {".ln2.", ".cross.", ".ln3.", ".mlp."}) {
      store.SetTrainable(b + part, true);
    }
  }
  store.SetTrainable("pred.head.", true);
  store.SetTrainable("pred.guide.", true);
}

PredictorTrainer::PredictorTrainer(const PredictorConfig& cfg, ParameterStore& store,
                                   const AdamOptions& adam, uint64_t seed)
    : cfg_(cfg), store_(store), adam_(adam), rng_(seed) {
  CheckConfig(cfg);
  SetPredictorPhase(store_, cfg_, phase_);
}

void PredictorTrainer::set_phase(PredictorPhase phase) {
  phase_ = phase;
  SetPredictorPhase(store_, cfg_, phase_);
}

PredictorLossReport PredictorTrainer::Step(std::span<const PredictorSample> batch) {
  std::vector<MaskSchedule> schedules;
  for (size_t b = 0; b < batch.size(); ++b) {
    schedules.push_back(kTrainingSchedules[rng_.Below(std::size(kTrainingSchedules))]);
  }
  return Step(batch, schedules);
}

PredictorLossReport PredictorTrainer::Step(std::span<const PredictorSample> batch,
                                           std::span<const MaskSchedule> schedules) {
  if (schedules.size() != batch.size()) {
    throw DimensionError("predictor step: schedule count does not match batch");
  }
  PredictorLossReport r;
  r.step = step_ + 1;
  std::vector<MaskedIndexMap> masked;
  for (size_t b = 0; b < batch.size(); ++b) {
    masked.push_back(ApplyMask(batch[b].indices, schedules[b]));
    for (bool m : masked.back().mask) r.masked += m;
  }
  if (r.masked == 0) {
    std::fprintf(stderr, "warning: predictor step %lld has no masked tokens, skipped\n",
                 static_cast<long long>(r.step));
    r.skipped = true;
    return r;
  }
  ++step_;
  Graph g;
  const ParamView p(store_);
  const bool guided = phase_ == PredictorPhase::kGuided;
  Var total;
  for (size_t b = 0; b < batch.size(); ++b) {
    Var guidance;
    if (guided) guidance = BuildGuidance(g, p, cfg_, g.Constant(batch[b].latent));
    Var logits = PredictorLogits(g, p, cfg_, masked[b], guidance);
    Var loss = MaskedPredictionLoss(logits, batch[b].indices.indices, masked[b].mask, r.masked);
    total = total.valid() ? ops::Add(total, loss) : loss;
    const Tensor& z = logits.value();
    for (int k = 0; k < cfg_.Tokens(); ++k) {
      if (!masked[b].mask[k]) continue;
      const double* row = z.data() + static_cast<size_t>(k) * cfg_.n_z;
      int best = 0;
      for (int c = 1; c < cfg_.n_z; ++c) {
        if (row[c] > row[best]) best = c;
      }
      r.correct += best == batch[b].indices.indices[k];
    }
  }
  r.loss = total.value()[0];
  if (!std::isfinite(r.loss)) {
    throw NumericError("predictor step " + std::to_string(step_) + ": non-finite loss");
  }
  store_.ZeroGrad("pred.");
  g.Backward(total);
  AdamStep(store_, adam_, step_, "pred.");
  return r;
}

PredictionAccuracy MeasureAccuracy(const ParameterStore& store, const PredictorConfig& cfg,
                                   std::span<const PredictorSample> samples,
                                   MaskSchedule schedule, bool guided) {
  PredictionAccuracy acc;
  for (const PredictorSample& s : samples) {
    const MaskedIndexMap m = ApplyMask(s.indices, schedule);
    const IndexMap full = PredictFullMap(store, cfg, m, guided ? &s.latent : nullptr);
    for (int k = 0; k < full.size(); ++k) {
      if (!m.mask[k]) continue;
      ++acc.masked;
      acc.correct += full.indices[k] == s.indices.indices[k];
    }
  }
  return acc;
}

}  // namespace hyfl
