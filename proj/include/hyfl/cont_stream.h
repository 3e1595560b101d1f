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

#ifndef HYFL_CONT_STREAM_H_
#define HYFL_CONT_STREAM_H_

#include <cstdint>
#include <vector>

#include "hyfl/bit_io.h"
#include "hyfl/graph.h"
#include "hyfl/layers.h"
#include "hyfl/params.h"
#include "hyfl/range_coder.h"
#include "hyfl/rng.h"
#include "hyfl/tensor.h"

namespace hyfl {

struct ContConfig {
  int tile = 256;
  // Fixed mean-pool factor ahead of the learned encoder.
  int pool = 4;
  int f = 8;
  // Hidden channels of the three stride-2 stages.
  int hidden = 16;
  // Symbols are clamped to [-support, support].
  int support = 31;
  double lambda = 0.0018;

  // Total spatial reduction: pool x 8.
  int Stride() const { return pool * 8; }
  int Side() const { return tile / Stride(); }
};

// Parameters under "cont.": cont.enc.*, cont.dec.*, cont.prior.loc [f] and
// cont.prior.log_scale [f]. Frozen tables live in cont.cdf.
void InitContParams(const ContConfig& cfg, ParameterStore& store, Rng& rng);

// [N, 3, H, W] -> pooled [N, 3, H/pool, W/pool].
Var ContDownsample(Var image, const ContConfig& cfg);
// Pooled image -> latent [N, f, H/32, W/32].
Var ContEncoderForward(Graph& g, const ParamView& p, const ContConfig& cfg, Var pooled);
// Latent -> pooled-resolution reconstruction in [-1, 1].
Var ContDecoderForward(Graph& g, const ParamView& p, const ContConfig& cfg, Var latent);

// Probability of each integer in [-support, support] under the channel's
// logistic, tails folded into the edge symbols.
std::vector<double> ChannelProbabilities(double loc, double log_scale, int support);

// Quantizes the current prior into integer CDF tables stored as cont.cdf
// [f, 2 * support + 2] (non-trainable).
void FreezeEntropyModel(const ContConfig& cfg, ParameterStore& store);
bool EntropyModelFrozen(const ParameterStore& store);
// Per-channel tables from cont.cdf. Throws ConfigError when not frozen.
std::vector<CdfTable> EntropyTables(const ContConfig& cfg, const ParameterStore& store);

struct ContEncoded {
  std::vector<int> symbols;  // f x side x side, channel-major
  PackedBits bits;           // serialized continuous substream
  int saturated = 0;         // symbols clamped into the support
};

// image [3, tile, tile].
ContEncoded ContEncode(const ParameterStore& store, const ContConfig& cfg, const Tensor& image);
// Symbols only (no entropy coding), with the saturation count.
std::vector<int> ContSymbols(const ParameterStore& store, const ContConfig& cfg,
                             const Tensor& image, int* saturated);
// Range-codes symbols into a substream.
PackedBits ContPack(const ContConfig& cfg, const std::vector<CdfTable>& tables,
                    const std::vector<int>& symbols);
// Substream -> latent [f, side, side]. An empty substream (stream off) or a
// zero-symbol header yields the all-zero latent. Throws CorruptStreamError on
// damaged framing or payload.
Tensor ContDecode(const ParameterStore& store, const ContConfig& cfg, const PackedBits& bits);

struct ContLossReport {
  int64_t step = 0;
  double total = 0.0;
  double rate_bits = 0.0;  // per image
  double rate_bpp = 0.0;   // bits per pooled pixel
  double mse = 0.0;        // on the [-1, 1] scale
};

// Stage-1 rate-distortion training: R + lambda * 255^2 * MSE([0, 1] scale),
// R in bits per pooled pixel, additive uniform noise as the quantization
// proxy.
class ContTrainer {
 public:
  ContTrainer(const ContConfig& cfg, ParameterStore& store, const AdamOptions& adam,
              uint64_t seed);
  ContLossReport Step(const Tensor& batch);
  void set_learning_rate(double lr) { adam_.lr = lr; }

 private:
  ContConfig cfg_;
  ParameterStore& store_;
  AdamOptions adam_;
  Rng rng_;
  int64_t step_ = 0;
};

}  // namespace hyfl

#endif  // HYFL_CONT_STREAM_H_
