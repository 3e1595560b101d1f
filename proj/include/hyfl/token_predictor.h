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

#ifndef HYFL_TOKEN_PREDICTOR_H_
#define HYFL_TOKEN_PREDICTOR_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hyfl/graph.h"
#include "hyfl/index_map.h"
#include "hyfl/layers.h"
#include "hyfl/masking.h"
#include "hyfl/params.h"
#include "hyfl/rng.h"
#include "hyfl/tensor.h"

namespace hyfl {

struct PredictorConfig {
  int n_z = 1024;
  int width = 192;
  int enc_blocks = 4;
  int dec_blocks = 4;
  int heads = 4;
  int mlp_ratio = 2;
  // Token grid side and continuous latent shape.
  int grid = 16;
  int f = 8;
  int latent_side = 8;

  int Tokens() const { return grid * grid; }
  // Row n_z of the token table is the mask embedding.
  int Vocabulary() const { return n_z + 1; }
};

// Parameters under "pred.". Width must be a multiple of 4 and of heads.
// Cross-attention output projections start at zero.
void InitPredictorParams(const PredictorConfig& cfg, ParameterStore& store, Rng& rng);

// latent [f, s, s] -> memory [grid * grid, width]: nearest resize to the
// token grid, linear projection, plus learned row and column embeddings and
// the fixed sin-cos grid code also seen by the decoder.
Var BuildGuidance(Graph& g, const ParamView& p, const PredictorConfig& cfg, Var latent);

// Logits [grid * grid, n_z]. The encoder sees only kept tokens; the decoder
// sees every position with the mask embedding at dropped ones. An invalid
// `guidance` skips cross-attention (unguided pre-training).
Var PredictorLogits(Graph& g, const ParamView& p, const PredictorConfig& cfg,
                    const MaskedIndexMap& masked, Var guidance);

// Cross-entropy over masked rows only, divided by `normalizer` (the masked
// count). logits [T, V], targets and mask of length T.
Var MaskedPredictionLoss(Var logits, const std::vector<int>& targets,
                         const std::vector<bool>& mask, double normalizer);

// Single forward pass; dropped positions take the arg-max logit (ties to
// the lowest index), kept positions are copied. `latent` may be null for an
// unguided prediction. Throws ConfigError when the store holds no predictor.
IndexMap PredictFullMap(const ParameterStore& store, const PredictorConfig& cfg,
                        const MaskedIndexMap& masked, const Tensor* latent);

enum class PredictorPhase {
  // Everything trains, no guidance.
  kPretrain,
  // Self-attention, embeddings and the encoder are frozen; cross-attention,
  // decoder MLPs, the logit head and the guidance projection train.
  kGuided,
};

// Sets trainable flags on pred.* for `phase`.
void SetPredictorPhase(ParameterStore& store, const PredictorConfig& cfg, PredictorPhase phase);

// Training schedules drawn per sample.
inline constexpr MaskSchedule kTrainingSchedules[] = {
    MaskSchedule(MaskKind::k1_2), MaskSchedule(MaskKind::k1_4), MaskSchedule(MaskKind::k1_9),
    MaskSchedule(MaskKind::k1_16)};

struct PredictorSample {
  IndexMap indices;
  Tensor latent;  // [f, s, s]; unused in kPretrain
};

struct PredictorLossReport {
  int64_t step = 0;
  double loss = 0.0;
  int masked = 0;
  int correct = 0;  // arg-max hits over masked positions
  bool skipped = false;
};

class PredictorTrainer {
 public:
  PredictorTrainer(const PredictorConfig& cfg, ParameterStore& store, const AdamOptions& adam,
                   uint64_t seed);
  // Applies SetPredictorPhase.
  void set_phase(PredictorPhase phase);
  void set_learning_rate(double lr) { adam_.lr = lr; }
  PredictorLossReport Step(std::span<const PredictorSample> batch);
  // Same, with explicit schedules (one per sample).
  PredictorLossReport Step(std::span<const PredictorSample> batch,
                           std::span<const MaskSchedule> schedules);

 private:
  PredictorConfig cfg_;
  ParameterStore& store_;
  AdamOptions adam_;
  Rng rng_;
  PredictorPhase phase_ = PredictorPhase::kPretrain;
  int64_t step_ = 0;
};

// Fraction of masked positions predicted exactly.
struct PredictionAccuracy {
  int masked = 0;
  int correct = 0;
  double rate() const { return masked ? static_cast<double>(correct) / masked : 0.0; }
};
PredictionAccuracy MeasureAccuracy(const ParameterStore& store, const PredictorConfig& cfg,
                                   std::span<const PredictorSample> samples,
                                   MaskSchedule schedule, bool guided);

}  // namespace hyfl

#endif  // HYFL_TOKEN_PREDICTOR_H_
