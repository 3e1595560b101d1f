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

#ifndef HYFL_PIPELINE_CONFIG_H_
#define HYFL_PIPELINE_CONFIG_H_

#include <cstdint>
#include <string>
#include <vector>

#include "hyfl/bridge_decoder.h"
#include "hyfl/cont_stream.h"
#include "hyfl/token_predictor.h"
#include "hyfl/vq_stream.h"

namespace hyfl {

// Everything needed to rebuild the models and rerun training. Stored as
// "key = value" lines ('#' starts a comment) next to every checkpoint.
struct PipelineConfig {
  int tile = 256;
  uint64_t seed = 1;

  // VQ stream.
  int n_z = 64;
  int c = 32;
  std::vector<int> enc_channels = {8, 16, 32, 32};
  std::vector<int> dec_channels = {32, 24, 16, 8, 8};
  double beta = 0.25;

  // Continuous stream.
  int f = 8;
  int cont_hidden = 16;
  int support = 31;
  double lambda = 0.0018;

  // Predictor.
  int width = 64;
  int enc_blocks = 2;
  int dec_blocks = 2;
  int heads = 4;
  int mlp_ratio = 2;

  // Bridge.
  double w1 = 1.0;
  double w2 = 0.1;

  // Mask policy used by encode when none is given: a schedule name or "auto".
  std::string policy = "auto";

  // Stage 1.
  int vq_steps = 2000;
  int vq_batch = 4;
  int vq_crop = 64;
  double vq_lr = 1e-3;
  int cont_steps = 1000;
  int cont_batch = 4;
  double cont_lr = 1e-3;
  // Stage 2: unguided warm start, then guided with self-attention frozen.
  int pred_pretrain_steps = 400;
  int pred_guided_steps = 400;
  int pred_batch = 4;
  double pred_lr = 1e-3;
  // Stage 3.
  int bridge_steps = 1000;
  int bridge_batch = 2;
  int bridge_crop = 128;
  double bridge_lr = 3e-4;
  // Final learning rate of every cosine schedule, as a fraction of the base.
  double lr_floor = 0.05;

  // Images held out of training at the end of the corpus.
  int holdout = 8;

  VqConfig Vq() const;
  ContConfig Cont() const;
  PredictorConfig Predictor() const;
  BridgeConfig Bridge() const;

  // Throws ConfigError on an unknown key, a malformed value or an
  // inconsistent combination.
  static PipelineConfig Parse(const std::string& text);
  static PipelineConfig Load(const std::string& path);
  std::string Serialize() const;
  void Save(const std::string& path) const;
  void Validate() const;

  bool operator==(const PipelineConfig&) const = default;
};

}  // namespace hyfl

#endif  // HYFL_PIPELINE_CONFIG_H_
