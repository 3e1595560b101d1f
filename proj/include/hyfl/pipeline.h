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

#ifndef HYFL_PIPELINE_H_
#define HYFL_PIPELINE_H_

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "hyfl/complexity.h"
#include "hyfl/container.h"
#include "hyfl/masking.h"
#include "hyfl/params.h"
#include "hyfl/pipeline_config.h"
#include "hyfl/tensor.h"

namespace hyfl {

// Trained (or partially trained) model set. `stage()` counts completed
// training stages and is stored in the checkpoint as meta.stage.
struct Models {
  PipelineConfig config;
  ParameterStore store;
  ComplexityStats stats;

  int stage() const;
};

// Freshly initialized stage-0 models.
Models InitModels(const PipelineConfig& config);
// Model directory: config.txt, params.bin, complexity.bin.
void SaveModels(const Models& models, const std::string& dir);
Models LoadModels(const std::string& dir);

// Fixed schedule or complexity-aware selection per tile.
struct MaskPolicy {
  bool automatic = true;
  MaskSchedule fixed;

  // "auto" or a schedule name. Throws ConfigError.
  static MaskPolicy Parse(const std::string& name);
  std::string name() const;
};

// Edge-replicates [3, H, W] up to tile multiples.
Tensor PadToTiles(const Tensor& image, int tile);
// Row-major tile list of a padded image.
std::vector<Tensor> SplitTiles(const Tensor& padded, int tile);
// Inverse of SplitTiles followed by cropping to width x height.
Tensor AssembleTiles(std::span<const Tensor> tiles, int tile, int width, int height);

struct EncodeOptions {
  MaskPolicy policy;
  // Off: every tile carries an empty continuous substream.
  bool continuous = true;
  int threads = 1;
};

struct EncodeStats {
  std::vector<MaskSchedule> schedules;  // per tile
  int saturated = 0;                    // clamped continuous symbols
};

// Needs stage >= 1. Throws ConfigError for untrained models.
Container EncodeImage(const Models& models, const Tensor& image, const EncodeOptions& options,
                      EncodeStats* stats = nullptr);

struct DecodeOptions {
  // Off: plain VQ decoder, continuous stream ignored (for comparisons).
  bool fused = true;
  int threads = 1;
};

struct DecodeStats {
  int tiles = 0;
  int predictor_calls = 0;
};

// Needs stage 3. Throws ConfigError when the container was written for a
// different tile size or codebook, CorruptStreamError for damaged payloads.
Tensor DecodeImage(const Models& models, const Container& container,
                   const DecodeOptions& options = {}, DecodeStats* stats = nullptr);

struct CorpusImage {
  std::string name;
  Tensor image;
};

// A directory of .png/.ppm files (sorted by name), "synthetic:N" (textures
// cycling through every kind) or "engineered:N" (70% flat, 20% gradient,
// 10% noise). Generated corpora use `seed` and `size`.
std::vector<CorpusImage> LoadCorpus(const std::string& spec, uint64_t seed, int size = 256);
std::vector<Tensor> EngineeredCorpus(int count, int size, uint64_t seed);

struct TrainSummary {
  double stage_seconds[3] = {0, 0, 0};
  // Mean L1 of VQ-only reconstructions with ground-truth indices, on the
  // held-out tiles (training tiles when nothing is held out).
  double vq_l1_init = 0.0;
  double vq_l1_trained = 0.0;
  double cont_bpp = 0.0;          // mean continuous substream bpp, same tiles
  double pred_accuracy_1_4 = 0.0;  // guided, masked positions only
  int tiles_evaluated = 0;
  int fused_better = 0;  // tiles where fused L1 < VQ-only L1
  double fused_l1 = 0.0;
  double vq_only_l1 = 0.0;
};

// Stage functions check the stage order (ConfigError otherwise) and that
// earlier stages' parameters are untouched (InvariantError). `log_dir`, when
// not empty, receives stage<k>_loss.csv and stage<k>.ckpt. Progress lines go
// to `progress` when it is not null.
void TrainStage1(Models& models, std::span<const Tensor> train, const std::string& log_dir,
                 std::ostream* progress = nullptr);
void TrainStage2(Models& models, std::span<const Tensor> train, const std::string& log_dir,
                 std::ostream* progress = nullptr);
void TrainStage3(Models& models, std::span<const Tensor> train, const std::string& log_dir,
                 std::ostream* progress = nullptr);

// Hash of the parameters each stage owns.
uint64_t Stage1Hash(const ParameterStore& store);  // vq.*, cont.*
uint64_t Stage2Hash(const ParameterStore& store);  // pred.*

// Splits off the last config.holdout images, runs the three stages and
// measures the summary on the held-out part.
TrainSummary TrainAll(Models& models, std::span<const Tensor> corpus, const std::string& log_dir,
                      std::ostream* progress = nullptr);
// Mean VQ-only L1 over the tiles of `images` with ground-truth indices.
double MeanVqL1(const Models& models, std::span<const Tensor> images);
// Fills the measurement part of a summary (everything but timings and
// vq_l1_init).
void MeasureHeldOut(const Models& models, std::span<const Tensor> held, TrainSummary& summary);

struct RdPoint {
  std::string image;
  std::string policy;
  double bpp = 0.0;
  double index_bpp = 0.0;
  double continuous_bpp = 0.0;
  double header_bpp = 0.0;
  double psnr = 0.0;
  double psnr_vq_only = 0.0;
  double proxy = 0.0;  // perceptual proxy distance
  int predictor_calls = 0;
};

struct ScheduleCell {
  std::string image;
  std::string policy;
  int tile_row = 0;
  int tile_col = 0;
  std::string schedule;
};

// One RdPoint per image and policy, then one "mean" row per policy.
std::vector<RdPoint> Evaluate(const Models& models, std::span<const CorpusImage> corpus,
                              std::span<const MaskPolicy> policies,
                              std::vector<ScheduleCell>* schedule_map = nullptr, int threads = 1);
void WriteRdCsv(const std::string& path, std::span<const RdPoint> rows);
void WriteScheduleCsv(const std::string& path, std::span<const ScheduleCell> cells);

}  // namespace hyfl

#endif  // HYFL_PIPELINE_H_
