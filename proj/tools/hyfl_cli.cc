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

// Command-line front end: train, encode, decode, eval, calibrate.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hyfl/complexity.h"
#include "hyfl/container.h"
#include "hyfl/errors.h"
#include "hyfl/image_io.h"
#include "hyfl/pipeline.h"
#include "hyfl/pipeline_config.h"

namespace hyfl {
namespace {

std::vector<uint8_t> ReadBytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void WriteBytes(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  if (!out) throw IoError("cannot write " + path);
}

std::vector<Tensor> Images(const std::vector<CorpusImage>& corpus) {
  std::vector<Tensor> out;
  for (const CorpusImage& c : corpus) out.push_back(c.image);
  return out;
}

std::vector<MaskPolicy> ParsePolicies(const std::string& list) {
  std::vector<MaskPolicy> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(MaskPolicy::Parse(item));
  }
  if (out.empty()) throw ConfigError("no policies given");
  return out;
}

}  // namespace
}  // namespace hyfl

int main(int argc, char** argv) {
  using namespace hyfl;
  CLI::App app{"Hybrid VQ + continuous latent image codec"};
  app.require_subcommand(1);

  std::string corpus, config_path, out, model, in, policy, policies, csv, schedule_csv;
  uint64_t seed = 1;
  int threads = 1, tile = 256;
  bool no_continuous = false, vq_only = false;

  CLI::App* train = app.add_subcommand("train", "Run all three training stages");
  train->add_option("--corpus", corpus, "Image directory, synthetic:N or engineered:N")->required();
  train->add_option("--config", config_path, "Key-value config file");
  train->add_option("--out", out, "Model directory")->required();

  CLI::App* encode = app.add_subcommand("encode", "Compress an image into a container");
  encode->add_option("--model", model)->required();
  encode->add_option("--policy", policy, "none, 1_2, 1_4, 1_9, 1_16, full or auto");
  encode->add_option("--in", in, "PNG or PPM image")->required();
  encode->add_option("--out", out, "Container file")->required();
  encode->add_flag("--no-continuous", no_continuous, "Leave the continuous substream empty");
  encode->add_option("--threads", threads);

  CLI::App* decode = app.add_subcommand("decode", "Reconstruct an image from a container");
  decode->add_option("--model", model)->required();
  decode->add_option("--in", in, "Container file")->required();
  decode->add_option("--out", out, "Image path; .png writes PNG, anything else P6 PPM")->required();
  decode->add_flag("--vq-only", vq_only, "Skip the continuous corrections");
  decode->add_option("--threads", threads);

  CLI::App* eval = app.add_subcommand("eval", "Rate-distortion table over a corpus");
  eval->add_option("--model", model)->required();
  eval->add_option("--corpus", corpus)->required();
  eval->add_option("--policies", policies, "Comma-separated policies")->default_val("auto,1_4");
  eval->add_option("--csv", csv)->required();
  eval->add_option("--schedule-csv", schedule_csv, "Per-tile schedule map");
  eval->add_option("--threads", threads);

  CLI::App* calibrate = app.add_subcommand("calibrate", "Complexity statistics over a corpus");
  calibrate->add_option("--corpus", corpus)->required();
  calibrate->add_option("--out", out, "Statistics file")->required();
  calibrate->add_option("--tile", tile)->default_val(256);

  for (CLI::App* sub : {train, eval, calibrate}) sub->add_option("--seed", seed)->default_val(1);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      PipelineConfig cfg = config_path.empty() ? PipelineConfig{}
                                               : PipelineConfig::Load(config_path);
      const std::vector<CorpusImage> images = LoadCorpus(corpus, seed, cfg.tile);
      Models models = InitModels(cfg);
      const std::vector<Tensor> tensors = Images(images);
      const TrainSummary s = TrainAll(models, tensors, out, &std::cerr);
      std::printf("stage seconds: %.1f %.1f %.1f\n", s.stage_seconds[0], s.stage_seconds[1],
                  s.stage_seconds[2]);
      std::printf("held-out vq l1: %.5f -> %.5f\n", s.vq_l1_init, s.vq_l1_trained);
      std::printf("held-out continuous bpp: %.5f\n", s.cont_bpp);
      std::printf("held-out 1_4 accuracy: %.4f\n", s.pred_accuracy_1_4);
      std::printf("held-out fused l1 %.5f vs vq-only %.5f, better on %d/%d tiles\n", s.fused_l1,
                  s.vq_only_l1, s.fused_better, s.tiles_evaluated);
    } else if (*encode) {
      const Models models = LoadModels(model);
      EncodeOptions opt;
      opt.policy = MaskPolicy::Parse(policy.empty() ? models.config.policy : policy);
      opt.continuous = !no_continuous;
      opt.threads = threads;
      EncodeStats stats;
      const std::vector<uint8_t> bytes =
          WriteContainer(EncodeImage(models, ReadImage(in), opt, &stats));
      WriteBytes(out, bytes);
      const BppBreakdown bpp = ComputeBpp(ReadContainer(bytes));
      std::printf("%zu bytes, %.5f bpp (index %.5f, continuous %.5f, header %.5f), %d saturated\n",
                  bytes.size(), bpp.total_bpp(), bpp.index_bpp(), bpp.continuous_bpp(),
                  bpp.header_bpp(), stats.saturated);
    } else if (*decode) {
      const Models models = LoadModels(model);
      DecodeOptions opt;
      opt.fused = !vq_only;
      opt.threads = threads;
      WriteImage(out, DecodeImage(models, ReadContainer(ReadBytes(in)), opt));
    } else if (*eval) {
      const Models models = LoadModels(model);
      const std::vector<CorpusImage> images = LoadCorpus(corpus, seed, models.config.tile);
      const std::vector<MaskPolicy> list = ParsePolicies(policies);
      std::vector<ScheduleCell> cells;
      const std::vector<RdPoint> rows =
          Evaluate(models, images, list, schedule_csv.empty() ? nullptr : &cells, threads);
      WriteRdCsv(csv, rows);
      if (!schedule_csv.empty()) WriteScheduleCsv(schedule_csv, cells);
      for (const RdPoint& r : rows) {
        if (r.image == "mean") {
          std::printf("%-5s bpp %.5f psnr %.3f (vq-only %.3f)\n", r.policy.c_str(), r.bpp, r.psnr,
                      r.psnr_vq_only);
        }
      }
    } else if (*calibrate) {
      const std::vector<CorpusImage> images = LoadCorpus(corpus, seed, tile);
      std::vector<Tensor> tiles;
      for (const CorpusImage& c : images) {
        for (Tensor& t : SplitTiles(PadToTiles(c.image, tile), tile)) tiles.push_back(std::move(t));
      }
      Calibrate(tiles).Save(out);
      std::printf("calibrated on %zu tiles\n", tiles.size());
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
