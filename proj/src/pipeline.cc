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

#include "hyfl/pipeline.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "hyfl/bridge_decoder.h"
#include "hyfl/cont_stream.h"
#include "hyfl/dataset.h"
#include "hyfl/errors.h"
#include "hyfl/graph.h"
#include "hyfl/image_io.h"
#include "hyfl/ops.h"
#include "hyfl/token_predictor.h"
#include "hyfl/vq_stream.h"

namespace hyfl {
namespace {

constexpr const char* kStageParam = "meta.stage";

// Runs fn(0..n-1) on up to `threads` workers; the first exception wins.
template <typename Fn>
void ParallelFor(int n, int threads, const Fn& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int t = 0; t < std::min(threads, n); ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

void SetStage(Models& models, int stage) { models.store.Get(kStageParam).value[0] = stage; }

void RequireStage(const Models& models, int want, const char* what) {
  if (models.stage() != want) {
    throw ConfigError(std::string(what) + " needs models at stage " + std::to_string(want) +
                      ", these have completed stage " + std::to_string(models.stage()));
  }
}

// Flags that never change: frozen tables, the proxy net, bookkeeping.
void PinFrozenFlags(ParameterStore& store) {
  store.SetTrainable("cont.cdf", false);
  store.SetTrainable("proxy.", false);
  store.SetTrainable("meta.", false);
}

double CosineLr(double base, double floor_fraction, int step, int total) {
  return CosineLearningRate(base, base * floor_fraction, step, total);
}

std::vector<Tensor> PaddedImages(std::span<const Tensor> images, int tile) {
  std::vector<Tensor> out;
  for (const Tensor& im : images) out.push_back(PadToTiles(im, tile));
  return out;
}

std::vector<Tensor> AllTiles(std::span<const Tensor> images, int tile) {
  std::vector<Tensor> out;
  for (const Tensor& im : images) {
    for (Tensor& t : SplitTiles(PadToTiles(im, tile), tile)) out.push_back(std::move(t));
  }
  return out;
}

IndexMap TileIndices(const Models& m, const Tensor& tile) {
  return QuantizeToIndices(VqEncode(m.store, m.config.Vq(), tile),
                           m.store.Get("vq.codebook").value);
}

Tensor Batch1(const Tensor& t) {
  Shape s = t.shape();
  s.insert(s.begin(), 1);
  return t.Reshaped(s);
}

double L1(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (size_t k = 0; k < a.size(); ++k) s += std::abs(a[k] - b[k]);
  return s / a.size();
}

class CsvLog {
 public:
  CsvLog(const std::string& dir, const std::string& name, const std::string& header) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    out_.open(std::filesystem::path(dir) / name);
    if (!out_) throw IoError("cannot write " + dir + "/" + name);
    out_ << header << "\n";
  }
  template <typename... Args>
  void Row(const char* fmt, Args... args) {
    if (!out_.is_open()) return;
    char buf[256];
    std::snprintf(buf, sizeof(buf), fmt, args...);
    out_ << buf << "\n";
  }

 private:
  std::ofstream out_;
};

void Checkpoint(const Models& models, const std::string& dir, int stage) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  SaveCheckpoint(models.store, (std::filesystem::path(dir) / ("stage" + std::to_string(stage) +
                                                              ".ckpt")).string());
}

}  // namespace

int Models::stage() const {
  if (!store.Contains(kStageParam)) return 0;
  return static_cast<int>(store.Get(kStageParam).value[0]);
}

Models InitModels(const PipelineConfig& config) {
  config.Validate();
  Models m;
  m.config = config;
  Rng rng(config.seed);
  InitVqParams(config.Vq(), m.store, rng);
  InitContParams(config.Cont(), m.store, rng);
  InitPredictorParams(config.Predictor(), m.store, rng);
  m.store.Add(kStageParam, Tensor({1}), false);
  return m;
}

void SaveModels(const Models& models, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path p(dir);
  models.config.Save((p / "config.txt").string());
  SaveCheckpoint(models.store, (p / "params.bin").string());
  if (models.stats.calibrated) models.stats.Save((p / "complexity.bin").string());
}

Models LoadModels(const std::string& dir) {
  const std::filesystem::path p(dir);
  Models m;
  m.config = PipelineConfig::Load((p / "config.txt").string());
  LoadCheckpoint(m.store, (p / "params.bin").string());
  PinFrozenFlags(m.store);
  if (std::filesystem::exists(p / "complexity.bin")) {
    m.stats = ComplexityStats::Load((p / "complexity.bin").string());
  }
  const PipelineConfig& c = m.config;
  const Tensor& cb = m.store.Get("vq.codebook").value;
  if (cb.dim(0) != c.n_z || cb.dim(1) != c.c) {
    throw ConfigError("params.bin codebook " + ShapeToString(cb.shape()) +
                      " does not match config.txt");
  }
  return m;
}

MaskPolicy MaskPolicy::Parse(const std::string& name) {
  MaskPolicy p;
  if (name == "auto") return p;
  const auto s = MaskSchedule::Parse(name);
  if (!s) throw ConfigError("unknown mask policy '" + name + "'");
  p.automatic = false;
  p.fixed = *s;
  return p;
}

std::string MaskPolicy::name() const { return automatic ? "auto" : fixed.name(); }

Tensor PadToTiles(const Tensor& image, int tile) {
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) == 0 || image.dim(2) == 0) {
    throw DimensionError("image must be a non-empty [3,H,W], got " + ShapeToString(image.shape()));
  }
  const int h = image.dim(1), w = image.dim(2);
  const int ph = (h + tile - 1) / tile * tile, pw = (w + tile - 1) / tile * tile;
  if (ph == h && pw == w) return image;
  Tensor out({3, ph, pw});
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < ph; ++i) {
      const double* src = image.data() + (static_cast<size_t>(c) * h + std::min(i, h - 1)) * w;
      double* dst = out.data() + (static_cast<size_t>(c) * ph + i) * pw;
      std::copy_n(src, w, dst);
      std::fill(dst + w, dst + pw, src[w - 1]);
    }
  }
  return out;
}

std::vector<Tensor> SplitTiles(const Tensor& padded, int tile) {
  const int ty = padded.dim(1) / tile, tx = padded.dim(2) / tile;
  std::vector<Tensor> out;
  for (int r = 0; r < ty; ++r) {
    for (int c = 0; c < tx; ++c) out.push_back(Crop(padded, r * tile, c * tile, tile, tile));
  }
  return out;
}

Tensor AssembleTiles(std::span<const Tensor> tiles, int tile, int width, int height) {
  const int tx = (width + tile - 1) / tile, ty = (height + tile - 1) / tile;
  if (static_cast<int>(tiles.size()) != tx * ty) {
    throw DimensionError("assemble: " + std::to_string(tiles.size()) + " tiles for " +
                         std::to_string(tx) + "x" + std::to_string(ty));
  }
  Tensor out({3, height, width});
  for (int r = 0; r < ty; ++r) {
    for (int c = 0; c < tx; ++c) {
      const Tensor& t = tiles[r * tx + c];
      const int rows = std::min(tile, height - r * tile), cols = std::min(tile, width - c * tile);
      for (int ch = 0; ch < 3; ++ch) {
        for (int i = 0; i < rows; ++i) {
          std::copy_n(t.data() + (static_cast<size_t>(ch) * tile + i) * tile, cols,
                      out.data() + (static_cast<size_t>(ch) * height + r * tile + i) * width +
                          c * tile);
        }
      }
    }
  }
  return out;
}

Container EncodeImage(const Models& models, const Tensor& image, const EncodeOptions& options,
                      EncodeStats* stats) {
  if (models.stage() < 1) throw ConfigError("encode needs trained stage-1 models");
  const PipelineConfig& cfg = models.config;
  const Tensor padded = PadToTiles(image, cfg.tile);
  if (image.dim(1) > 65535 || image.dim(2) > 65535) throw EncodeError("image too large");
  Container out;
  out.header.width = static_cast<uint16_t>(image.dim(2));
  out.header.height = static_cast<uint16_t>(image.dim(1));
  out.header.tile = static_cast<uint16_t>(cfg.tile);
  out.header.n_z = static_cast<uint16_t>(cfg.n_z);
  const std::vector<Tensor> tiles = SplitTiles(padded, cfg.tile);
  out.tiles.resize(tiles.size());
  std::vector<int> saturated(tiles.size(), 0);
  const ContConfig cont = cfg.Cont();
  ParallelFor(static_cast<int>(tiles.size()), options.threads, [&](int i) {
    const IndexMap indices = TileIndices(models, tiles[i]);
    const MaskSchedule schedule = options.policy.automatic
                                      ? SelectSchedule(ComplexityScore(tiles[i], models.stats))
                                      : options.policy.fixed;
    TileRecord& rec = out.tiles[i];
    rec.schedule = schedule;
    rec.index = PackIndices(ApplyMask(indices, schedule), cfg.n_z);
    if (options.continuous) {
      ContEncoded e = ContEncode(models.store, cont, tiles[i]);
      rec.cont = std::move(e.bits);
      saturated[i] = e.saturated;
    }
  });
  if (stats) {
    stats->schedules.clear();
    for (const TileRecord& r : out.tiles) stats->schedules.push_back(r.schedule);
    stats->saturated = 0;
    for (int s : saturated) stats->saturated += s;
  }
  return out;
}

Tensor DecodeImage(const Models& models, const Container& container, const DecodeOptions& options,
                   DecodeStats* stats) {
  if (models.stage() < 3) {
    throw ConfigError("decode needs fully trained models (stage " +
                      std::to_string(models.stage()) + " of 3)");
  }
  const PipelineConfig& cfg = models.config;
  const ContainerHeader& h = container.header;
  if (h.tile != cfg.tile || h.n_z != cfg.n_z) {
    throw ConfigError("container written for tile " + std::to_string(h.tile) + ", n_z " +
                      std::to_string(h.n_z) + "; model has tile " + std::to_string(cfg.tile) +
                      ", n_z " + std::to_string(cfg.n_z));
  }
  if (static_cast<int>(container.tiles.size()) != h.TileCount()) {
    throw CorruptStreamError("container holds " + std::to_string(container.tiles.size()) +
                             " tiles, header implies " + std::to_string(h.TileCount()));
  }
  const VqConfig vq = cfg.Vq();
  const ContConfig cont = cfg.Cont();
  const PredictorConfig pred = cfg.Predictor();
  const int grid = cfg.tile / kTokenStride;
  const Tensor& codebook = models.store.Get("vq.codebook").value;
  std::vector<Tensor> tiles(container.tiles.size());
  std::atomic<int> calls{0};
  ParallelFor(static_cast<int>(tiles.size()), options.threads, [&](int i) {
    const TileRecord& rec = container.tiles[i];
    const Tensor latent = ContDecode(models.store, cont, rec.cont);
    const MaskedIndexMap masked = UnpackIndices(rec.index, rec.schedule, grid, grid, cfg.n_z);
    IndexMap full(grid, grid);
    if (static_cast<int>(masked.kept.size()) == full.size()) {
      for (const auto& [pos, index] : masked.kept) full.indices[pos] = index;
    } else {
      full = PredictFullMap(models.store, pred, masked, &latent);
      ++calls;
    }
    const Tensor vq_latent = Dequantize(full, codebook);
    // A tile sent without a continuous substream has nothing to correct.
    const bool fuse = options.fused && !rec.cont.bytes.empty();
    tiles[i] = fuse ? FusedDecode(models.store, vq, vq_latent, latent)
                    : VqDecode(models.store, vq, vq_latent).image;
  });
  if (stats) {
    stats->tiles = static_cast<int>(tiles.size());
    stats->predictor_calls = calls;
  }
  return AssembleTiles(tiles, cfg.tile, h.width, h.height);
}

std::vector<Tensor> EngineeredCorpus(int count, int size, uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> out;
  for (int k = 0; k < count; ++k) {
    // 7 flat, 2 gradient, 1 noise out of every 10.
    const int slot = k % 10;
    const TextureKind kind = slot < 7   ? TextureKind::kFlat
                             : slot < 9 ? TextureKind::kGradient
                                        : TextureKind::kNoise;
    out.push_back(MakeTexture(kind, size, size, rng, size));
  }
  return out;
}

std::vector<CorpusImage> LoadCorpus(const std::string& spec, uint64_t seed, int size) {
  std::vector<CorpusImage> out;
  auto count_of = [&](const std::string& prefix) {
    const std::string n = spec.substr(prefix.size());
    char* end = nullptr;
    const long v = std::strtol(n.c_str(), &end, 10);
    if (n.empty() || *end != '\0' || v <= 0) throw ConfigError("bad corpus spec '" + spec + "'");
    return static_cast<int>(v);
  };
  auto name_of = [](const char* stem, int k) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%03d", stem, k);
    return std::string(buf);
  };
  if (spec.starts_with("synthetic:")) {
    const std::vector<Tensor> images = MakeTextureCorpus(count_of("synthetic:"), size, seed);
    for (size_t k = 0; k < images.size(); ++k) out.push_back({name_of("synthetic", k), images[k]});
    return out;
  }
  if (spec.starts_with("engineered:")) {
    const std::vector<Tensor> images = EngineeredCorpus(count_of("engineered:"), size, seed);
    for (size_t k = 0; k < images.size(); ++k) out.push_back({name_of("engineered", k), images[k]});
    return out;
  }
  if (!std::filesystem::is_directory(spec)) throw IoError("corpus " + spec + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(spec)) {
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (entry.is_regular_file() && (ext == ".png" || ext == ".ppm")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("corpus " + spec + " holds no .png or .ppm files");
  for (const auto& f : files) out.push_back({f.filename().string(), ReadImage(f.string())});
  return out;
}

uint64_t Stage1Hash(const ParameterStore& store) {
  return store.Hash([](const Parameter& p) {
    return p.name.starts_with("vq.") || p.name.starts_with("cont.");
  });
}

uint64_t Stage2Hash(const ParameterStore& store) { return store.HashPrefix("pred."); }

void TrainStage1(Models& models, std::span<const Tensor> train, const std::string& log_dir,
                 std::ostream* progress) {
  RequireStage(models, 0, "stage 1");
  if (train.empty()) throw ConfigError("stage 1 needs training images");
  const PipelineConfig& cfg = models.config;
  ParameterStore& store = models.store;
  store.SetTrainable("", false);
  store.SetTrainable("vq.", true);
  store.SetTrainable("cont.", true);
  PinFrozenFlags(store);
  const std::vector<Tensor> padded = PaddedImages(train, cfg.tile);
  Rng rng(cfg.seed * 1000 + 1);
  CsvLog log(log_dir, "stage1_loss.csv", "stream,step,loss,l1,rate_bpp,mse");

  VqTrainer vq(cfg.Vq(), store, AdamOptions{}, cfg.seed * 1000 + 2);
  for (int step = 1; step <= cfg.vq_steps; ++step) {
    vq.set_learning_rate(CosineLr(cfg.vq_lr, cfg.lr_floor, step, cfg.vq_steps));
    std::vector<Tensor> items;
    for (int b = 0; b < cfg.vq_batch; ++b) {
      const Tensor& im = padded[rng.Below(padded.size())];
      items.push_back(Dihedral(RandomCrop(im, cfg.vq_crop, rng), static_cast<int>(rng.Below(8))));
    }
    const VqLossReport r = vq.Step(Stack(items));
    log.Row("vq,%d,%.9g,%.9g,,", step, r.total, r.l1);
    if (progress && step % 200 == 0) {
      *progress << "stage 1 vq step " << step << "/" << cfg.vq_steps << " loss " << r.total
                << " l1 " << r.l1 << std::endl;
    }
  }

  ContTrainer cont(cfg.Cont(), store, AdamOptions{}, cfg.seed * 1000 + 3);
  for (int step = 1; step <= cfg.cont_steps; ++step) {
    cont.set_learning_rate(CosineLr(cfg.cont_lr, cfg.lr_floor, step, cfg.cont_steps));
    std::vector<Tensor> items;
    for (int b = 0; b < cfg.cont_batch; ++b) {
      const Tensor& im = padded[rng.Below(padded.size())];
      items.push_back(Dihedral(RandomCrop(im, cfg.tile, rng), static_cast<int>(rng.Below(8))));
    }
    const ContLossReport r = cont.Step(Stack(items));
    log.Row("cont,%d,%.9g,,%.9g,%.9g", step, r.total, r.rate_bpp, r.mse);
    if (progress && step % 200 == 0) {
      *progress << "stage 1 cont step " << step << "/" << cfg.cont_steps << " loss " << r.total
                << " rate " << r.rate_bpp << std::endl;
    }
  }
  FreezeEntropyModel(cfg.Cont(), store);
  const std::vector<Tensor> tiles = AllTiles(train, cfg.tile);
  models.stats = Calibrate(tiles);
  store.SetTrainable("vq.", false);
  store.SetTrainable("cont.", false);
  SetStage(models, 1);
  Checkpoint(models, log_dir, 1);
}

void TrainStage2(Models& models, std::span<const Tensor> train, const std::string& log_dir,
                 std::ostream* progress) {
  RequireStage(models, 1, "stage 2");
  if (train.empty()) throw ConfigError("stage 2 needs training images");
  const PipelineConfig& cfg = models.config;
  ParameterStore& store = models.store;
  const uint64_t frozen = Stage1Hash(store);
  store.SetTrainable("", false);
  const ContConfig cont = cfg.Cont();

  std::vector<PredictorSample> samples;
  for (const Tensor& tile : AllTiles(train, cfg.tile)) {
    for (int t = 0; t < 8; ++t) {
      const Tensor view = Dihedral(tile, t);
      PredictorSample s;
      s.indices = TileIndices(models, view);
      s.latent = ContDecode(store, cont, ContEncode(store, cont, view).bits);
      samples.push_back(std::move(s));
    }
  }
  Rng rng(cfg.seed * 1000 + 4);
  CsvLog log(log_dir, "stage2_loss.csv", "phase,step,loss,accuracy");
  PredictorTrainer trainer(cfg.Predictor(), store, AdamOptions{}, cfg.seed * 1000 + 5);
  const struct {
    PredictorPhase phase;
    int steps;
    const char* name;
  } phases[] = {{PredictorPhase::kPretrain, cfg.pred_pretrain_steps, "pretrain"},
                {PredictorPhase::kGuided, cfg.pred_guided_steps, "guided"}};
  for (const auto& ph : phases) {
    trainer.set_phase(ph.phase);
    for (int step = 1; step <= ph.steps; ++step) {
      trainer.set_learning_rate(CosineLr(cfg.pred_lr, cfg.lr_floor, step, ph.steps));
      std::vector<PredictorSample> batch;
      for (int b = 0; b < cfg.pred_batch; ++b) batch.push_back(samples[rng.Below(samples.size())]);
      const PredictorLossReport r = trainer.Step(batch);
      const double acc = r.masked ? static_cast<double>(r.correct) / r.masked : 0.0;
      log.Row("%s,%d,%.9g,%.9g", ph.name, step, r.loss, acc);
      if (progress && step % 100 == 0) {
        *progress << "stage 2 " << ph.name << " step " << step << "/" << ph.steps << " loss "
                  << r.loss << " acc " << acc << std::endl;
      }
    }
  }
  if (Stage1Hash(store) != frozen) throw InvariantError("stage 2 changed stage-1 parameters");
  store.SetTrainable("pred.", false);
  SetStage(models, 2);
  Checkpoint(models, log_dir, 2);
}

void TrainStage3(Models& models, std::span<const Tensor> train, const std::string& log_dir,
                 std::ostream* progress) {
  RequireStage(models, 2, "stage 3");
  if (train.empty()) throw ConfigError("stage 3 needs training images");
  const PipelineConfig& cfg = models.config;
  ParameterStore& store = models.store;
  const uint64_t frozen1 = Stage1Hash(store), frozen2 = Stage2Hash(store);
  Rng rng(cfg.seed * 1000 + 6);
  const VqConfig vq = cfg.Vq();
  InitBridgeParams(vq, cfg.Bridge(), store, rng);
  BridgeTrainer trainer(vq, cfg.Bridge(), store, AdamOptions{});
  const std::vector<Tensor> padded = PaddedImages(train, cfg.tile);
  ContConfig crop_cont = cfg.Cont();
  crop_cont.tile = cfg.bridge_crop;
  const Tensor& codebook = store.Get("vq.codebook").value;
  CsvLog log(log_dir, "stage3_loss.csv", "step,loss,l1");
  for (int step = 1; step <= cfg.bridge_steps; ++step) {
    trainer.set_learning_rate(CosineLr(cfg.bridge_lr, cfg.lr_floor, step, cfg.bridge_steps));
    std::vector<Tensor> images, vq_latents, cont_latents;
    for (int b = 0; b < cfg.bridge_batch; ++b) {
      const Tensor& im = padded[rng.Below(padded.size())];
      Tensor x = RandomCrop(im, cfg.bridge_crop, rng);
      x = ColorVariant(Dihedral(x, static_cast<int>(rng.Below(8))), static_cast<int>(rng.Below(12)));
      Graph g(false);
      const Tensor y = VqEncoderForward(g, store, vq, g.Constant(Batch1(x))).value();
      const Tensor y0 = y.Reshaped({y.dim(1), y.dim(2), y.dim(3)});
      vq_latents.push_back(Dequantize(QuantizeToIndices(y0, codebook), codebook));
      cont_latents.push_back(ContDecode(store, crop_cont, ContEncode(store, crop_cont, x).bits));
      images.push_back(std::move(x));
    }
    const BridgeLossReport r =
        trainer.Step(Stack(images), Stack(vq_latents), Stack(cont_latents));
    log.Row("%d,%.9g,%.9g", step, r.loss, r.l1);
    if (progress && step % 100 == 0) {
      *progress << "stage 3 step " << step << "/" << cfg.bridge_steps << " loss " << r.loss
                << " l1 " << r.l1 << std::endl;
    }
  }
  if (Stage1Hash(store) != frozen1 || Stage2Hash(store) != frozen2) {
    throw InvariantError("stage 3 changed stage-1 or stage-2 parameters");
  }
  store.SetTrainable("bridge.", false);
  SetStage(models, 3);
  Checkpoint(models, log_dir, 3);
}

double MeanVqL1(const Models& models, std::span<const Tensor> images) {
  const std::vector<Tensor> tiles = AllTiles(images, models.config.tile);
  const VqConfig vq = models.config.Vq();
  const Tensor& codebook = models.store.Get("vq.codebook").value;
  double sum = 0;
  for (const Tensor& t : tiles) {
    sum += L1(VqDecode(models.store, vq, Dequantize(TileIndices(models, t), codebook)).image, t);
  }
  return tiles.empty() ? 0.0 : sum / tiles.size();
}

void MeasureHeldOut(const Models& models, std::span<const Tensor> held, TrainSummary& summary) {
  const PipelineConfig& cfg = models.config;
  const std::vector<Tensor> tiles = AllTiles(held, cfg.tile);
  const VqConfig vq = cfg.Vq();
  const ContConfig cont = cfg.Cont();
  const Tensor& codebook = models.store.Get("vq.codebook").value;
  std::vector<PredictorSample> samples;
  double vq_sum = 0, fused_sum = 0, bits = 0;
  summary.fused_better = 0;
  for (const Tensor& t : tiles) {
    PredictorSample s;
    s.indices = TileIndices(models, t);
    const ContEncoded e = ContEncode(models.store, cont, t);
    bits += e.bits.bit_length;
    s.latent = ContDecode(models.store, cont, e.bits);
    const Tensor vq_latent = Dequantize(s.indices, codebook);
    const double lv = L1(VqDecode(models.store, vq, vq_latent).image, t);
    const double lf = L1(FusedDecode(models.store, vq, vq_latent, s.latent), t);
    vq_sum += lv;
    fused_sum += lf;
    summary.fused_better += lf < lv;
    samples.push_back(std::move(s));
  }
  const int n = static_cast<int>(tiles.size());
  summary.tiles_evaluated = n;
  if (n == 0) return;
  summary.vq_l1_trained = vq_sum / n;
  summary.vq_only_l1 = vq_sum / n;
  summary.fused_l1 = fused_sum / n;
  summary.cont_bpp = bits / n / (static_cast<double>(cfg.tile) * cfg.tile);
  summary.pred_accuracy_1_4 =
      MeasureAccuracy(models.store, cfg.Predictor(), samples, MaskSchedule(MaskKind::k1_4), true)
          .rate();
}

TrainSummary TrainAll(Models& models, std::span<const Tensor> corpus, const std::string& log_dir,
                      std::ostream* progress) {
  const int holdout = models.config.holdout;
  if (holdout >= static_cast<int>(corpus.size())) {
    throw ConfigError("holdout " + std::to_string(holdout) + " leaves no training images out of " +
                      std::to_string(corpus.size()));
  }
  const auto train = corpus.first(corpus.size() - holdout);
  const auto held = holdout > 0 ? corpus.last(holdout) : train;
  TrainSummary summary;
  summary.vq_l1_init = MeanVqL1(models, held);
  using Clock = std::chrono::steady_clock;
  auto timed = [&](int k, auto&& fn) {
    const auto t0 = Clock::now();
    fn();
    summary.stage_seconds[k] = std::chrono::duration<double>(Clock::now() - t0).count();
    if (progress) *progress << "stage " << k + 1 << " done in " << summary.stage_seconds[k] << "s" << std::endl;
  };
  timed(0, [&] { TrainStage1(models, train, log_dir, progress); });
  timed(1, [&] { TrainStage2(models, train, log_dir, progress); });
  timed(2, [&] { TrainStage3(models, train, log_dir, progress); });
  MeasureHeldOut(models, held, summary);
  if (!log_dir.empty()) SaveModels(models, log_dir);
  return summary;
}

std::vector<RdPoint> Evaluate(const Models& models, std::span<const CorpusImage> corpus,
                              std::span<const MaskPolicy> policies,
                              std::vector<ScheduleCell>* schedule_map, int threads) {
  std::vector<RdPoint> rows;
  const int tile = models.config.tile;
  for (const MaskPolicy& policy : policies) {
    RdPoint mean;
    mean.image = "mean";
    mean.policy = policy.name();
    for (const CorpusImage& item : corpus) {
      EncodeOptions eo;
      eo.policy = policy;
      eo.threads = threads;
      EncodeStats es;
      const std::vector<uint8_t> bytes = WriteContainer(EncodeImage(models, item.image, eo, &es));
      const Container c = ReadContainer(bytes);
      const BppBreakdown bpp = ComputeBpp(c);
      DecodeOptions dopt;
      dopt.threads = threads;
      DecodeStats ds;
      const Tensor fused = DecodeImage(models, c, dopt, &ds);
      dopt.fused = false;
      const Tensor plain = DecodeImage(models, c, dopt);
      RdPoint r;
      r.image = item.name;
      r.policy = policy.name();
      r.bpp = bpp.total_bpp();
      r.index_bpp = bpp.index_bpp();
      r.continuous_bpp = bpp.continuous_bpp();
      r.header_bpp = bpp.header_bpp();
      r.psnr = Psnr8(item.image, fused);
      r.psnr_vq_only = Psnr8(item.image, plain);
      {
        Graph g(false);
        r.proxy = PerceptualProxy(g, models.store, g.Constant(Batch1(item.image)),
                                  g.Constant(Batch1(fused)))
                      .value()[0];
      }
      r.predictor_calls = ds.predictor_calls;
      rows.push_back(r);
      mean.bpp += r.bpp;
      mean.index_bpp += r.index_bpp;
      mean.continuous_bpp += r.continuous_bpp;
      mean.header_bpp += r.header_bpp;
      mean.psnr += r.psnr;
      mean.psnr_vq_only += r.psnr_vq_only;
      mean.proxy += r.proxy;
      mean.predictor_calls += r.predictor_calls;
      if (schedule_map) {
        const int tx = (item.image.dim(2) + tile - 1) / tile;
        for (size_t k = 0; k < es.schedules.size(); ++k) {
          schedule_map->push_back({item.name, policy.name(), static_cast<int>(k) / tx,
                                   static_cast<int>(k) % tx, es.schedules[k].name()});
        }
      }
    }
    if (!corpus.empty()) {
      const double n = static_cast<double>(corpus.size());
      mean.bpp /= n;
      mean.index_bpp /= n;
      mean.continuous_bpp /= n;
      mean.header_bpp /= n;
      mean.psnr /= n;
      mean.psnr_vq_only /= n;
      mean.proxy /= n;
      rows.push_back(mean);
    }
  }
  return rows;
}

void WriteRdCsv(const std::string& path, std::span<const RdPoint> rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "image,policy,bpp,index_bpp,continuous_bpp,header_bpp,psnr,psnr_vq_only,proxy,"
         "predictor_calls\n";
  char buf[512];
  for (const RdPoint& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%.9g,%.9g,%.9g,%.9g,%.6f,%.6f,%.9g,%d\n",
                  r.image.c_str(), r.policy.c_str(), r.bpp, r.index_bpp, r.continuous_bpp,
                  r.header_bpp, r.psnr, r.psnr_vq_only, r.proxy, r.predictor_calls);
    out << buf;
  }
}

void WriteScheduleCsv(const std::string& path, std::span<const ScheduleCell> cells) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "image,policy,tile_row,tile_col,schedule\n";
  for (const ScheduleCell& c : cells) {
    out << c.image << "," << c.policy << "," << c.tile_row << "," << c.tile_col << ","
        << c.schedule << "\n";
  }
}

}  // namespace hyfl
