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

#include "hyfl/pipeline_config.h"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <utility>

#include "hyfl/errors.h"
#include "hyfl/masking.h"

namespace hyfl {
namespace {

std::string Trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <typename T>
T ParseNumber(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config: bad value '" + v + "' for " + key);
  }
  return out;
}

std::string FormatDouble(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

// Binds a key to a member with its parser and printer.
struct Field {
  const char* key;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

#define HYFL_INT(name)                                                                        \
  Field{#name, [](PipelineConfig& c, const std::string& v) { c.name = ParseNumber<int>(#name, v); }, \
        [](const PipelineConfig& c) { return std::to_string(c.name); }}
#define HYFL_DOUBLE(name)                                                          \
  Field{#name,                                                                     \
        [](PipelineConfig& c, const std::string& v) {                              \
          c.name = ParseNumber<double>(#name, v);                                  \
        },                                                                         \
        [](const PipelineConfig& c) { return FormatDouble(c.name); }}
#define HYFL_INT_LIST(name)                                                         \
  Field{#name,                                                                      \
        [](PipelineConfig& c, const std::string& v) {                               \
          c.name.clear();                                                           \
          std::stringstream ss(v);                                                  \
          std::string item;                                                         \
          while (std::getline(ss, item, ',')) {                                     \
            c.name.push_back(ParseNumber<int>(#name, Trim(item)));                  \
          }                                                                         \
        },                                                                          \
        [](const PipelineConfig& c) {                                               \
          std::string s;                                                            \
          for (size_t k = 0; k < c.name.size(); ++k) {                              \
            s += (k ? "," : "") + std::to_string(c.name[k]);                        \
          }                                                                         \
          return s;                                                                 \
        }}

const std::vector<Field>& Fields() {
  static const std::vector<Field> fields = {
      HYFL_INT(tile),
      Field{"seed",
            [](PipelineConfig& c, const std::string& v) { c.seed = ParseNumber<uint64_t>("seed", v); },
            [](const PipelineConfig& c) { return std::to_string(c.seed); }},
      HYFL_INT(n_z),
      HYFL_INT(c),
      HYFL_INT_LIST(enc_channels),
      HYFL_INT_LIST(dec_channels),
      HYFL_DOUBLE(beta),
      HYFL_INT(f),
      HYFL_INT(cont_hidden),
      HYFL_INT(support),
      HYFL_DOUBLE(lambda),
      HYFL_INT(width),
      HYFL_INT(enc_blocks),
      HYFL_INT(dec_blocks),
      HYFL_INT(heads),
      HYFL_INT(mlp_ratio),
      HYFL_DOUBLE(w1),
      HYFL_DOUBLE(w2),
      Field{"policy", [](PipelineConfig& c, const std::string& v) { c.policy = v; },
            [](const PipelineConfig& c) { return c.policy; }},
      HYFL_INT(vq_steps),
      HYFL_INT(vq_batch),
      HYFL_INT(vq_crop),
      HYFL_DOUBLE(vq_lr),
      HYFL_INT(cont_steps),
      HYFL_INT(cont_batch),
      HYFL_DOUBLE(cont_lr),
      HYFL_INT(pred_pretrain_steps),
      HYFL_INT(pred_guided_steps),
      HYFL_INT(pred_batch),
      HYFL_DOUBLE(pred_lr),
      HYFL_INT(bridge_steps),
      HYFL_INT(bridge_batch),
      HYFL_INT(bridge_crop),
      HYFL_DOUBLE(bridge_lr),
      HYFL_DOUBLE(lr_floor),
      HYFL_INT(holdout),
  };
  return fields;
}

#undef HYFL_INT
#undef HYFL_DOUBLE
#undef HYFL_INT_LIST

}  // namespace

VqConfig PipelineConfig::Vq() const {
  VqConfig v;
  v.tile = tile;
  v.c = c;
  v.n_z = n_z;
  v.enc_channels = enc_channels;
  v.dec_channels = dec_channels;
  v.beta = beta;
  return v;
}

ContConfig PipelineConfig::Cont() const {
  ContConfig v;
  v.tile = tile;
  v.f = f;
  v.hidden = cont_hidden;
  v.support = support;
  v.lambda = lambda;
  return v;
}

PredictorConfig PipelineConfig::Predictor() const {
  PredictorConfig v;
  v.n_z = n_z;
  v.width = width;
  v.enc_blocks = enc_blocks;
  v.dec_blocks = dec_blocks;
  v.heads = heads;
  v.mlp_ratio = mlp_ratio;
  v.grid = tile / 16;
  v.f = f;
  v.latent_side = tile / 32;
  return v;
}

BridgeConfig PipelineConfig::Bridge() const {
  BridgeConfig v;
  v.f = f;
  v.w1 = w1;
  v.w2 = w2;
  return v;
}

void PipelineConfig::Validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
  if (tile <= 0 || tile % 32 != 0 || tile / 16 > 255) fail("tile must be a multiple of 32 up to 4080");
  if (n_z < 2 || n_z > 65535) fail("n_z must be in [2, 65535]");
  if (enc_channels.size() != kVqStages) fail("enc_channels needs 4 entries");
  if (dec_channels.size() != kVqStages + 1) fail("dec_channels needs 5 entries");
  if (enc_channels.back() <= 0 || c <= 0 || f <= 0 || f > 255) fail("bad channel counts");
  if (support < 1) fail("support must be positive");
  if (width % heads != 0 || width % 4 != 0) fail("width must divide by heads and by 4");
  if (w1 < 0 || w2 < 0 || lambda < 0) fail("loss weights must be non-negative");
  if (policy != "auto" && !MaskSchedule::Parse(policy)) fail("unknown policy '" + policy + "'");
  if (vq_crop % 16 != 0 || vq_crop > tile) fail("vq_crop must be a multiple of 16 within the tile");
  if (bridge_crop % 32 != 0 || bridge_crop > tile) fail("bridge_crop must be a multiple of 32 within the tile");
  if (vq_batch < 1 || cont_batch < 1 || pred_batch < 1 || bridge_batch < 1) fail("batch sizes must be positive");
  if (holdout < 0) fail("holdout must be non-negative");
}

PipelineConfig PipelineConfig::Parse(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = Trim(line.substr(0, eq)), value = Trim(line.substr(eq + 1));
    bool found = false;
    for (const Field& field : Fields()) {
      if (key == field.key) {
        field.set(cfg, value);
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  cfg.Validate();
  return cfg;
}

std::string PipelineConfig::Serialize() const {
  std::string out;
  for (const Field& field : Fields()) out += std::string(field.key) + " = " + field.get(*this) + "\n";
  return out;
}

PipelineConfig PipelineConfig::Load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return Parse(ss.str());
}

void PipelineConfig::Save(const std::string& path) const {
  std::ofstream out(path);
  out << Serialize();
  if (!out) throw IoError("cannot write config " + path);
}

}  // namespace hyfl
