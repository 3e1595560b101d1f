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

#ifndef HYFL_VQ_STREAM_H_
#define HYFL_VQ_STREAM_H_

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hyfl/graph.h"
#include "hyfl/index_map.h"
#include "hyfl/layers.h"
#include "hyfl/params.h"
#include "hyfl/rng.h"
#include "hyfl/tensor.h"

namespace hyfl {

inline constexpr int kVqStages = 4;

struct VqConfig {
  int tile = 256;
  int c = 32;
  int n_z = 1024;
  // Output channels of the four stride-2 encoder stages.
  std::vector<int> enc_channels = {8, 16, 32, 32};
  // Decoder input conv, then the outputs of the four x2 stages.
  std::vector<int> dec_channels = {32, 24, 16, 8, 8};
  double beta = 0.25;
  int dead_after = 200;
};

// Parameters live under "vq.": vq.enc.*, vq.codebook [n_z, c], vq.dec.*.
void InitVqParams(const VqConfig& cfg, ParameterStore& store, Rng& rng);
// Decoder trunk only (no head) under `prefix`; shared with the correction net.
void InitDecoderTrunk(const VqConfig& cfg, const std::string& prefix, ParameterStore& store,
                      Rng& rng);

// [N, 3, H, W] -> [N, c, H/16, W/16].
Var VqEncoderForward(Graph& g, const ParamView& p, const VqConfig& cfg, Var image);

// Four stages of (x2 upsample conv, + injection, GELU, residual conv).
// `injections` is empty or holds one map per stage, added before the GELU.
// Stage outputs are appended to `features` when it is not null.
Var DecoderTrunk(Graph& g, const ParamView& p, const std::string& prefix, const VqConfig& cfg,
                 Var latent, std::span<const Var> injections, std::vector<Var>* features);
// Trunk plus tanh head; output in [-1, 1].
Var VqDecoderForward(Graph& g, const ParamView& p, const VqConfig& cfg, Var latent,
                     std::span<const Var> injections = {}, std::vector<Var>* features = nullptr);

// Nearest codeword, ties to the lowest index. v has codebook.dim(1) entries.
int NearestCodeword(const double* v, const Tensor& codebook);

// latent [c, h, w] -> h x w index map.
IndexMap QuantizeToIndices(const Tensor& latent, const Tensor& codebook);
// Inverse lookup; throws CorruptStreamError for an index outside [0, n_z).
Tensor Dequantize(const IndexMap& indices, const Tensor& codebook);

// image [3, tile, tile] -> latent [c, tile/16, tile/16].
Tensor VqEncode(const ParameterStore& store, const VqConfig& cfg, const Tensor& image);

struct VqDecoded {
  Tensor image;                            // [3, tile, tile]
  std::array<Tensor, kVqStages> features;  // stage outputs, 32..256 for a 256 tile
};
VqDecoded VqDecode(const ParameterStore& store, const VqConfig& cfg, const Tensor& latent);

// y + sg(cd - y): forward value cd, identity gradient to y.
Var StraightThrough(Var y, Var cd);

struct VqLossVars {
  Var total, l1, codebook, commit;
};
// L1(x, xhat) + mse(sg(y), cd) + beta * mse(y, sg(cd)).
VqLossVars VqLoss(Var x, Var xhat, Var y, Var cd, double beta);

struct VqLossReport {
  int64_t step = 0;
  double total = 0.0;
  double l1 = 0.0;
  double codebook = 0.0;
  double commit = 0.0;
  int reseeded = 0;
};

// Stage-1 optimizer state for the VQ stream.
class VqTrainer {
 public:
  VqTrainer(const VqConfig& cfg, ParameterStore& store, const AdamOptions& adam, uint64_t seed);

  // batch [N, 3, H, W] with H, W multiples of 16. Throws NumericError naming
  // the step on a non-finite loss or codebook.
  VqLossReport Step(const Tensor& batch);
  int64_t steps() const { return step_; }
  void set_learning_rate(double lr) { adam_.lr = lr; }

 private:
  void InitCodebook(const Tensor& rows);

  VqConfig cfg_;
  ParameterStore& store_;
  AdamOptions adam_;
  Rng rng_;
  int64_t step_ = 0;
  bool codebook_ready_ = false;
  std::vector<int64_t> last_used_;
};

}  // namespace hyfl

#endif  // HYFL_VQ_STREAM_H_
