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

#include "hyfl/bridge_decoder.h"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "hyfl/dataset.h"
#include "hyfl/errors.h"
#include "hyfl/grad_check.h"
#include "hyfl/ops.h"

namespace hyfl {
namespace {

VqConfig SmallVq() {
  VqConfig cfg;
  cfg.n_z = 16;
  cfg.c = 4;
  cfg.enc_channels = {4, 4, 4, 4};
  cfg.dec_channels = {6, 5, 4, 3, 3};
  cfg.tile = 64;
  return cfg;
}

ParameterStore MakeModel(const VqConfig& vq, const BridgeConfig& cfg, uint64_t seed) {
  ParameterStore store;
  Rng rng(seed);
  InitVqParams(vq, store, rng);
  InitBridgeParams(vq, cfg, store, rng);
  return store;
}

bool BitIdentical(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

TEST(BridgeInitTest, CorrectionNetCopiesDecoderTrunk) {
  const VqConfig vq = SmallVq();
  const ParameterStore store = MakeModel(vq, BridgeConfig{}, 1);
  for (const std::string& name : store.Names("vq.dec.")) {
    if (name.starts_with("vq.dec.head")) {
      EXPECT_FALSE(store.Contains("bridge.corr.head" + name.substr(11)));
      continue;
    }
    const std::string copy = "bridge.corr." + name.substr(7);
    ASSERT_TRUE(store.Contains(copy)) << copy;
    EXPECT_TRUE(BitIdentical(store.Get(copy).value, store.Get(name).value));
  }
  for (int s = 0; s < kVqStages; ++s) {
    const Tensor& w = store.Get("bridge.fuse" + std::to_string(s) + ".w").value;
    for (size_t k = 0; k < w.size(); ++k) EXPECT_EQ(w[k], 0.0);
  }
  EXPECT_FALSE(store.Get("proxy.l0.w").trainable);
}

TEST(BridgeInitTest, NeedsVqDecoder) {
  ParameterStore store;
  Rng rng(2);
  EXPECT_THROW(InitBridgeParams(SmallVq(), BridgeConfig{}, store, rng), ConfigError);
}

TEST(FusedDecodeTest, ZeroFusionIsBitIdenticalToVqDecode) {
  const VqConfig vq = SmallVq();
  const ParameterStore store = MakeModel(vq, BridgeConfig{}, 3);
  Rng rng(4);
  for (int trial = 0; trial < 3; ++trial) {
    const Tensor latent = Tensor::RandomNormal({vq.c, 4, 4}, rng);
    const Tensor cont = Tensor::RandomNormal({8, 2, 2}, rng, 3.0);
    EXPECT_TRUE(BitIdentical(FusedDecode(store, vq, latent, cont),
                             VqDecode(store, vq, latent).image));
  }
}

TEST(FusedDecodeTest, ZeroContinuousLatentIsIdentity) {
  const VqConfig vq = SmallVq();
  ParameterStore store = MakeModel(vq, BridgeConfig{}, 5);
  Rng rng(6);
  for (int s = 0; s < kVqStages; ++s) {
    Tensor& w = store.Get("bridge.fuse" + std::to_string(s) + ".w").value;
    w = Tensor::RandomNormal(w.shape(), rng);
  }
  const Tensor latent = Tensor::RandomNormal({vq.c, 4, 4}, rng);
  EXPECT_TRUE(BitIdentical(FusedDecode(store, vq, latent, Tensor({8, 2, 2})),
                           VqDecode(store, vq, latent).image));
  // A non-zero latent now changes the output.
  const Tensor cont = Tensor::RandomNormal({8, 2, 2}, rng);
  EXPECT_FALSE(BitIdentical(FusedDecode(store, vq, latent, cont),
                            VqDecode(store, vq, latent).image));
}

TEST(FusedDecodeTest, StagesAlign) {
  VqConfig vq;
  vq.n_z = 16;
  ParameterStore store = MakeModel(vq, BridgeConfig{}, 7);
  Graph g(false);
  std::vector<Var> corr, main;
  Var adapted = ConvLayer(g, store, "bridge.adapt",
                          ops::NearestResize(g.Constant(Tensor({1, 8, 8, 8})), 16, 16));
  DecoderTrunk(g, store, "bridge.corr", vq, adapted, {}, &corr);
  VqDecoderForward(g, store, vq, g.Constant(Tensor({1, vq.c, 16, 16})), {}, &main);
  ASSERT_EQ(corr.size(), 4u);
  for (int s = 0; s < 4; ++s) {
    EXPECT_EQ(corr[s].shape(), main[s].shape());
    EXPECT_EQ(corr[s].shape()[2], 32 << s);
  }
}

TEST(FusedDecodeTest, MismatchNamesStage) {
  const VqConfig vq = SmallVq();
  ParameterStore store = MakeModel(vq, BridgeConfig{}, 8);
  store.Set("bridge.fuse2.w", Tensor({vq.dec_channels[3] + 1, vq.dec_channels[3], 1, 1}));
  try {
    FusedDecode(store, vq, Tensor({vq.c, 4, 4}), Tensor({8, 2, 2}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("stage 2"), std::string::npos) << e.what();
  }
}

// Reference conv (pad 1, 3x3) and GELU written out directly.
Tensor NaiveConv(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
  const int c = x.dim(0), h = x.dim(1), wd = x.dim(2), o = w.dim(0);
  const int oh = (h - 1) / stride + 1, ow = (wd - 1) / stride + 1;
  Tensor y({o, oh, ow});
  for (int oc = 0; oc < o; ++oc) {
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        double s = b[oc];
        for (int ic = 0; ic < c; ++ic) {
          for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
              const int yy = i * stride + ky - 1, xx = j * stride + kx - 1;
              if (yy < 0 || yy >= h || xx < 0 || xx >= wd) continue;
              s += w[((oc * c + ic) * 3 + ky) * 3 + kx] * x[(ic * h + yy) * wd + xx];
            }
          }
        }
        y[(oc * oh + i) * ow + j] = 0.5 * s * (1.0 + std::erf(s / std::sqrt(2.0)));
      }
    }
  }
  return y;
}

TEST(PixelLossTest, Examples) {
  const ParameterStore store = MakeModel(SmallVq(), BridgeConfig{}, 9);
  Rng rng(10);
  const Tensor x = Tensor::RandomUniform({2, 3, 16, 16}, rng, -1, 1);
  Tensor shifted = x;
  for (size_t k = 0; k < x.size(); ++k) shifted[k] += 0.5;
  Graph g(false);
  EXPECT_EQ(PixelLoss(g, store, g.Constant(x), g.Constant(x), 1.0, 0.1).value()[0], 0.0);
  EXPECT_EQ(PixelLoss(g, store, g.Constant(x), g.Constant(x), 3.0, 7.0).value()[0], 0.0);
  EXPECT_NEAR(PixelLoss(g, store, g.Constant(x), g.Constant(shifted), 1.0, 0.0).value()[0], 0.5,
              1e-12);
}

TEST(PixelLossTest, ProxyMatchesIndependentForward) {
  const ParameterStore store = MakeModel(SmallVq(), BridgeConfig{}, 11);
  Rng rng(12);
  const Tensor a = Tensor::RandomUniform({1, 3, 12, 12}, rng, -1, 1);
  const Tensor b = Tensor::RandomUniform({1, 3, 12, 12}, rng, -1, 1);
  auto layers = [&](const Tensor& img) {
    std::vector<Tensor> f;
    Tensor h = img.Reshaped({3, 12, 12});
    const int strides[3] = {1, 2, 2};
    for (int l = 0; l < 3; ++l) {
      const std::string n = "proxy.l" + std::to_string(l);
      h = NaiveConv(h, store.Get(n + ".w").value, store.Get(n + ".b").value, strides[l]);
      f.push_back(h);
    }
    return f;
  };
  const auto fa = layers(a), fb = layers(b);
  double want = 0;
  for (int l = 0; l < 3; ++l) {
    double s = 0;
    for (size_t k = 0; k < fa[l].size(); ++k) s += (fa[l][k] - fb[l][k]) * (fa[l][k] - fb[l][k]);
    want += s / fa[l].size();
  }
  Graph g(false);
  const double got = PixelLoss(g, store, g.Constant(a), g.Constant(b), 0.0, 1.0).value()[0];
  EXPECT_NEAR(got, want, 1e-12 * std::max(1.0, want));
  EXPECT_GT(want, 0.0);
}

TEST(PixelLossTest, GradCheck) {
  const ParameterStore store = MakeModel(SmallVq(), BridgeConfig{}, 13);
  Rng rng(14);
  const Tensor x = Tensor::RandomUniform({1, 3, 8, 8}, rng, -1, 1);
  // Keep |x - xhat| away from the L1 kink.
  Tensor xhat = x;
  for (size_t k = 0; k < x.size(); ++k) xhat[k] += (rng.Below(2) ? 1 : -1) * rng.Uniform(0.1, 0.5);
  const GradCheckResult r = GradCheck(
      [&](Graph& g, const std::vector<Var>& in) {
        return PixelLoss(g, store, g.Constant(x), in[0], 1.0, 0.1);
      },
      {xhat});
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(BridgeGradCheckTest, FusedDecodeParams) {
  const VqConfig vq = SmallVq();
  ParameterStore store = MakeModel(vq, BridgeConfig{}, 15);
  Rng rng(16);
  for (int s = 0; s < kVqStages; ++s) {
    Tensor& w = store.Get("bridge.fuse" + std::to_string(s) + ".w").value;
    w = Tensor::RandomNormal(w.shape(), rng, 0.5);
  }
  store.SetTrainable("", false);
  store.SetTrainable("bridge.", true);
  const Tensor latent = Tensor::RandomNormal({1, vq.c, 1, 1}, rng);
  const Tensor cont = Tensor::RandomNormal({1, 8, 1, 1}, rng);
  const Tensor target = Tensor::RandomUniform({1, 3, 16, 16}, rng, -1, 1);
  auto loss = [&](Graph& g) {
    Var xhat = FusedDecoderForward(g, store, vq, g.Constant(latent), g.Constant(cont));
    return ops::MseLoss(xhat, g.Constant(target));
  };
  const GradCheckResult r = GradCheckParams(loss, store, {"bridge."}, rng, 4);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

struct ToyData {
  std::vector<Tensor> images, latents, conts;
};

ToyData MakeToyData(const ParameterStore& store, const VqConfig& vq, int count, uint64_t seed) {
  ToyData d;
  Rng rng(seed);
  d.images = MakeTextureCorpus(count, 64, seed);
  for (const Tensor& img : d.images) {
    d.latents.push_back(Dequantize(QuantizeToIndices(VqEncode(store, vq, img),
                                                     store.Get("vq.codebook").value),
                                   store.Get("vq.codebook").value));
    // Stand-in continuous latent: 2x2 block means of the image.
    Tensor c({8, 2, 2});
    for (int ch = 0; ch < 3; ++ch) {
      for (int i = 0; i < 64; ++i) {
        for (int j = 0; j < 64; ++j) c[(ch * 2 + i / 32) * 2 + j / 32] += img[(ch * 64 + i) * 64 + j] / 1024.0;
      }
    }
    d.conts.push_back(c);
  }
  return d;
}

TEST(BridgeTrainTest, FirstLossMatchesVqDecodeAndFreezeHolds) {
  const VqConfig vq = SmallVq();
  ParameterStore store = MakeModel(vq, BridgeConfig{}, 17);
  const ToyData d = MakeToyData(store, vq, 2, 18);
  BridgeTrainer trainer(vq, BridgeConfig{}, store, AdamOptions{});
  const uint64_t frozen = NonBridgeHash(store);
  double plain;
  {
    Graph g(false);
    Var x = g.Constant(Stack(d.images));
    Var xhat = VqDecoderForward(g, store, vq, g.Constant(Stack(d.latents)));
    plain = PixelLoss(g, store, x, xhat, 1.0, 0.1).value()[0];
  }
  const uint64_t bridge_before = store.HashPrefix("bridge.");
  for (int step = 0; step < 100; ++step) {
    const BridgeLossReport r = trainer.Step(Stack(d.images), Stack(d.latents), Stack(d.conts));
    if (step == 0) {
      EXPECT_EQ(r.loss, plain);
    }
  }
  EXPECT_EQ(NonBridgeHash(store), frozen);
  EXPECT_EQ(trainer.frozen_hash(), frozen);
  EXPECT_NE(store.HashPrefix("bridge."), bridge_before);
}

TEST(BridgeTrainTest, LossDecreases) {
  const VqConfig vq = SmallVq();
  ParameterStore store = MakeModel(vq, BridgeConfig{}, 19);
  const ToyData d = MakeToyData(store, vq, 12, 20);
  BridgeTrainer trainer(vq, BridgeConfig{}, store, AdamOptions{});
  Rng rng(21);
  std::vector<double> curve;
  for (int step = 1; step <= 1000; ++step) {
    std::vector<Tensor> x, l, c;
    for (int b = 0; b < 2; ++b) {
      const size_t k = rng.Below(d.images.size());
      x.push_back(d.images[k]);
      l.push_back(d.latents[k]);
      c.push_back(d.conts[k]);
    }
    curve.push_back(trainer.Step(Stack(x), Stack(l), Stack(c)).loss);
  }
  // Means over 100-step windows.
  std::vector<double> window(10, 0.0);
  for (int k = 0; k < 1000; ++k) window[k / 100] += curve[k] / 100;
  std::printf("bridge loss %.4f -> %.4f\n", window.front(), window.back());
  EXPECT_LT(window.back(), 0.8 * window.front());
  EXPECT_LT(window[9], window[4]);
}

}  // namespace
}  // namespace hyfl
