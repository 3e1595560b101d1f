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

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>

#include "hyfl/errors.h"
#include "hyfl/grad_check.h"
#include "op_cases.h"
#include "hyfl/graph.h"
#include "hyfl/ops.h"
#include "hyfl/params.h"
#include "hyfl/rng.h"

namespace hyfl {
namespace {

using namespace ops;

// Direct 6-loop convolution.
Tensor ConvOracle(const Tensor& x, const Tensor& w, int stride, int pad) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int o = w.dim(0), k = w.dim(2);
  const int ho = (h + 2 * pad - k) / stride + 1, wo = (wd + 2 * pad - k) / stride + 1;
  Tensor out({n, o, ho, wo});
  for (int b = 0; b < n; ++b)
    for (int oc = 0; oc < o; ++oc)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double s = 0;
          for (int ic = 0; ic < c; ++ic)
            for (int ki = 0; ki < k; ++ki)
              for (int kj = 0; kj < k; ++kj) {
                const int iy = oy * stride - pad + ki, ix = ox * stride - pad + kj;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                s += x[((b * c + ic) * h + iy) * wd + ix] * w[((oc * c + ic) * k + ki) * k + kj];
              }
          out[((b * o + oc) * ho + oy) * wo + ox] = s;
        }
  return out;
}

Tensor UpsampleOracle(const Tensor& x) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({n, c, 2 * h, 2 * w});
  for (int p = 0; p < n * c; ++p)
    for (int i = 0; i < 2 * h; ++i)
      for (int j = 0; j < 2 * w; ++j)
        out[(p * 2 * h + i) * 2 * w + j] = x[(p * h + i / 2) * w + j / 2];
  return out;
}

// Explicit per-head attention with scalar loops.
Tensor AttentionOracle(const Tensor& q, const Tensor& k, const Tensor& v, int heads) {
  const int b = q.dim(0), tq = q.dim(1), d = q.dim(2), tk = k.dim(1), dh = d / heads;
  Tensor out(q.shape());
  for (int bi = 0; bi < b; ++bi)
    for (int h = 0; h < heads; ++h)
      for (int i = 0; i < tq; ++i) {
        std::vector<double> s(tk);
        double mx = -1e300;
        for (int j = 0; j < tk; ++j) {
          double dot = 0;
          for (int e = 0; e < dh; ++e)
            dot += q[(bi * tq + i) * d + h * dh + e] * k[(bi * tk + j) * d + h * dh + e];
          s[j] = dot / std::sqrt(double(dh));
          mx = std::max(mx, s[j]);
        }
        double z = 0;
        for (double& x : s) z += (x = std::exp(x - mx));
        for (int e = 0; e < dh; ++e) {
          double acc = 0;
          for (int j = 0; j < tk; ++j) acc += s[j] / z * v[(bi * tk + j) * d + h * dh + e];
          out[(bi * tq + i) * d + h * dh + e] = acc;
        }
      }
  return out;
}

double MaxRelDiff(const Tensor& a, const Tensor& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  return m;
}

Tensor Eval(const std::function<Var(Graph&)>& f) {
  Graph g(false);
  return f(g).value();
}

TEST(Conv2dTest, OnesGiveNine) {
  Tensor out = Eval([](Graph& g) {
    return Conv2d(g.Constant(Tensor({1, 1, 3, 3}, 1.0)), g.Constant(Tensor({1, 1, 3, 3}, 1.0)), 1, 0);
  });
  ASSERT_EQ(out.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(out[0], 9.0);
}

TEST(Conv2dTest, IdentityKernel) {
  Rng rng(3);
  Tensor x = Tensor::RandomNormal({2, 1, 5, 7}, rng);
  Tensor out = Eval([&](Graph& g) {
    return Conv2d(g.Constant(x), g.Constant(Tensor({1, 1, 1, 1}, 1.0)), 1, 0);
  });
  EXPECT_EQ(out, x);
}

TEST(Conv2dTest, MatchesLoopOracle) {
  Rng rng(11);
  for (auto [stride, pad] : {std::pair{1, 0}, {1, 1}, {2, 1}, {2, 0}}) {
    Tensor x = Tensor::RandomNormal({2, 4, 8, 8}, rng);
    Tensor w = Tensor::RandomNormal({6, 4, 3, 3}, rng);
    Tensor out = Eval([&](Graph& g) { return Conv2d(g.Constant(x), g.Constant(w), stride, pad); });
    EXPECT_LE(MaxRelDiff(out, ConvOracle(x, w, stride, pad)), 1e-12) << stride << "," << pad;
  }
}

TEST(Conv2dTest, ShapeErrorNamesBothShapes) {
  Graph g(false);
  try {
    Conv2d(g.Constant(Tensor({1, 3, 8, 8})), g.Constant(Tensor({4, 2, 3, 3})), 1, 1);
    FAIL();
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[1x3x8x8]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4x2x3x3]"), std::string::npos) << msg;
  }
}

TEST(UpsampleConvTest, NearestRepeat) {
  Tensor k({1, 1, 3, 3});
  k[4] = 1.0;
  Tensor out = Eval([&](Graph& g) {
    return UpsampleConv(g.Constant(Tensor({1, 1, 2, 2}, {1, 2, 3, 4})), g.Constant(k), 2);
  });
  EXPECT_EQ(out, Tensor({1, 1, 4, 4}, {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4}));
}

TEST(UpsampleConvTest, ZeroInZeroOut) {
  Rng rng(5);
  Tensor k = Tensor::RandomNormal({3, 2, 3, 3}, rng);
  Tensor out = Eval([&](Graph& g) {
    return UpsampleConv(g.Constant(Tensor({1, 2, 4, 4})), g.Constant(k), 2);
  });
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(UpsampleConvTest, MatchesComposedOracle) {
  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor x = Tensor::RandomNormal({2, 3, 5, 4}, rng);
    Tensor k = Tensor::RandomNormal({4, 3, 3, 3}, rng);
    Tensor out = Eval([&](Graph& g) { return UpsampleConv(g.Constant(x), g.Constant(k), 2); });
    EXPECT_LE(MaxRelDiff(out, ConvOracle(UpsampleOracle(x), k, 1, 1)), 1e-12);
  }
}

TEST(UpsampleConvTest, UnsupportedFactor) {
  Graph g(false);
  EXPECT_THROW(UpsampleConv(g.Constant(Tensor({1, 1, 2, 2})), g.Constant(Tensor({1, 1, 3, 3})), 3),
               ConfigError);
}

TEST(AttentionTest, SingleToken) {
  Tensor out = Eval([](Graph& g) {
    Var one = g.Constant(Tensor({1, 1, 1}, 1.0));
    return Attention(one, one, one, 1);
  });
  EXPECT_DOUBLE_EQ(out[0], 1.0);
}

TEST(AttentionTest, IdenticalKeysAverageValues) {
  Tensor out = Eval([](Graph& g) {
    Var q = g.Constant(Tensor({1, 1, 2}, {0.3, -2.0}));
    Var k = g.Constant(Tensor({1, 2, 2}, {1.0, 2.0, 1.0, 2.0}));
    Var v = g.Constant(Tensor({1, 2, 2}, {1.0, 5.0, 3.0, -1.0}));
    return Attention(q, k, v, 1);
  });
  EXPECT_NEAR(out[0], 2.0, 1e-15);
  EXPECT_NEAR(out[1], 2.0, 1e-15);
}

TEST(AttentionTest, MatchesPerHeadOracle) {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor q = Tensor::RandomNormal({1, 4, 8}, rng);
    Tensor k = Tensor::RandomNormal({1, 4, 8}, rng);
    Tensor v = Tensor::RandomNormal({1, 4, 8}, rng);
    Tensor out = Eval([&](Graph& g) {
      return Attention(g.Constant(q), g.Constant(k), g.Constant(v), 2);
    });
    EXPECT_LE(MaxRelDiff(out, AttentionOracle(q, k, v, 2)), 1e-10);
  }
  // Cross-attention shapes: 3 queries over 5 keys, batch 2.
  Tensor q = Tensor::RandomNormal({2, 3, 12}, rng);
  Tensor k = Tensor::RandomNormal({2, 5, 12}, rng);
  Tensor v = Tensor::RandomNormal({2, 5, 12}, rng);
  Tensor out = Eval([&](Graph& g) {
    return Attention(g.Constant(q), g.Constant(k), g.Constant(v), 3);
  });
  EXPECT_LE(MaxRelDiff(out, AttentionOracle(q, k, v, 3)), 1e-10);
}

TEST(AttentionTest, SoftmaxRowsSumToOne) {
  Rng rng(8);
  Tensor x = Tensor::RandomNormal({5, 9}, rng, 4.0);
  Tensor y = Eval([&](Graph& g) { return Softmax(g.Constant(x)); });
  for (int r = 0; r < 5; ++r) {
    double s = 0;
    for (int i = 0; i < 9; ++i) s += y[r * 9 + i];
    EXPECT_NEAR(s, 1.0, 1e-14);
  }
}

TEST(AttentionTest, WidthNotDivisible) {
  Graph g(false);
  Var x = g.Constant(Tensor({1, 2, 6}));
  EXPECT_THROW(Attention(x, x, x, 4), ConfigError);
}

TEST(GradCheckTest, LinearExact) {
  Rng rng(1);
  auto r = GradCheck(
      [](Graph&, const std::vector<Var>& in) { return Sum(Linear(in[0], in[1])); },
      {Tensor::RandomNormal({3, 5}, rng), Tensor::RandomNormal({4, 5}, rng)});
  EXPECT_LT(r.max_rel_error, 1e-7) << r.worst;
}

TEST(GradCheckTest, SoftmaxCrossEntropyComposite) {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    auto r = GradCheck(
        [](Graph&, const std::vector<Var>& in) {
          return CrossEntropyFromLogits(Linear(in[0], in[1]), {0, 3, 2}, {1.0, 1.0, 0.5}, 2.5);
        },
        {Tensor::RandomNormal({3, 4}, rng), Tensor::RandomNormal({5, 4}, rng)});
    EXPECT_LT(r.max_rel_error, 1e-6) << r.worst;
  }
}

TEST(GradCheckTest, EveryOpTenInstances) {
  for (const testing_support::OpCase& op : testing_support::AllOps()) {
    Rng rng(1234);
    double worst = 0;
    for (int trial = 0; trial < 10; ++trial) {
      auto r = GradCheck(op.loss, op.inputs(rng));
      worst = std::max(worst, r.max_rel_error);
      EXPECT_LE(r.max_rel_error, 1e-4) << op.name << " " << r.worst;
    }
    RecordProperty(op.name, std::to_string(worst));
  }
}

TEST(GradCheckTest, NonFiniteGradientNamesNode) {
  Graph g;
  Var a = g.Input(Tensor({2}, 1.0));
  Var b = g.Constant(Tensor({2}, {1.0, INFINITY}));
  Var loss = Sum(Mul(a, b));
  try {
    g.Backward(loss);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("input"), std::string::npos) << e.what();
  }
}

TEST(GraphTest, FrozenParameterGetsNoGradient) {
  ParameterStore store;
  Parameter& w = store.Add("w", Tensor({2}, 1.0));
  Parameter& f = store.Add("f", Tensor({2}, 2.0), /*trainable=*/false);
  Graph g;
  g.Backward(Sum(Mul(g.Param(w), g.Param(f))));
  EXPECT_EQ(w.grad, Tensor({2}, 2.0));
  EXPECT_EQ(f.grad, Tensor({2}, 0.0));
}

TEST(AdamTest, ZeroGradientLeavesParametersUnchanged) {
  Rng rng(4);
  ParameterStore store;
  store.Add("a", Tensor::RandomNormal({3, 3}, rng));
  store.Add("b", Tensor::RandomNormal({5}, rng));
  const uint64_t before = store.HashPrefix("");
  for (int step = 1; step <= 5; ++step) AdamStep(store, AdamOptions{.lr = 0.1}, step);
  EXPECT_EQ(store.HashPrefix(""), before);
}

TEST(AdamTest, MinimizesQuadratic) {
  ParameterStore store;
  Parameter& p = store.Add("x", Tensor({2}, {3.0, -2.0}));
  for (int step = 1; step <= 2000; ++step) {
    store.ZeroGrad();
    Graph g;
    g.Backward(Sum(Mul(g.Param(p), g.Param(p))));
    AdamStep(store, AdamOptions{.lr = 0.01}, step);
  }
  EXPECT_LT(std::abs(p.value[0]), 1e-2);
  EXPECT_LT(std::abs(p.value[1]), 1e-2);
}

TEST(CheckpointTest, BitExactRoundTrip) {
  Rng rng(9);
  ParameterStore store;
  store.Add("enc.w", Tensor::RandomNormal({4, 3, 3, 3}, rng));
  store.Add("b", Tensor({1}, {-0.0}));
  store.Add("weird", Tensor({2}, {std::nextafter(1.0, 2.0), 5e-324}));
  const auto path = (std::filesystem::temp_directory_path() / "hyfl_ckpt_test.bin").string();
  SaveCheckpoint(store, path);
  ParameterStore loaded;
  LoadCheckpoint(loaded, path);
  EXPECT_EQ(SerializeCheckpoint(loaded), SerializeCheckpoint(store));
  for (const auto& [name, p] : store) {
    const Tensor& q = loaded.Get(name).value;
    ASSERT_EQ(q.shape(), p.value.shape());
    EXPECT_EQ(std::memcmp(q.data(), p.value.data(), q.size() * 8), 0) << name;
  }
  std::filesystem::remove(path);
}

TEST(CheckpointTest, RejectsBadMagicAndTruncation) {
  ParameterStore store;
  store.Add("w", Tensor({3}, 1.0));
  auto bytes = SerializeCheckpoint(store);
  ParameterStore out;
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(DeserializeCheckpoint(out, bad), ParseError);
  bytes.resize(bytes.size() - 3);
  EXPECT_THROW(DeserializeCheckpoint(out, bytes), ParseError);
}

TEST(DeterminismTest, RepeatedForwardIsBitIdentical) {
  Rng rng(10);
  Tensor x = Tensor::RandomNormal({1, 3, 16, 16}, rng);
  Tensor w = Tensor::RandomNormal({4, 3, 3, 3}, rng);
  auto run = [&] {
    Graph g(false);
    Var h = Gelu(Conv2d(g.Constant(x), g.Constant(w), 2, 1));
    Var t = ChannelsToRows(h);
    return Attention(Reshape(t, {1, 64, 4}), Reshape(t, {1, 64, 4}), Reshape(t, {1, 64, 4}), 2).value();
  };
  Tensor a = run(), b = run();
  EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * 8), 0);
}

}  // namespace
}  // namespace hyfl
