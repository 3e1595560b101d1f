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

#include "hyfl/ops.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include "hyfl/errors.h"

namespace hyfl::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using Strided = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using CStrided = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

void SameGraph(Var a, Var b, const char* op) {
  if (&a.graph() != &b.graph()) throw ConfigError(std::string(op) + ": inputs from different graphs");
}

void SameShape(Var a, Var b, const char* op) {
  SameGraph(a, b, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + ShapeToString(a.shape()) +
                         " vs " + ShapeToString(b.shape()));
  }
}

void Accumulate(Tensor* dst, const Tensor& src) {
  if (!dst) return;
  double* d = dst->data();
  const double* s = src.data();
  for (size_t i = 0; i < src.size(); ++i) d[i] += s[i];
}

double Sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Output columns [lo, hi) whose input column ox * stride - pad + kj lies
// inside [0, w).
inline void ValidRange(int w, int wo, int stride, int pad, int kj, int* lo, int* hi) {
  const int off = kj - pad;
  *lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  *hi = w - 1 - off < 0 ? 0 : std::min(wo, (w - 1 - off) / stride + 1);
  if (*hi < *lo) *hi = *lo;
}

// Rows laid out as [C*k*k, Ho*Wo] for one batch item.
void Im2Col(const double* x, int c, int h, int w, int k, int stride, int pad, int ho, int wo,
            double* cols) {
  for (int ci = 0; ci < c; ++ci) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        int lo, hi;
        ValidRange(w, wo, stride, pad, kj, &lo, &hi);
        const int off = kj - pad;
        double* row = cols + (static_cast<size_t>(ci * k + ki) * k + kj) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ki;
          double* dst = row + static_cast<size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, 0.0);
            continue;
          }
          const double* src = x + (static_cast<size_t>(ci) * h + iy) * w + off;
          std::fill(dst, dst + lo, 0.0);
          if (stride == 1) {
            std::copy(src + lo, src + hi, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * stride];
          }
          std::fill(dst + hi, dst + wo, 0.0);
        }
      }
    }
  }
}

void Col2Im(const double* cols, int c, int h, int w, int k, int stride, int pad, int ho, int wo,
            double* dx) {
  for (int ci = 0; ci < c; ++ci) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        int lo, hi;
        ValidRange(w, wo, stride, pad, kj, &lo, &hi);
        const int off = kj - pad;
        const double* row = cols + (static_cast<size_t>(ci * k + ki) * k + kj) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= h) continue;
          const double* src = row + static_cast<size_t>(oy) * wo;
          double* dst = dx + (static_cast<size_t>(ci) * h + iy) * w + off;
          if (stride == 1) {
            for (int ox = lo; ox < hi; ++ox) dst[ox] += src[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox * stride] += src[ox];
          }
        }
      }
    }
  }
}

int LastDim(const Tensor& t, const char* op) {
  if (t.rank() < 1) throw DimensionError(std::string(op) + ": rank-0 input");
  return t.dim(-1);
}

}  // namespace

Var Add(Var a, Var b) {
  SameShape(a, b, "add");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out(x.shape());
  for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return a.graph().Record("add", std::move(out), {a, b}, [](const BackwardArgs& args) {
    Accumulate(args.input_grads[0], args.output_grad);
    Accumulate(args.input_grads[1], args.output_grad);
  });
}

Var Sub(Var a, Var b) {
  SameShape(a, b, "sub");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out(x.shape());
  for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return a.graph().Record("sub", std::move(out), {a, b}, [](const BackwardArgs& args) {
    Accumulate(args.input_grads[0], args.output_grad);
    if (Tensor* db = args.input_grads[1]) {
      for (size_t i = 0; i < db->size(); ++i) (*db)[i] -= args.output_grad[i];
    }
  });
}

Var Mul(Var a, Var b) {
  SameShape(a, b, "mul");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out(x.shape());
  for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return a.graph().Record("mul", std::move(out), {a, b}, [](const BackwardArgs& args) {
    const Tensor& x = args.inputs[0].value();
    const Tensor& y = args.inputs[1].value();
    const Tensor& g = args.output_grad;
    if (Tensor* da = args.input_grads[0]) {
      for (size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * y[i];
    }
    if (Tensor* db = args.input_grads[1]) {
      for (size_t i = 0; i < g.size(); ++i) (*db)[i] += g[i] * x[i];
    }
  });
}

Var Scale(Var a, double s) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] * s;
  return a.graph().Record("scale", std::move(out), {a}, [s](const BackwardArgs& args) {
    Tensor* da = args.input_grads[0];
    for (size_t i = 0; i < da->size(); ++i) (*da)[i] += s * args.output_grad[i];
  });
}

Var Sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.graph().Record("sum", Tensor::Scalar(s), {a}, [](const BackwardArgs& args) {
    Tensor* da = args.input_grads[0];
    const double g = args.output_grad[0];
    for (size_t i = 0; i < da->size(); ++i) (*da)[i] += g;
  });
}

Var Mean(Var a) {
  const size_t n = a.value().size();
  if (n == 0) throw DimensionError("mean of empty tensor");
  return Scale(Sum(a), 1.0 / static_cast<double>(n));
}

Var Reshape(Var a, Shape shape) {
  Tensor out = a.value().Reshaped(std::move(shape));
  return a.graph().Record("reshape", std::move(out), {a}, [](const BackwardArgs& args) {
    Accumulate(args.input_grads[0], args.output_grad);
  });
}

Var Detach(Var a) { return a.graph().Record("detach", a.value(), {}, nullptr); }

Var Relu(Var a) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  // Written so that -0.0 maps to +0.0.
  for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return a.graph().Record("relu", std::move(out), {a}, [](const BackwardArgs& args) {
    const Tensor& x = args.inputs[0].value();
    Tensor* da = args.input_grads[0];
    for (size_t i = 0; i < x.size(); ++i) {
      if (x[i] > 0.0) (*da)[i] += args.output_grad[i];
    }
  });
}

Var Gelu(Var a) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (size_t i = 0; i < x.size(); ++i) {
    out[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * std::numbers::sqrt2 / 2.0));
  }
  return a.graph().Record("gelu", std::move(out), {a}, [](const BackwardArgs& args) {
    const Tensor& x = args.inputs[0].value();
    Tensor* da = args.input_grads[0];
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (size_t i = 0; i < x.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(x[i] * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x[i] * x[i]);
      (*da)[i] += args.output_grad[i] * (cdf + x[i] * pdf);
    }
  });
}

Var Tanh(Var a) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
  return a.graph().Record("tanh", std::move(out), {a}, [](const BackwardArgs& args) {
    Tensor* da = args.input_grads[0];
    for (size_t i = 0; i < da->size(); ++i) {
      const double y = args.output[i];
      (*da)[i] += args.output_grad[i] * (1.0 - y * y);
    }
  });
}

Var Conv2d(Var x, Var kernel, int stride, int pad) {
  SameGraph(x, kernel, "conv2d");
  const Tensor& in = x.value();
  const Tensor& w = kernel.value();
  if (in.rank() != 4 || w.rank() != 4 || w.dim(1) != in.dim(1) || w.dim(2) != w.dim(3)) {
    throw DimensionError("conv2d: input " + ShapeToString(in.shape()) + " incompatible with kernel " +
                         ShapeToString(w.shape()));
  }
  if (stride < 1 || pad < 0) throw ConfigError("conv2d: stride must be >= 1 and pad >= 0");
  const int n = in.dim(0), c = in.dim(1), h = in.dim(2), wd = in.dim(3);
  const int o = w.dim(0), k = w.dim(2);
  if (h + 2 * pad < k || wd + 2 * pad < k) {
    throw DimensionError("conv2d: input " + ShapeToString(in.shape()) + " smaller than kernel " +
                         ShapeToString(w.shape()));
  }
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (wd + 2 * pad - k) / stride + 1;
  const int ckk = c * k * k;
  const int hw = ho * wo;
  const bool pointwise = k == 1 && stride == 1 && pad == 0;

  Tensor out({n, o, ho, wo});
  const size_t per_item = pointwise ? 0 : static_cast<size_t>(ckk) * hw;
  AlignedBuffer cols(per_item);
  CMapMat wm(w.data(), o, ckk);
  for (int b = 0; b < n; ++b) {
    const double* src = in.data() + static_cast<size_t>(b) * c * h * wd;
    if (!pointwise) Im2Col(src, c, h, wd, k, stride, pad, ho, wo, cols.data());
    CMapMat cm(pointwise ? src : cols.data(), ckk, hw);
    MapMat om(out.data() + static_cast<size_t>(b) * o * hw, o, hw);
    om.noalias() = wm * cm;
  }

  return x.graph().Record(
      "conv2d", std::move(out), {x, kernel}, [=](const BackwardArgs& args) {
        const Tensor& in = args.inputs[0].value();
        const Tensor& w = args.inputs[1].value();
        Tensor* dx = args.input_grads[0];
        Tensor* dw = args.input_grads[1];
        // Columns are rebuilt rather than kept from the forward pass; the
        // recompute stays in cache and is cheaper than the extra memory.
        AlignedBuffer scratch(per_item);
        CMapMat wm(w.data(), o, ckk);
        for (int b = 0; b < n; ++b) {
          const double* src = in.data() + static_cast<size_t>(b) * c * h * wd;
          CMapMat gm(args.output_grad.data() + static_cast<size_t>(b) * o * hw, o, hw);
          if (dw) {
            if (!pointwise) Im2Col(src, c, h, wd, k, stride, pad, ho, wo, scratch.data());
            CMapMat cm(pointwise ? src : scratch.data(), ckk, hw);
            MapMat(dw->data(), o, ckk).noalias() += gm * cm.transpose();
          }
          if (dx) {
            double* dst = dx->data() + static_cast<size_t>(b) * c * h * wd;
            if (pointwise) {
              MapMat(dst, ckk, hw).noalias() += wm.transpose() * gm;
            } else {
              MapMat(scratch.data(), ckk, hw).noalias() = wm.transpose() * gm;
              Col2Im(scratch.data(), c, h, wd, k, stride, pad, ho, wo, dst);
            }
          }
        }
      });
}

Var AddChannelBias(Var x, Var bias) {
  SameGraph(x, bias, "add_channel_bias");
  const Tensor& in = x.value();
  const Tensor& b = bias.value();
  if (in.rank() != 4 || b.rank() != 1 || b.dim(0) != in.dim(1)) {
    throw DimensionError("add_channel_bias: input " + ShapeToString(in.shape()) + " vs bias " +
                         ShapeToString(b.shape()));
  }
  const int n = in.dim(0), c = in.dim(1);
  const size_t hw = static_cast<size_t>(in.dim(2)) * in.dim(3);
  Tensor out = in;
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      double* p = out.data() + (static_cast<size_t>(i) * c + ch) * hw;
      for (size_t j = 0; j < hw; ++j) p[j] += b[ch];
    }
  }
  return x.graph().Record("add_channel_bias", std::move(out), {x, bias},
                          [n, c, hw](const BackwardArgs& args) {
                            Accumulate(args.input_grads[0], args.output_grad);
                            if (Tensor* db = args.input_grads[1]) {
                              for (int i = 0; i < n; ++i) {
                                for (int ch = 0; ch < c; ++ch) {
                                  const double* g = args.output_grad.data() +
                                                    (static_cast<size_t>(i) * c + ch) * hw;
                                  double s = 0.0;
                                  for (size_t j = 0; j < hw; ++j) s += g[j];
                                  (*db)[ch] += s;
                                }
                              }
                            }
                          });
}

Var NearestResize(Var x, int out_h, int out_w) {
  const Tensor& in = x.value();
  ExpectRank(in, 4, "nearest_resize");
  if (out_h < 1 || out_w < 1) throw DimensionError("nearest_resize: empty output size");
  const int n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  std::vector<int> src_y(out_h), src_x(out_w);
  for (int i = 0; i < out_h; ++i) src_y[i] = static_cast<int>(static_cast<int64_t>(i) * h / out_h);
  for (int j = 0; j < out_w; ++j) src_x[j] = static_cast<int>(static_cast<int64_t>(j) * w / out_w);
  Tensor out({n, c, out_h, out_w});
  for (int p = 0; p < n * c; ++p) {
    const double* s = in.data() + static_cast<size_t>(p) * h * w;
    double* d = out.data() + static_cast<size_t>(p) * out_h * out_w;
    for (int i = 0; i < out_h; ++i) {
      for (int j = 0; j < out_w; ++j) d[i * out_w + j] = s[src_y[i] * w + src_x[j]];
    }
  }
  return x.graph().Record(
      "nearest_resize", std::move(out), {x}, [=](const BackwardArgs& args) {
        Tensor* dx = args.input_grads[0];
        for (int p = 0; p < n * c; ++p) {
          const double* g = args.output_grad.data() + static_cast<size_t>(p) * out_h * out_w;
          double* d = dx->data() + static_cast<size_t>(p) * h * w;
          for (int i = 0; i < out_h; ++i) {
            for (int j = 0; j < out_w; ++j) d[src_y[i] * w + src_x[j]] += g[i * out_w + j];
          }
        }
      });
}

Var UpsampleConv(Var x, Var kernel, int factor) {
  if (factor != 2) {
    throw ConfigError("upsample_conv: unsupported factor " + std::to_string(factor));
  }
  ExpectRank(x.value(), 4, "upsample_conv");
  ExpectRank(kernel.value(), 4, "upsample_conv kernel");
  const int k = kernel.value().dim(2);
  if (k % 2 == 0) throw ConfigError("upsample_conv: kernel size must be odd");
  Var up = NearestResize(x, x.value().dim(2) * factor, x.value().dim(3) * factor);
  return Conv2d(up, kernel, 1, k / 2);
}

Var MeanPool(Var x, int factor) {
  const Tensor& in = x.value();
  ExpectRank(in, 4, "mean_pool");
  const int n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  if (factor < 1 || h % factor || w % factor) {
    throw DimensionError("mean_pool: " + ShapeToString(in.shape()) + " not divisible by " +
                         std::to_string(factor));
  }
  const int ho = h / factor, wo = w / factor;
  const double inv = 1.0 / (factor * factor);
  Tensor out({n, c, ho, wo});
  for (int p = 0; p < n * c; ++p) {
    const double* s = in.data() + static_cast<size_t>(p) * h * w;
    double* d = out.data() + static_cast<size_t>(p) * ho * wo;
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) d[(y / factor) * wo + xx / factor] += s[y * w + xx];
    }
    for (int i = 0; i < ho * wo; ++i) d[i] *= inv;
  }
  return x.graph().Record("mean_pool", std::move(out), {x}, [=](const BackwardArgs& args) {
    Tensor* dx = args.input_grads[0];
    for (int p = 0; p < n * c; ++p) {
      const double* g = args.output_grad.data() + static_cast<size_t>(p) * ho * wo;
      double* d = dx->data() + static_cast<size_t>(p) * h * w;
      for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) d[y * w + xx] += inv * g[(y / factor) * wo + xx / factor];
      }
    }
  });
}

Var ChannelsToRows(Var x) {
  const Tensor& in = x.value();
  ExpectRank(in, 4, "channels_to_rows");
  const int n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  const int hw = h * w;
  Tensor out({n * hw, c});
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const double* s = in.data() + (static_cast<size_t>(b) * c + ch) * hw;
      for (int p = 0; p < hw; ++p) out[(static_cast<size_t>(b) * hw + p) * c + ch] = s[p];
    }
  }
  return x.graph().Record("channels_to_rows", std::move(out), {x}, [=](const BackwardArgs& args) {
    Tensor* dx = args.input_grads[0];
    for (int b = 0; b < n; ++b) {
      for (int ch = 0; ch < c; ++ch) {
        double* d = dx->data() + (static_cast<size_t>(b) * c + ch) * hw;
        for (int p = 0; p < hw; ++p) {
          d[p] += args.output_grad[(static_cast<size_t>(b) * hw + p) * c + ch];
        }
      }
    }
  });
}

Var RowsToChannels(Var rows, int n, int h, int w) {
  const Tensor& in = rows.value();
  ExpectRank(in, 2, "rows_to_channels");
  const int hw = h * w;
  if (in.dim(0) != n * hw) {
    throw DimensionError("rows_to_channels: " + ShapeToString(in.shape()) + " does not hold " +
                         std::to_string(n) + "x" + std::to_string(h) + "x" + std::to_string(w));
  }
  const int c = in.dim(1);
  Tensor out({n, c, h, w});
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      double* d = out.data() + (static_cast<size_t>(b) * c + ch) * hw;
      for (int p = 0; p < hw; ++p) d[p] = in[(static_cast<size_t>(b) * hw + p) * c + ch];
    }
  }
  return rows.graph().Record("rows_to_channels", std::move(out), {rows},
                             [=](const BackwardArgs& args) {
                               Tensor* dx = args.input_grads[0];
                               for (int b = 0; b < n; ++b) {
                                 for (int ch = 0; ch < c; ++ch) {
                                   const double* g = args.output_grad.data() +
                                                     (static_cast<size_t>(b) * c + ch) * hw;
                                   for (int p = 0; p < hw; ++p) {
                                     (*dx)[(static_cast<size_t>(b) * hw + p) * c + ch] += g[p];
                                   }
                                 }
                               }
                             });
}

Var Linear(Var x, Var weight, Var bias) {
  SameGraph(x, weight, "linear");
  const Tensor& in = x.value();
  const Tensor& w = weight.value();
  const int in_dim = LastDim(in, "linear");
  if (w.rank() != 2 || w.dim(1) != in_dim) {
    throw DimensionError("linear: input " + ShapeToString(in.shape()) + " vs weight " +
                         ShapeToString(w.shape()));
  }
  const int out_dim = w.dim(0);
  if (bias.valid()) {
    SameGraph(x, bias, "linear");
    if (bias.value().rank() != 1 || bias.value().dim(0) != out_dim) {
      throw DimensionError("linear: bias " + ShapeToString(bias.value().shape()) +
                           " vs weight " + ShapeToString(w.shape()));
    }
  }
  const int rows = static_cast<int>(in.size() / std::max(in_dim, 1));
  Shape out_shape = in.shape();
  out_shape.back() = out_dim;
  Tensor out(out_shape);
  MapMat om(out.data(), rows, out_dim);
  om.noalias() = CMapMat(in.data(), rows, in_dim) * CMapMat(w.data(), out_dim, in_dim).transpose();
  if (bias.valid()) {
    om.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.value().data(), out_dim);
  }
  std::vector<Var> inputs = {x, weight};
  if (bias.valid()) inputs.push_back(bias);
  return x.graph().Record("linear", std::move(out), std::move(inputs), [=](const BackwardArgs& args) {
    CMapMat g(args.output_grad.data(), rows, out_dim);
    if (Tensor* dx = args.input_grads[0]) {
      MapMat(dx->data(), rows, in_dim).noalias() +=
          g * CMapMat(args.inputs[1].value().data(), out_dim, in_dim);
    }
    if (Tensor* dw = args.input_grads[1]) {
      MapMat(dw->data(), out_dim, in_dim).noalias() +=
          g.transpose() * CMapMat(args.inputs[0].value().data(), rows, in_dim);
    }
    if (args.input_grads.size() > 2 && args.input_grads[2]) {
      Eigen::Map<Eigen::RowVectorXd>(args.input_grads[2]->data(), out_dim) += g.colwise().sum();
    }
  });
}

Var LayerNorm(Var x, Var gamma, Var beta, double eps) {
  SameGraph(x, gamma, "layer_norm");
  SameGraph(x, beta, "layer_norm");
  const Tensor& in = x.value();
  const int d = LastDim(in, "layer_norm");
  if (gamma.value().shape() != Shape{d} || beta.value().shape() != Shape{d}) {
    throw DimensionError("layer_norm: gain/bias must be [" + std::to_string(d) + "]");
  }
  const size_t rows = in.size() / d;
  Tensor out(in.shape());
  auto xhat = std::make_shared<AlignedBuffer>(in.size());
  auto inv_std = std::make_shared<AlignedBuffer>(rows);
  const double* g = gamma.value().data();
  const double* b = beta.value().data();
  for (size_t r = 0; r < rows; ++r) {
    const double* xr = in.data() + r * d;
    double mean = 0.0;
    for (int i = 0; i < d; ++i) mean += xr[i];
    mean /= d;
    double var = 0.0;
    for (int i = 0; i < d; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (int i = 0; i < d; ++i) {
      const double xh = (xr[i] - mean) * is;
      (*xhat)[r * d + i] = xh;
      out[r * d + i] = g[i] * xh + b[i];
    }
  }
  return x.graph().Record(
      "layer_norm", std::move(out), {x, gamma, beta}, [=](const BackwardArgs& args) {
        const double* g = args.inputs[1].value().data();
        const double* dy = args.output_grad.data();
        Tensor* dx = args.input_grads[0];
        Tensor* dg = args.input_grads[1];
        Tensor* db = args.input_grads[2];
        std::vector<double> dxh(d);
        for (size_t r = 0; r < rows; ++r) {
          const double* xh = xhat->data() + r * d;
          const double* dyr = dy + r * d;
          if (dg) {
            for (int i = 0; i < d; ++i) (*dg)[i] += dyr[i] * xh[i];
          }
          if (db) {
            for (int i = 0; i < d; ++i) (*db)[i] += dyr[i];
          }
          if (dx) {
            double m1 = 0.0, m2 = 0.0;
            for (int i = 0; i < d; ++i) {
              dxh[i] = dyr[i] * g[i];
              m1 += dxh[i];
              m2 += dxh[i] * xh[i];
            }
            m1 /= d;
            m2 /= d;
            for (int i = 0; i < d; ++i) {
              (*dx)[r * d + i] += (*inv_std)[r] * (dxh[i] - m1 - xh[i] * m2);
            }
          }
        }
      });
}

Var Softmax(Var x) {
  const Tensor& in = x.value();
  const int d = LastDim(in, "softmax");
  const size_t rows = in.size() / d;
  Tensor out(in.shape());
  for (size_t r = 0; r < rows; ++r) {
    const double* xr = in.data() + r * d;
    double* yr = out.data() + r * d;
    const double mx = *std::max_element(xr, xr + d);
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += (yr[i] = std::exp(xr[i] - mx));
    for (int i = 0; i < d; ++i) yr[i] /= s;
  }
  return x.graph().Record("softmax", std::move(out), {x}, [=](const BackwardArgs& args) {
    Tensor* dx = args.input_grads[0];
    for (size_t r = 0; r < rows; ++r) {
      const double* y = args.output.data() + r * d;
      const double* g = args.output_grad.data() + r * d;
      double dot = 0.0;
      for (int i = 0; i < d; ++i) dot += g[i] * y[i];
      for (int i = 0; i < d; ++i) (*dx)[r * d + i] += y[i] * (g[i] - dot);
    }
  });
}

Var Attention(Var q, Var k, Var v, int heads) {
  SameGraph(q, k, "attention");
  SameGraph(q, v, "attention");
  const Tensor& qt = q.value();
  const Tensor& kt = k.value();
  const Tensor& vt = v.value();
  if (qt.rank() != 3 || kt.rank() != 3 || vt.rank() != 3) {
    throw DimensionError("attention: q, k, v must be rank 3");
  }
  const int batch = qt.dim(0), tq = qt.dim(1), width = qt.dim(2);
  const int tk = kt.dim(1);
  if (kt.dim(0) != batch || vt.dim(0) != batch || kt.dim(2) != width || vt.dim(2) != width ||
      vt.dim(1) != tk) {
    throw DimensionError("attention: q " + ShapeToString(qt.shape()) + ", k " +
                         ShapeToString(kt.shape()) + ", v " + ShapeToString(vt.shape()));
  }
  if (heads < 1 || width % heads != 0) {
    throw ConfigError("attention: width " + std::to_string(width) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (tk == 0) throw DimensionError("attention: no keys");
  const int dh = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  auto probs = std::make_shared<AlignedBuffer>(static_cast<size_t>(batch) * heads * tq * tk);
  Tensor out(qt.shape());
  for (int b = 0; b < batch; ++b) {
    const size_t qo = static_cast<size_t>(b) * tq * width;
    const size_t ko = static_cast<size_t>(b) * tk * width;
    for (int h = 0; h < heads; ++h) {
      CStrided qh(qt.data() + qo + h * dh, tq, dh, Eigen::OuterStride<>(width));
      CStrided kh(kt.data() + ko + h * dh, tk, dh, Eigen::OuterStride<>(width));
      CStrided vh(vt.data() + ko + h * dh, tk, dh, Eigen::OuterStride<>(width));
      MapMat p(probs->data() + (static_cast<size_t>(b) * heads + h) * tq * tk, tq, tk);
      p.noalias() = (qh * kh.transpose()) * scale;
      for (int i = 0; i < tq; ++i) {
        const double mx = p.row(i).maxCoeff();
        p.row(i) = (p.row(i).array() - mx).exp();
        p.row(i) /= p.row(i).sum();
      }
      Strided(out.data() + qo + h * dh, tq, dh, Eigen::OuterStride<>(width)).noalias() = p * vh;
    }
  }
  return q.graph().Record(
      "attention", std::move(out), {q, k, v}, [=](const BackwardArgs& args) {
        const Tensor& qt = args.inputs[0].value();
        const Tensor& kt = args.inputs[1].value();
        const Tensor& vt = args.inputs[2].value();
        Tensor* dq = args.input_grads[0];
        Tensor* dk = args.input_grads[1];
        Tensor* dv = args.input_grads[2];
        RowMat dp(tq, tk), ds(tq, tk);
        for (int b = 0; b < batch; ++b) {
          const size_t qo = static_cast<size_t>(b) * tq * width;
          const size_t ko = static_cast<size_t>(b) * tk * width;
          for (int h = 0; h < heads; ++h) {
            const Eigen::OuterStride<> st(width);
            CStrided qh(qt.data() + qo + h * dh, tq, dh, st);
            CStrided kh(kt.data() + ko + h * dh, tk, dh, st);
            CStrided vh(vt.data() + ko + h * dh, tk, dh, st);
            CStrided go(args.output_grad.data() + qo + h * dh, tq, dh, st);
            CMapMat p(probs->data() + (static_cast<size_t>(b) * heads + h) * tq * tk, tq, tk);
            if (dv) Strided(dv->data() + ko + h * dh, tk, dh, st).noalias() += p.transpose() * go;
            if (!dq && !dk) continue;
            dp.noalias() = go * vh.transpose();
            for (int i = 0; i < tq; ++i) {
              const double dot = dp.row(i).dot(p.row(i));
              ds.row(i) = p.row(i).cwiseProduct((dp.row(i).array() - dot).matrix());
            }
            if (dq) Strided(dq->data() + qo + h * dh, tq, dh, st).noalias() += (ds * kh) * scale;
            if (dk) {
              Strided(dk->data() + ko + h * dh, tk, dh, st).noalias() +=
                  (ds.transpose() * qh) * scale;
            }
          }
        }
      });
}

Var Embedding(Var table, const std::vector<int>& ids) {
  const Tensor& t = table.value();
  ExpectRank(t, 2, "embedding");
  const int vocab = t.dim(0), d = t.dim(1);
  for (int id : ids) {
    if (id < 0 || id >= vocab) {
      throw DimensionError("embedding: id " + std::to_string(id) + " outside vocabulary " +
                           std::to_string(vocab));
    }
  }
  Tensor out({static_cast<int>(ids.size()), d});
  for (size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(t.data() + static_cast<size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  return table.graph().Record("embedding", std::move(out), {table},
                              [ids, d](const BackwardArgs& args) {
                                Tensor* dt = args.input_grads[0];
                                for (size_t i = 0; i < ids.size(); ++i) {
                                  double* dst = dt->data() + static_cast<size_t>(ids[i]) * d;
                                  const double* g = args.output_grad.data() + i * d;
                                  for (int j = 0; j < d; ++j) dst[j] += g[j];
                                }
                              });
}

Var ScatterRows(Var rows, const std::vector<int>& positions, int total, Var fill) {
  SameGraph(rows, fill, "scatter_rows");
  const Tensor& r = rows.value();
  ExpectRank(r, 2, "scatter_rows");
  const int d = r.dim(1);
  if (r.dim(0) != static_cast<int>(positions.size()) || fill.value().shape() != Shape{d}) {
    throw DimensionError("scatter_rows: rows " + ShapeToString(r.shape()) + ", " +
                         std::to_string(positions.size()) + " positions, fill " +
                         ShapeToString(fill.value().shape()));
  }
  std::vector<int> source(total, -1);
  for (size_t i = 0; i < positions.size(); ++i) {
    const int p = positions[i];
    if (p < 0 || p >= total || source[p] != -1) {
      throw DimensionError("scatter_rows: bad or repeated position " + std::to_string(p));
    }
    source[p] = static_cast<int>(i);
  }
  Tensor out({total, d});
  for (int p = 0; p < total; ++p) {
    const double* src = source[p] >= 0 ? r.data() + static_cast<size_t>(source[p]) * d
                                       : fill.value().data();
    std::copy_n(src, d, out.data() + static_cast<size_t>(p) * d);
  }
  return rows.graph().Record(
      "scatter_rows", std::move(out), {rows, fill}, [source, d](const BackwardArgs& args) {
        Tensor* dr = args.input_grads[0];
        Tensor* df = args.input_grads[1];
        for (size_t p = 0; p < source.size(); ++p) {
          const double* g = args.output_grad.data() + p * d;
          double* dst = nullptr;
          if (source[p] >= 0) {
            if (dr) dst = dr->data() + static_cast<size_t>(source[p]) * d;
          } else if (df) {
            dst = df->data();
          }
          if (!dst) continue;
          for (int j = 0; j < d; ++j) dst[j] += g[j];
        }
      });
}

Var CrossEntropyFromLogits(Var logits, const std::vector<int>& targets,
                           const std::vector<double>& weights, double normalizer) {
  const Tensor& z = logits.value();
  ExpectRank(z, 2, "cross_entropy");
  const int rows = z.dim(0), vocab = z.dim(1);
  if (static_cast<int>(targets.size()) != rows || static_cast<int>(weights.size()) != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(rows) + " rows but " +
                         std::to_string(targets.size()) + " targets / " +
                         std::to_string(weights.size()) + " weights");
  }
  if (!(normalizer > 0.0)) throw ConfigError("cross_entropy: normalizer must be positive");
  auto probs = std::make_shared<AlignedBuffer>(z.size(), 0.0);
  double loss = 0.0;
  for (int r = 0; r < rows; ++r) {
    if (weights[r] == 0.0) continue;
    const int t = targets[r];
    if (t < 0 || t >= vocab) throw DimensionError("cross_entropy: target out of range");
    const double* zr = z.data() + static_cast<size_t>(r) * vocab;
    double* pr = probs->data() + static_cast<size_t>(r) * vocab;
    const double mx = *std::max_element(zr, zr + vocab);
    double s = 0.0;
    for (int i = 0; i < vocab; ++i) s += (pr[i] = std::exp(zr[i] - mx));
    for (int i = 0; i < vocab; ++i) pr[i] /= s;
    loss += weights[r] * (std::log(s) + mx - zr[t]);
  }
  loss /= normalizer;
  return logits.graph().Record(
      "cross_entropy", Tensor::Scalar(loss), {logits}, [=](const BackwardArgs& args) {
        Tensor* dz = args.input_grads[0];
        const double g = args.output_grad[0] / normalizer;
        for (int r = 0; r < rows; ++r) {
          if (weights[r] == 0.0) continue;
          const double* pr = probs->data() + static_cast<size_t>(r) * vocab;
          double* dr = dz->data() + static_cast<size_t>(r) * vocab;
          const double wg = g * weights[r];
          for (int i = 0; i < vocab; ++i) dr[i] += wg * pr[i];
          dr[targets[r]] -= wg;
        }
      });
}

Var L1Loss(Var a, Var b) {
  SameShape(a, b, "l1_loss");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.empty()) throw DimensionError("l1_loss: empty input");
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
  const double inv = 1.0 / static_cast<double>(x.size());
  return a.graph().Record("l1_loss", Tensor::Scalar(s * inv), {a, b}, [inv](const BackwardArgs& args) {
    const Tensor& x = args.inputs[0].value();
    const Tensor& y = args.inputs[1].value();
    const double g = args.output_grad[0] * inv;
    for (size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - y[i];
      const double sgn = d > 0 ? g : (d < 0 ? -g : 0.0);
      if (args.input_grads[0]) (*args.input_grads[0])[i] += sgn;
      if (args.input_grads[1]) (*args.input_grads[1])[i] -= sgn;
    }
  });
}

Var MseLoss(Var a, Var b) {
  SameShape(a, b, "mse_loss");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.empty()) throw DimensionError("mse_loss: empty input");
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  const double inv = 1.0 / static_cast<double>(x.size());
  return a.graph().Record("mse_loss", Tensor::Scalar(s * inv), {a, b}, [inv](const BackwardArgs& args) {
    const Tensor& x = args.inputs[0].value();
    const Tensor& y = args.inputs[1].value();
    const double g = 2.0 * args.output_grad[0] * inv;
    for (size_t i = 0; i < x.size(); ++i) {
      const double d = g * (x[i] - y[i]);
      if (args.input_grads[0]) (*args.input_grads[0])[i] += d;
      if (args.input_grads[1]) (*args.input_grads[1])[i] -= d;
    }
  });
}

Var FactorizedRateBits(Var y, Var loc, Var log_scale) {
  SameGraph(y, loc, "factorized_rate");
  SameGraph(y, log_scale, "factorized_rate");
  const Tensor& yt = y.value();
  ExpectRank(yt, 4, "factorized_rate");
  const int n = yt.dim(0), c = yt.dim(1);
  const size_t hw = static_cast<size_t>(yt.dim(2)) * yt.dim(3);
  if (loc.value().shape() != Shape{c} || log_scale.value().shape() != Shape{c}) {
    throw DimensionError("factorized_rate: loc/log_scale must be [" + std::to_string(c) + "]");
  }
  constexpr double kMinLikelihood = 1e-9;
  // Per element: d bits / d y, d bits / d loc = -d/dy, d bits / d log_scale.
  auto dy = std::make_shared<AlignedBuffer>(yt.size());
  auto dls = std::make_shared<AlignedBuffer>(yt.size());
  double bits = 0.0;
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const double mu = loc.value()[ch];
      const double s = std::exp(log_scale.value()[ch]);
      const size_t base = (static_cast<size_t>(b) * c + ch) * hw;
      for (size_t i = 0; i < hw; ++i) {
        const double v = yt[base + i];
        const double hi = (v + 0.5 - mu) / s;
        const double lo = (v - 0.5 - mu) / s;
        // Evaluate in the tail where the difference is not a cancellation.
        const double sign = (lo + hi) > 0 ? -1.0 : 1.0;
        const double p =
            sign > 0 ? Sigmoid(hi) - Sigmoid(lo) : Sigmoid(-lo) - Sigmoid(-hi);
        const double sh = Sigmoid(hi), sl = Sigmoid(lo);
        const double dh = sh * (1.0 - sh), dl = sl * (1.0 - sl);
        const double pe = std::max(p, kMinLikelihood);
        bits -= std::log2(pe);
        const double k = -1.0 / (pe * std::numbers::ln2);
        (*dy)[base + i] = k * (dh - dl) / s;
        (*dls)[base + i] = k * -(dh * hi - dl * lo);
      }
    }
  }
  return y.graph().Record(
      "factorized_rate", Tensor::Scalar(bits), {y, loc, log_scale},
      [=](const BackwardArgs& args) {
        const double g = args.output_grad[0];
        Tensor* gy = args.input_grads[0];
        Tensor* gl = args.input_grads[1];
        Tensor* gs = args.input_grads[2];
        for (int b = 0; b < n; ++b) {
          for (int ch = 0; ch < c; ++ch) {
            const size_t base = (static_cast<size_t>(b) * c + ch) * hw;
            double sl = 0.0, ss = 0.0;
            for (size_t i = 0; i < hw; ++i) {
              if (gy) (*gy)[base + i] += g * (*dy)[base + i];
              sl -= (*dy)[base + i];
              ss += (*dls)[base + i];
            }
            if (gl) (*gl)[ch] += g * sl;
            if (gs) (*gs)[ch] += g * ss;
          }
        }
      });
}

}  // namespace hyfl::ops
