#include "nalu/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "nalu/error.hpp"

namespace nalu::ops {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_str(a.shape()));
  }
}

void accumulate(Tensor* dst, const Tensor& src) {
  if (!dst) return;
  float* d = dst->data().data();
  const float* s = src.data().data();
  for (std::size_t i = 0; i < src.numel(); ++i) d[i] += s[i];
}

// C (+)= op(A) * op(B) with row-major float storage and double arithmetic.
void gemm64(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
            const float* a, const float* b, float* c, bool accumulate_into) {
  if (m == 0 || n == 0) return;
  std::vector<double> ad(a, a + m * k);
  std::vector<double> bd(b, b + k * n);
  std::vector<double> cd(m * n, 0.0);
  if (k > 0) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), 1.0, ad.data(), static_cast<int>(trans_a ? m : k), bd.data(),
                static_cast<int>(trans_b ? k : n), 0.0, cd.data(), static_cast<int>(n));
  }
  for (std::size_t i = 0; i < m * n; ++i) {
    c[i] = accumulate_into ? static_cast<float>(c[i] + cd[i]) : static_cast<float>(cd[i]);
  }
}

struct ConvGeometry {
  std::size_t n, c, h, w, f, kh, kw, ph, pw, oh, ow;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t pixels() const { return oh * ow; }
};

void im2col(const ConvGeometry& g, const float* x, float* col) {
  const std::size_t p = g.pixels();
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        float* row = col + ((ch * g.kh + i) * g.kw + j) * p;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy + i) - static_cast<std::ptrdiff_t>(g.ph);
          float* dst = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.ow, 0.0f);
            continue;
          }
          const float* src = x + (ch * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix =
                static_cast<std::ptrdiff_t>(ox + j) - static_cast<std::ptrdiff_t>(g.pw);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? 0.0f : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const float* col, float* dx) {
  const std::size_t p = g.pixels();
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const float* row = col + ((ch * g.kh + i) * g.kw + j) * p;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy + i) - static_cast<std::ptrdiff_t>(g.ph);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          float* dst = dx + (ch * g.h + static_cast<std::size_t>(iy)) * g.w;
          const float* src = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix =
                static_cast<std::ptrdiff_t>(ox + j) - static_cast<std::ptrdiff_t>(g.pw);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// Channel axis for per-channel ops on rank-2 [B,C] or rank-4 [N,C,H,W].
struct ChannelLayout {
  std::size_t outer, channels, inner;
};

ChannelLayout channel_layout(const char* op, const Tensor& x) {
  if (x.rank() == 2) return {x.dim(0), x.dim(1), 1};
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)};
  throw DimensionError(std::string(op) + ": expected rank 2 or 4, got " + shape_str(x.shape()));
}

}  // namespace

float sigmoid(float x) {
  if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
  const float e = std::exp(x);
  return e / (1.0f + e);
}

float hard_sigmoid(float x) { return std::clamp(0.2f * x + 0.5f, 0.0f, 1.0f); }

UnaryKind parse_unary_kind(std::string_view name) {
  if (name == "sigmoid") return UnaryKind::Sigmoid;
  if (name == "tanh") return UnaryKind::Tanh;
  if (name == "relu") return UnaryKind::Relu;
  if (name == "leaky_relu") return UnaryKind::LeakyRelu;
  if (name == "elu") return UnaryKind::Elu;
  if (name == "prelu") return UnaryKind::Prelu;
  if (name == "hard_sigmoid") return UnaryKind::HardSigmoid;
  if (name == "linear") return UnaryKind::Linear;
  if (name == "exp") return UnaryKind::Exp;
  if (name == "log") return UnaryKind::Log;
  if (name == "abs") return UnaryKind::Abs;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(UnaryKind kind) {
  switch (kind) {
    case UnaryKind::Sigmoid: return "sigmoid";
    case UnaryKind::Tanh: return "tanh";
    case UnaryKind::Relu: return "relu";
    case UnaryKind::LeakyRelu: return "leaky_relu";
    case UnaryKind::Elu: return "elu";
    case UnaryKind::Prelu: return "prelu";
    case UnaryKind::HardSigmoid: return "hard_sigmoid";
    case UnaryKind::Linear: return "linear";
    case UnaryKind::Exp: return "exp";
    case UnaryKind::Log: return "log";
    case UnaryKind::Abs: return "abs";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Elementwise

Var add(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape("add", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
  return t.record("add", std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    accumulate(tp.grad_slot(a), g);
    accumulate(tp.grad_slot(b), g);
  });
}

Var sub(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape("sub", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
  return t.record("sub", std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    accumulate(tp.grad_slot(a), g);
    if (Tensor* gb = tp.grad_slot(b)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*gb)[i] -= g[i];
    }
  });
}

Var mul(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape("mul", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  return t.record("mul", std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    if (Tensor* ga = tp.grad_slot(a)) {
      const Tensor& bv = tp.value(b);
      for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * bv[i];
    }
    if (Tensor* gb = tp.grad_slot(b)) {
      const Tensor& av = tp.value(a);
      for (std::size_t i = 0; i < g.numel(); ++i) (*gb)[i] += g[i] * av[i];
    }
  });
}

Var scale(Tape& t, Var a, float s) {
  Tensor out = t.value(a);
  for (float& v : out.data()) v *= s;
  return t.record("scale", std::move(out), {a}, [a, s](Tape& tp, std::size_t self) {
    if (Tensor* ga = tp.grad_slot(a)) {
      const Tensor& g = tp.out_grad(self);
      for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += s * g[i];
    }
  });
}

Var reshape(Tape& t, Var a, Shape shape) {
  Tensor out = t.value(a).reshaped(std::move(shape));
  return t.record("reshape", std::move(out), {a}, [a](Tape& tp, std::size_t self) {
    accumulate(tp.grad_slot(a), tp.out_grad(self));
  });
}

Var add_scalar(Tape& t, Var a, float s) {
  Tensor out = t.value(a);
  for (float& v : out.data()) v += s;
  return t.record("add_scalar", std::move(out), {a}, [a](Tape& tp, std::size_t self) {
    accumulate(tp.grad_slot(a), tp.out_grad(self));
  });
}

// ---------------------------------------------------------------------------
// Reductions

Var sum(Tape& t, Var a) {
  const double s = t.value(a).sum();
  return t.record("sum", Tensor::scalar(static_cast<float>(s)), {a},
                  [a](Tape& tp, std::size_t self) {
                    if (Tensor* ga = tp.grad_slot(a)) {
                      const float g = tp.out_grad(self)[0];
                      for (float& v : ga->data()) v += g;
                    }
                  });
}

Var mean(Tape& t, Var a) {
  const Tensor& av = t.value(a);
  if (av.numel() == 0) throw DimensionError("mean of empty tensor");
  const double n = static_cast<double>(av.numel());
  const double m = av.sum() / n;
  return t.record("mean", Tensor::scalar(static_cast<float>(m)), {a},
                  [a, n](Tape& tp, std::size_t self) {
                    if (Tensor* ga = tp.grad_slot(a)) {
                      const auto g = static_cast<float>(tp.out_grad(self)[0] / n);
                      for (float& v : ga->data()) v += g;
                    }
                  });
}

Var mse(Tape& t, Var pred, Var target) {
  const Tensor& p = t.value(pred);
  const Tensor& y = t.value(target);
  require_same_shape("mse", p, y);
  if (p.numel() == 0) throw DimensionError("mse of empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double d = static_cast<double>(p[i]) - y[i];
    acc += d * d;
  }
  const double n = static_cast<double>(p.numel());
  return t.record("mse", Tensor::scalar(static_cast<float>(acc / n)), {pred, target},
                  [pred, target, n](Tape& tp, std::size_t self) {
                    const Tensor& p = tp.value(pred);
                    const Tensor& y = tp.value(target);
                    const double g = tp.out_grad(self)[0] * 2.0 / n;
                    Tensor* gp = tp.grad_slot(pred);
                    Tensor* gy = tp.grad_slot(target);
                    for (std::size_t i = 0; i < p.numel(); ++i) {
                      const auto d = static_cast<float>(g * (static_cast<double>(p[i]) - y[i]));
                      if (gp) (*gp)[i] += d;
                      if (gy) (*gy)[i] -= d;
                    }
                  });
}

// ---------------------------------------------------------------------------
// Dense algebra

Var matmul(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_rank("matmul", av, 2);
  require_rank("matmul", bv, 2);
  if (av.dim(1) != bv.dim(0)) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(av.shape()) + " x " +
                         shape_str(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  gemm64(false, false, m, n, k, av.data().data(), bv.data().data(), out.data().data(), false);
  return t.record("matmul", std::move(out), {a, b}, [a, b, m, k, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    if (Tensor* ga = tp.grad_slot(a)) {
      gemm64(false, true, m, k, n, g.data().data(), tp.value(b).data().data(),
             ga->data().data(), true);
    }
    if (Tensor* gb = tp.grad_slot(b)) {
      gemm64(true, false, k, n, m, tp.value(a).data().data(), g.data().data(),
             gb->data().data(), true);
    }
  });
}

Var transpose(Tape& t, Var a) {
  const Tensor& av = t.value(a);
  require_rank("transpose", av, 2);
  const std::size_t r = av.dim(0), c = av.dim(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return t.record("transpose", std::move(out), {a}, [a, r, c](Tape& tp, std::size_t self) {
    if (Tensor* ga = tp.grad_slot(a)) {
      const Tensor& g = tp.out_grad(self);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*ga)[i * c + j] += g[j * r + i];
    }
  });
}

Var add_row_bias(Tape& t, Var x, Var b) {
  const Tensor& xv = t.value(x);
  const Tensor& bv = t.value(b);
  require_rank("add_row_bias", xv, 2);
  if (bv.rank() != 1 || bv.dim(0) != xv.dim(1)) {
    throw DimensionError("add_row_bias: bias " + shape_str(bv.shape()) + " does not match " +
                         shape_str(xv.shape()));
  }
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  Tensor out = xv;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += bv[j];
  return t.record("add_row_bias", std::move(out), {x, b},
                  [x, b, rows, cols](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.out_grad(self);
                    accumulate(tp.grad_slot(x), g);
                    if (Tensor* gb = tp.grad_slot(b)) {
                      for (std::size_t j = 0; j < cols; ++j) {
                        double s = 0.0;
                        for (std::size_t i = 0; i < rows; ++i) s += g[i * cols + j];
                        (*gb)[j] += static_cast<float>(s);
                      }
                    }
                  });
}

Var add_channel_bias(Tape& t, Var x, Var b) {
  const Tensor& xv = t.value(x);
  const Tensor& bv = t.value(b);
  require_rank("add_channel_bias", xv, 4);
  if (bv.rank() != 1 || bv.dim(0) != xv.dim(1)) {
    throw DimensionError("add_channel_bias: bias " + shape_str(bv.shape()) +
                         " does not match " + shape_str(xv.shape()));
  }
  const std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  Tensor out = xv;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch) {
      float* p = out.data().data() + (s * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) p[i] += bv[ch];
    }
  return t.record("add_channel_bias", std::move(out), {x, b},
                  [x, b, n, c, hw](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.out_grad(self);
                    accumulate(tp.grad_slot(x), g);
                    if (Tensor* gb = tp.grad_slot(b)) {
                      for (std::size_t ch = 0; ch < c; ++ch) {
                        double s = 0.0;
                        for (std::size_t smp = 0; smp < n; ++smp) {
                          const float* p = g.data().data() + (smp * c + ch) * hw;
                          for (std::size_t i = 0; i < hw; ++i) s += p[i];
                        }
                        (*gb)[ch] += static_cast<float>(s);
                      }
                    }
                  });
}

// ---------------------------------------------------------------------------
// Convolution and spatial ops

Var conv2d(Tape& t, Var x, Var k, Padding pad) {
  const Tensor& xv = t.value(x);
  const Tensor& kv = t.value(k);
  require_rank("conv2d", xv, 4);
  require_rank("conv2d", kv, 4);
  if (kv.dim(1) != xv.dim(1)) {
    throw DimensionError("conv2d: channel mismatch, input " + shape_str(xv.shape()) +
                         " kernel " + shape_str(kv.shape()));
  }
  ConvGeometry g{};
  g.n = xv.dim(0);
  g.c = xv.dim(1);
  g.h = xv.dim(2);
  g.w = xv.dim(3);
  g.f = kv.dim(0);
  g.kh = kv.dim(2);
  g.kw = kv.dim(3);
  if (pad == Padding::Same) {
    if (g.kh % 2 == 0 || g.kw % 2 == 0) {
      throw DimensionError("conv2d: same padding needs odd kernel, got " + shape_str(kv.shape()));
    }
    g.ph = g.kh / 2;
    g.pw = g.kw / 2;
    g.oh = g.h;
    g.ow = g.w;
  } else {
    if (g.kh > g.h || g.kw > g.w) {
      throw DimensionError("conv2d: valid padding leaves no output for input " +
                           shape_str(xv.shape()) + " and kernel " + shape_str(kv.shape()));
    }
    g.ph = g.pw = 0;
    g.oh = g.h - g.kh + 1;
    g.ow = g.w - g.kw + 1;
  }

  Tensor out({g.n, g.f, g.oh, g.ow});
  std::vector<float> col(g.patch() * g.pixels());
  for (std::size_t s = 0; s < g.n; ++s) {
    im2col(g, xv.data().data() + s * g.c * g.h * g.w, col.data());
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(g.f),
                static_cast<int>(g.pixels()), static_cast<int>(g.patch()), 1.0f,
                kv.data().data(), static_cast<int>(g.patch()), col.data(),
                static_cast<int>(g.pixels()), 0.0f,
                out.data().data() + s * g.f * g.pixels(), static_cast<int>(g.pixels()));
  }

  return t.record("conv2d", std::move(out), {x, k}, [x, k, g](Tape& tp, std::size_t self) {
    const Tensor& gout = tp.out_grad(self);
    const Tensor& xv = tp.value(x);
    const Tensor& kv = tp.value(k);
    Tensor* gx = tp.grad_slot(x);
    Tensor* gk = tp.grad_slot(k);
    std::vector<float> col(g.patch() * g.pixels());
    std::vector<float> dcol(gx ? col.size() : 0);
    const int f = static_cast<int>(g.f);
    const int p = static_cast<int>(g.pixels());
    const int q = static_cast<int>(g.patch());
    for (std::size_t s = 0; s < g.n; ++s) {
      const float* go = gout.data().data() + s * g.f * g.pixels();
      if (gk) {
        im2col(g, xv.data().data() + s * g.c * g.h * g.w, col.data());
        cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, f, q, p, 1.0f, go, p, col.data(), p,
                    1.0f, gk->data().data(), q);
      }
      if (gx) {
        cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, q, p, f, 1.0f, kv.data().data(), q,
                    go, p, 0.0f, dcol.data(), p);
        col2im_add(g, dcol.data(), gx->data().data() + s * g.c * g.h * g.w);
      }
    }
  });
}

Var maxpool2(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  require_rank("maxpool2", xv, 4);
  const std::size_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw DimensionError("maxpool2: spatial dims must be even, got " + shape_str(xv.shape()));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor out({n, c, oh, ow});
  std::vector<std::uint32_t> argmax(out.numel());
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const float* src = xv.data().data() + plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t base = (2 * oy) * w + 2 * ox;
        const std::size_t cand[4] = {base, base + 1, base + w, base + w + 1};
        std::size_t best = cand[0];
        for (std::size_t i = 1; i < 4; ++i)
          if (src[cand[i]] > src[best]) best = cand[i];
        const std::size_t o = (plane * oh + oy) * ow + ox;
        out[o] = src[best];
        argmax[o] = static_cast<std::uint32_t>(plane * h * w + best);
      }
    }
  }
  return t.record("maxpool2", std::move(out), {x},
                  [x, argmax = std::move(argmax)](Tape& tp, std::size_t self) {
                    if (Tensor* gx = tp.grad_slot(x)) {
                      const Tensor& g = tp.out_grad(self);
                      for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[argmax[i]] += g[i];
                    }
                  });
}

Var upsample_repeat(Tape& t, Var x, std::size_t f) {
  if (f < 1) throw DimensionError("upsample_repeat: factor must be >= 1");
  const Tensor& xv = t.value(x);
  require_rank("upsample_repeat", xv, 4);
  const std::size_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::size_t oh = h * f, ow = w * f;
  Tensor out({n, c, oh, ow});
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const float* src = xv.data().data() + plane * h * w;
    float* dst = out.data().data() + plane * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) dst[oy * ow + ox] = src[(oy / f) * w + ox / f];
  }
  return t.record("upsample_repeat", std::move(out), {x},
                  [x, n, c, h, w, f](Tape& tp, std::size_t self) {
                    if (Tensor* gx = tp.grad_slot(x)) {
                      const Tensor& g = tp.out_grad(self);
                      const std::size_t oh = h * f, ow = w * f;
                      for (std::size_t plane = 0; plane < n * c; ++plane) {
                        const float* src = g.data().data() + plane * oh * ow;
                        float* dst = gx->data().data() + plane * h * w;
                        for (std::size_t oy = 0; oy < oh; ++oy)
                          for (std::size_t ox = 0; ox < ow; ++ox)
                            dst[(oy / f) * w + ox / f] += src[oy * ow + ox];
                      }
                    }
                  });
}

Var batchnorm(Tape& t, Var x, Var gamma, Var beta, BatchNormState& state, Mode mode) {
  const Tensor& xv = t.value(x);
  require_rank("batchnorm", xv, 4);
  const std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  const Tensor& gv = t.value(gamma);
  const Tensor& bv = t.value(beta);
  if (gv.shape() != Shape{c} || bv.shape() != Shape{c}) {
    throw DimensionError("batchnorm: gamma/beta " + shape_str(gv.shape()) + "/" +
                         shape_str(bv.shape()) + " do not match channels of " +
                         shape_str(xv.shape()));
  }
  if (state.running_mean.shape() != Shape{c} || state.running_var.shape() != Shape{c}) {
    throw DimensionError("batchnorm: running statistics do not match channels of " +
                         shape_str(xv.shape()));
  }
  const double count = static_cast<double>(n * hw);
  if (count == 0) throw DimensionError("batchnorm: empty input");

  std::vector<float> mean_c(c), inv_std(c);
  if (mode == Mode::Train) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0, ss = 0.0;
      for (std::size_t smp = 0; smp < n; ++smp) {
        const float* p = xv.data().data() + (smp * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
      }
      const double mu = s / count;
      for (std::size_t smp = 0; smp < n; ++smp) {
        const float* p = xv.data().data() + (smp * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const double d = p[i] - mu;
          ss += d * d;
        }
      }
      const double var = ss / count;
      mean_c[ch] = static_cast<float>(mu);
      inv_std[ch] = static_cast<float>(1.0 / std::sqrt(var + kBatchNormEps));
      state.running_mean[ch] =
          kBatchNormMomentum * state.running_mean[ch] + (1.0f - kBatchNormMomentum) * mean_c[ch];
      state.running_var[ch] = kBatchNormMomentum * state.running_var[ch] +
                              (1.0f - kBatchNormMomentum) * static_cast<float>(var);
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean_c[ch] = state.running_mean[ch];
      inv_std[ch] = 1.0f / std::sqrt(state.running_var[ch] + kBatchNormEps);
    }
  }

  Tensor xhat(xv.shape());
  Tensor out(xv.shape());
  for (std::size_t smp = 0; smp < n; ++smp)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (smp * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const float h = (xv[off + i] - mean_c[ch]) * inv_std[ch];
        xhat[off + i] = h;
        out[off + i] = gv[ch] * h + bv[ch];
      }
    }

  const bool train = mode == Mode::Train;
  return t.record(
      "batchnorm", std::move(out), {x, gamma, beta},
      [x, gamma, beta, n, c, hw, count, train, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Tape& tp, std::size_t self) {
        const Tensor& g = tp.out_grad(self);
        const Tensor& gv = tp.value(gamma);
        Tensor* gx = tp.grad_slot(x);
        Tensor* gg = tp.grad_slot(gamma);
        Tensor* gb = tp.grad_slot(beta);
        for (std::size_t ch = 0; ch < c; ++ch) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t smp = 0; smp < n; ++smp) {
            const std::size_t off = (smp * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              sum_g += g[off + i];
              sum_gx += static_cast<double>(g[off + i]) * xhat[off + i];
            }
          }
          if (gg) (*gg)[ch] += static_cast<float>(sum_gx);
          if (gb) (*gb)[ch] += static_cast<float>(sum_g);
          if (!gx) continue;
          const float k = gv[ch] * inv_std[ch];
          const auto mean_g = static_cast<float>(sum_g / count);
          const auto mean_gx = static_cast<float>(sum_gx / count);
          for (std::size_t smp = 0; smp < n; ++smp) {
            const std::size_t off = (smp * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              (*gx)[off + i] += train ? k * (g[off + i] - mean_g - xhat[off + i] * mean_gx)
                                      : k * g[off + i];
            }
          }
        }
      });
}

Var concat_channels(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_rank("concat_channels", av, 4);
  require_rank("concat_channels", bv, 4);
  if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3)) {
    throw DimensionError("concat_channels: batch/spatial mismatch " + shape_str(av.shape()) +
                         " vs " + shape_str(bv.shape()));
  }
  const std::size_t n = av.dim(0), c1 = av.dim(1), c2 = bv.dim(1),
                    hw = av.dim(2) * av.dim(3);
  Tensor out({n, c1 + c2, av.dim(2), av.dim(3)});
  for (std::size_t s = 0; s < n; ++s) {
    std::copy_n(av.data().data() + s * c1 * hw, c1 * hw,
                out.data().data() + s * (c1 + c2) * hw);
    std::copy_n(bv.data().data() + s * c2 * hw, c2 * hw,
                out.data().data() + (s * (c1 + c2) + c1) * hw);
  }
  return t.record("concat_channels", std::move(out), {a, b},
                  [a, b, n, c1, c2, hw](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.out_grad(self);
                    Tensor* ga = tp.grad_slot(a);
                    Tensor* gb = tp.grad_slot(b);
                    for (std::size_t s = 0; s < n; ++s) {
                      const float* src = g.data().data() + s * (c1 + c2) * hw;
                      if (ga) {
                        float* d = ga->data().data() + s * c1 * hw;
                        for (std::size_t i = 0; i < c1 * hw; ++i) d[i] += src[i];
                      }
                      if (gb) {
                        float* d = gb->data().data() + s * c2 * hw;
                        for (std::size_t i = 0; i < c2 * hw; ++i) d[i] += src[c1 * hw + i];
                      }
                    }
                  });
}

std::pair<Tensor, Tensor> split_channels(const Tensor& x, std::size_t c1) {
  if (x.rank() != 4 || c1 > x.dim(1)) {
    throw DimensionError("split_channels: cannot split " + shape_str(x.shape()) + " at " +
                         std::to_string(c1));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3), c2 = c - c1;
  Tensor a({n, c1, x.dim(2), x.dim(3)});
  Tensor b({n, c2, x.dim(2), x.dim(3)});
  for (std::size_t s = 0; s < n; ++s) {
    const float* src = x.data().data() + s * c * hw;
    std::copy_n(src, c1 * hw, a.data().data() + s * c1 * hw);
    std::copy_n(src + c1 * hw, c2 * hw, b.data().data() + s * c2 * hw);
  }
  return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------------------
// Activations

Var unary(Tape& t, Var x, UnaryKind kind) {
  if (kind == UnaryKind::Prelu) {
    throw ConfigError("prelu has a learnable slope; call ops::prelu");
  }
  const Tensor& xv = t.value(x);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) {
    const float v = xv[i];
    float y = v;
    switch (kind) {
      case UnaryKind::Sigmoid: y = sigmoid(v); break;
      case UnaryKind::Tanh: y = std::tanh(v); break;
      case UnaryKind::Relu: y = v > 0.0f ? v : 0.0f; break;
      case UnaryKind::LeakyRelu: y = v > 0.0f ? v : kLeakySlope * v; break;
      case UnaryKind::Elu: y = v > 0.0f ? v : kEluAlpha * std::expm1(v); break;
      case UnaryKind::HardSigmoid: y = hard_sigmoid(v); break;
      case UnaryKind::Linear: y = v; break;
      case UnaryKind::Exp: y = std::exp(v); break;
      case UnaryKind::Log:
        if (!(v > 0.0f)) {
          throw NumericError("log of nonpositive value " + std::to_string(v));
        }
        y = std::log(v);
        break;
      case UnaryKind::Abs: y = std::fabs(v); break;
      case UnaryKind::Prelu: break;
    }
    out[i] = y;
  }
  return t.record(to_string(kind), std::move(out), {x}, [x, kind](Tape& tp, std::size_t self) {
    Tensor* gx = tp.grad_slot(x);
    if (!gx) return;
    const Tensor& g = tp.out_grad(self);
    const Tensor& xv = tp.value(x);
    const Tensor& yv = tp.value(Var{self});
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const float v = xv[i];
      const float y = yv[i];
      float d = 1.0f;
      switch (kind) {
        // From the input: y rounds to exactly 1 once saturated, which would
        // zero a derivative that is small but representable.
        case UnaryKind::Sigmoid: d = static_cast<float>(sigmoid(v) * static_cast<double>(sigmoid(-v))); break;
        case UnaryKind::Tanh: {
          const double c = std::cosh(static_cast<double>(v));
          d = static_cast<float>(1.0 / (c * c));
          break;
        }
        case UnaryKind::Relu: d = v > 0.0f ? 1.0f : 0.0f; break;
        case UnaryKind::LeakyRelu: d = v > 0.0f ? 1.0f : kLeakySlope; break;
        case UnaryKind::Elu: d = v > 0.0f ? 1.0f : y + kEluAlpha; break;
        case UnaryKind::HardSigmoid: d = (v > -2.5f && v < 2.5f) ? 0.2f : 0.0f; break;
        case UnaryKind::Linear: d = 1.0f; break;
        case UnaryKind::Exp: d = y; break;
        case UnaryKind::Log: d = 1.0f / v; break;
        case UnaryKind::Abs: d = v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); break;
        case UnaryKind::Prelu: break;
      }
      (*gx)[i] += d * g[i];
    }
  });
}

Var prelu(Tape& t, Var x, Var slope) {
  const Tensor& xv = t.value(x);
  const Tensor& av = t.value(slope);
  const ChannelLayout l = channel_layout("prelu", xv);
  if (av.shape() != Shape{l.channels}) {
    throw DimensionError("prelu: slope " + shape_str(av.shape()) + " does not match " +
                         shape_str(xv.shape()));
  }
  Tensor out(xv.shape());
  for (std::size_t o = 0; o < l.outer; ++o)
    for (std::size_t ch = 0; ch < l.channels; ++ch)
      for (std::size_t i = 0; i < l.inner; ++i) {
        const std::size_t idx = (o * l.channels + ch) * l.inner + i;
        const float v = xv[idx];
        out[idx] = v > 0.0f ? v : av[ch] * v;
      }
  return t.record("prelu", std::move(out), {x, slope}, [x, slope, l](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    const Tensor& xv = tp.value(x);
    const Tensor& av = tp.value(slope);
    Tensor* gx = tp.grad_slot(x);
    Tensor* ga = tp.grad_slot(slope);
    std::vector<double> acc(l.channels, 0.0);
    for (std::size_t o = 0; o < l.outer; ++o)
      for (std::size_t ch = 0; ch < l.channels; ++ch)
        for (std::size_t i = 0; i < l.inner; ++i) {
          const std::size_t idx = (o * l.channels + ch) * l.inner + i;
          const float v = xv[idx];
          if (gx) (*gx)[idx] += (v > 0.0f ? 1.0f : av[ch]) * g[idx];
          if (v <= 0.0f) acc[ch] += static_cast<double>(v) * g[idx];
        }
    if (ga)
      for (std::size_t ch = 0; ch < l.channels; ++ch) (*ga)[ch] += static_cast<float>(acc[ch]);
  });
}

// ---------------------------------------------------------------------------
// Layout

Var channels_to_rows(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  require_rank("channels_to_rows", xv, 4);
  const std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  Tensor out({n * hw, c});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < hw; ++i) out[(s * hw + i) * c + ch] = xv[(s * c + ch) * hw + i];
  return t.record("channels_to_rows", std::move(out), {x}, [x, n, c, hw](Tape& tp, std::size_t self) {
    if (Tensor* gx = tp.grad_slot(x)) {
      const Tensor& g = tp.out_grad(self);
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t i = 0; i < hw; ++i)
            (*gx)[(s * c + ch) * hw + i] += g[(s * hw + i) * c + ch];
    }
  });
}

Var rows_to_channels(Tape& t, Var rows, std::size_t n, std::size_t h, std::size_t w) {
  const Tensor& rv = t.value(rows);
  require_rank("rows_to_channels", rv, 2);
  const std::size_t hw = h * w;
  if (rv.dim(0) != n * hw) {
    throw DimensionError("rows_to_channels: " + shape_str(rv.shape()) + " has wrong row count for " +
                         std::to_string(n) + "x" + std::to_string(h) + "x" + std::to_string(w));
  }
  const std::size_t c = rv.dim(1);
  Tensor out({n, c, h, w});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < hw; ++i) out[(s * c + ch) * hw + i] = rv[(s * hw + i) * c + ch];
  return t.record("rows_to_channels", std::move(out), {rows},
                  [rows, n, c, hw](Tape& tp, std::size_t self) {
                    if (Tensor* gr = tp.grad_slot(rows)) {
                      const Tensor& g = tp.out_grad(self);
                      for (std::size_t s = 0; s < n; ++s)
                        for (std::size_t ch = 0; ch < c; ++ch)
                          for (std::size_t i = 0; i < hw; ++i)
                            (*gr)[(s * hw + i) * c + ch] += g[(s * c + ch) * hw + i];
                    }
                  });
}

}  // namespace nalu::ops
