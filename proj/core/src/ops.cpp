#include "gcvae/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "gcvae/errors.hpp"

namespace gcvae::ops {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_same_tape(Var a, Var b, const char* op) {
  if (&a.tape() != &b.tape()) {
    throw ContractError(std::string(op) + ": operands live on different tapes");
  }
}

void require_rank(Var x, std::size_t rank, const char* op) {
  if (x.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(x.shape()));
  }
}

// Geometry shared by conv2d / conv_transpose2d: an image of `channels` x `height` x `width`
// scanned by a kh x kw window at `stride` with zero padding `pad`, producing an
// out_h x out_w grid of patches.
struct PatchGeometry {
  std::size_t channels, height, width, kh, kw, stride, pad, out_h, out_w;

  std::size_t rows() const { return channels * kh * kw; }
  std::size_t cols() const { return out_h * out_w; }
};

std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad, const char* op) {
  if (stride == 0) throw ShapeError(std::string(op) + ": stride must be positive");
  if (in + 2 * pad < k) {
    throw ShapeError(std::string(op) + ": kernel " + std::to_string(k) + " larger than padded input " +
                     std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - k) / stride + 1;
}

// col is rows() x cols(), row-major.
void im2col(const PatchGeometry& g, const double* image, double* col) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  std::size_t r = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* plane = image + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j, ++r) {
        double* out = col + r * g.cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * g.stride + i) - pad;
          const bool row_ok = y >= 0 && y < static_cast<std::ptrdiff_t>(g.height);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * g.stride + j) - pad;
            const bool ok = row_ok && x >= 0 && x < static_cast<std::ptrdiff_t>(g.width);
            out[oy * g.out_w + ox] = ok ? plane[y * static_cast<std::ptrdiff_t>(g.width) + x] : 0.0;
          }
        }
      }
    }
  }
}

// Accumulates columns back into the image (adjoint of im2col).
void col2im(const PatchGeometry& g, const double* col, double* image) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  std::size_t r = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    double* plane = image + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j, ++r) {
        const double* in = col + r * g.cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * g.stride + i) - pad;
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * g.stride + j) - pad;
            if (x < 0 || x >= static_cast<std::ptrdiff_t>(g.width)) continue;
            plane[y * static_cast<std::ptrdiff_t>(g.width) + x] += in[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

template <class F, class DF>
Var unary(const char* kind, Var x, F f, DF df) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = f(xv[i]);
  return x.tape().record(kind, std::move(out), {x.id()}, [df](const BackwardContext& ctx) {
    Tensor* gx = ctx.input_grad(0);
    if (!gx) return;
    const Tensor& in = ctx.input(0);
    for (std::size_t i = 0; i < in.numel(); ++i) (*gx)[i] += ctx.grad[i] * df(in[i], ctx.output[i]);
  });
}

bool is_scalar(const Tensor& t) { return t.rank() == 0 && t.numel() == 1; }

// Shape rule for elementwise binaries: equal shapes, or either side a rank-0 scalar.
Shape binary_shape(Var a, Var b, const char* op) {
  require_same_tape(a, b, op);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() == bv.shape()) return av.shape();
  if (is_scalar(av)) return bv.shape();
  if (is_scalar(bv)) return av.shape();
  throw ShapeError(std::string(op) + ": shapes " + shape_str(av.shape()) + " and " + shape_str(bv.shape()) +
                   " do not match");
}

// Adds `contribution(i)` for each output element into an input gradient that may be
// either full-shaped or a broadcast scalar.
template <class F>
void accumulate(Tensor* g, std::size_t n, F contribution) {
  if (!g) return;
  if (g->numel() == n) {
    for (std::size_t i = 0; i < n; ++i) (*g)[i] += contribution(i);
  } else {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += contribution(i);
    (*g)[0] += sum;
  }
}

inline double elem(const Tensor& t, std::size_t i) { return t.numel() == 1 ? t[0] : t[i]; }

double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t n = av.dim(0), k = av.dim(1), m = bv.dim(1);
  if (bv.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  Tensor out({n, m});
  MapMat(out.ptr(), n, m).noalias() = ConstMapMat(av.ptr(), n, k) * ConstMapMat(bv.ptr(), k, m);
  return a.tape().record("matmul", std::move(out), {a.id(), b.id()}, [n, k, m](const BackwardContext& ctx) {
    ConstMapMat g(ctx.grad.ptr(), n, m);
    if (Tensor* ga = ctx.input_grad(0)) {
      MapMat(ga->ptr(), n, k).noalias() += g * ConstMapMat(ctx.input(1).ptr(), k, m).transpose();
    }
    if (Tensor* gb = ctx.input_grad(1)) {
      MapMat(gb->ptr(), k, m).noalias() += ConstMapMat(ctx.input(0).ptr(), n, k).transpose() * g;
    }
  });
}

Var conv2d(Var x, Var w, std::size_t stride, std::size_t pad) {
  require_same_tape(x, w, "conv2d");
  require_rank(x, 4, "conv2d");
  require_rank(w, 4, "conv2d");
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (ws[1] != xs[1]) {
    throw ShapeError("conv2d: weight " + shape_str(ws) + " expects " + std::to_string(ws[1]) +
                     " input channels, input is " + shape_str(xs));
  }
  const std::size_t batch = xs[0], out_ch = ws[0];
  PatchGeometry g{xs[1], xs[2], xs[3], ws[2], ws[3], stride, pad, 0, 0};
  g.out_h = conv_out_extent(g.height, g.kh, stride, pad, "conv2d");
  g.out_w = conv_out_extent(g.width, g.kw, stride, pad, "conv2d");

  Tensor out({batch, out_ch, g.out_h, g.out_w});
  Storage col(g.rows() * g.cols());
  ConstMapMat wm(w.value().ptr(), out_ch, g.rows());
  const std::size_t in_stride = g.channels * g.height * g.width;
  const std::size_t out_stride = out_ch * g.cols();
  for (std::size_t n = 0; n < batch; ++n) {
    im2col(g, x.value().ptr() + n * in_stride, col.data());
    MapMat(out.ptr() + n * out_stride, out_ch, g.cols()).noalias() = wm * ConstMapMat(col.data(), g.rows(), g.cols());
  }

  return x.tape().record("conv2d", std::move(out), {x.id(), w.id()},
                         [g, batch, out_ch, in_stride, out_stride](const BackwardContext& ctx) {
                           Tensor* gx = ctx.input_grad(0);
                           Tensor* gw = ctx.input_grad(1);
                           const Tensor& xv = ctx.input(0);
                           ConstMapMat wm(ctx.input(1).ptr(), out_ch, g.rows());
                           Storage col(g.rows() * g.cols());
                           for (std::size_t n = 0; n < batch; ++n) {
                             ConstMapMat gy(ctx.grad.ptr() + n * out_stride, out_ch, g.cols());
                             if (gw) {
                               im2col(g, xv.ptr() + n * in_stride, col.data());
                               MapMat(gw->ptr(), out_ch, g.rows()).noalias() +=
                                   gy * ConstMapMat(col.data(), g.rows(), g.cols()).transpose();
                             }
                             if (gx) {
                               MapMat(col.data(), g.rows(), g.cols()).noalias() = wm.transpose() * gy;
                               col2im(g, col.data(), gx->ptr() + n * in_stride);
                             }
                           }
                         });
}

Var conv_transpose2d(Var x, Var w, std::size_t stride, std::size_t pad) {
  require_same_tape(x, w, "conv_transpose2d");
  require_rank(x, 4, "conv_transpose2d");
  require_rank(w, 4, "conv_transpose2d");
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (ws[0] != xs[1]) {
    throw ShapeError("conv_transpose2d: weight " + shape_str(ws) + " expects " + std::to_string(ws[0]) +
                     " input channels, input is " + shape_str(xs));
  }
  if (stride == 0) throw ShapeError("conv_transpose2d: stride must be positive");
  const std::size_t batch = xs[0], in_ch = xs[1], in_h = xs[2], in_w = xs[3];
  const std::size_t out_ch = ws[1], kh = ws[2], kw = ws[3];
  const std::size_t full_h = (in_h - 1) * stride + kh, full_w = (in_w - 1) * stride + kw;
  if (full_h < 2 * pad + 1 || full_w < 2 * pad + 1) {
    throw ShapeError("conv_transpose2d: padding " + std::to_string(pad) + " too large for input " + shape_str(xs));
  }
  // The output image, seen through conv2d geometry, yields exactly the input grid.
  PatchGeometry g{out_ch, full_h - 2 * pad, full_w - 2 * pad, kh, kw, stride, pad, in_h, in_w};

  Tensor out({batch, out_ch, g.height, g.width});
  Storage col(g.rows() * g.cols());
  ConstMapMat wm(w.value().ptr(), in_ch, g.rows());
  const std::size_t in_stride = in_ch * g.cols();
  const std::size_t out_stride = out_ch * g.height * g.width;
  for (std::size_t n = 0; n < batch; ++n) {
    MapMat(col.data(), g.rows(), g.cols()).noalias() =
        wm.transpose() * ConstMapMat(x.value().ptr() + n * in_stride, in_ch, g.cols());
    col2im(g, col.data(), out.ptr() + n * out_stride);
  }

  return x.tape().record("conv_transpose2d", std::move(out), {x.id(), w.id()},
                         [g, batch, in_ch, in_stride, out_stride](const BackwardContext& ctx) {
                           Tensor* gx = ctx.input_grad(0);
                           Tensor* gw = ctx.input_grad(1);
                           ConstMapMat wm(ctx.input(1).ptr(), in_ch, g.rows());
                           Storage col(g.rows() * g.cols());
                           for (std::size_t n = 0; n < batch; ++n) {
                             im2col(g, ctx.grad.ptr() + n * out_stride, col.data());
                             ConstMapMat cm(col.data(), g.rows(), g.cols());
                             if (gx) MapMat(gx->ptr() + n * in_stride, in_ch, g.cols()).noalias() += wm * cm;
                             if (gw) {
                               MapMat(gw->ptr(), in_ch, g.rows()).noalias() +=
                                   ConstMapMat(ctx.input(0).ptr() + n * in_stride, in_ch, g.cols()) * cm.transpose();
                             }
                           }
                         });
}

Var maxpool2d(Var x, std::size_t window) {
  require_rank(x, 4, "maxpool2d");
  const Shape& xs = x.shape();
  if (window == 0 || xs[2] % window != 0 || xs[3] % window != 0) {
    throw ShapeError("maxpool2d: window " + std::to_string(window) + " does not tile " + shape_str(xs));
  }
  const std::size_t planes = xs[0] * xs[1], h = xs[2], w = xs[3], oh = h / window, ow = w / window;
  Tensor out({xs[0], xs[1], oh, ow});
  std::vector<std::size_t> argmax(out.numel());
  const Tensor& xv = x.value();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = p * h * w + (oy * window) * w + ox * window;
        for (std::size_t i = 0; i < window; ++i) {
          for (std::size_t j = 0; j < window; ++j) {
            const std::size_t idx = p * h * w + (oy * window + i) * w + ox * window + j;
            if (xv[idx] > xv[best]) best = idx;
          }
        }
        const std::size_t o = p * oh * ow + oy * ow + ox;
        out[o] = xv[best];
        argmax[o] = best;
      }
    }
  }
  return x.tape().record("maxpool2d", std::move(out), {x.id()},
                         [argmax = std::move(argmax)](const BackwardContext& ctx) {
                           Tensor* gx = ctx.input_grad(0);
                           if (!gx) return;
                           for (std::size_t o = 0; o < argmax.size(); ++o) (*gx)[argmax[o]] += ctx.grad[o];
                         });
}

Var upsample2x(Var x) {
  require_rank(x, 4, "upsample2x");
  const Shape& xs = x.shape();
  const std::size_t planes = xs[0] * xs[1], h = xs[2], w = xs[3];
  Tensor out({xs[0], xs[1], 2 * h, 2 * w});
  const Tensor& xv = x.value();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < 2 * h; ++y) {
      for (std::size_t c = 0; c < 2 * w; ++c) {
        out[p * 4 * h * w + y * 2 * w + c] = xv[p * h * w + (y / 2) * w + c / 2];
      }
    }
  }
  return x.tape().record("upsample2x", std::move(out), {x.id()}, [planes, h, w](const BackwardContext& ctx) {
    Tensor* gx = ctx.input_grad(0);
    if (!gx) return;
    for (std::size_t p = 0; p < planes; ++p) {
      for (std::size_t y = 0; y < 2 * h; ++y) {
        for (std::size_t c = 0; c < 2 * w; ++c) {
          (*gx)[p * h * w + (y / 2) * w + c / 2] += ctx.grad[p * 4 * h * w + y * 2 * w + c];
        }
      }
    }
  });
}

Var batchnorm2d(Var x, Var gamma, Var beta, BatchNormStats* stats, bool training, double momentum, double eps) {
  require_same_tape(x, gamma, "batchnorm2d");
  require_same_tape(x, beta, "batchnorm2d");
  require_rank(x, 4, "batchnorm2d");
  const Shape& xs = x.shape();
  const std::size_t batch = xs[0], channels = xs[1], plane = xs[2] * xs[3];
  if (gamma.value().numel() != channels || beta.value().numel() != channels) {
    throw ShapeError("batchnorm2d: affine parameters must have " + std::to_string(channels) + " elements");
  }
  const std::size_t count = batch * plane;
  if (training && count < 2) throw ShapeError("batchnorm2d: training mode needs at least 2 values per channel");
  if (!training && !stats) throw ContractError("batchnorm2d: evaluation mode needs running statistics");
  if (stats && (stats->running_mean.numel() != channels || stats->running_var.numel() != channels)) {
    throw ShapeError("batchnorm2d: running statistics must have " + std::to_string(channels) + " elements");
  }

  const Tensor& xv = x.value();
  std::vector<double> mean(channels), inv_std(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    if (training) {
      double s = 0.0;
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t i = 0; i < plane; ++i) s += xv[(n * channels + c) * plane + i];
      const double m = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = xv[(n * channels + c) * plane + i] - m;
          ss += d * d;
        }
      const double var = ss / static_cast<double>(count);
      mean[c] = m;
      inv_std[c] = 1.0 / std::sqrt(var + eps);
      if (stats) {
        const double unbiased = ss / static_cast<double>(count - 1);
        stats->running_mean[c] = momentum * stats->running_mean[c] + (1.0 - momentum) * m;
        stats->running_var[c] = momentum * stats->running_var[c] + (1.0 - momentum) * unbiased;
      }
    } else {
      mean[c] = stats->running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(stats->running_var[c] + eps);
    }
  }

  Tensor out(xs);
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t idx = (n * channels + c) * plane + i;
        out[idx] = gv[c] * (xv[idx] - mean[c]) * inv_std[c] + bv[c];
      }

  return x.tape().record(
      "batchnorm2d", std::move(out), {x.id(), gamma.id(), beta.id()},
      [batch, channels, plane, count, training, mean, inv_std](const BackwardContext& ctx) {
        const Tensor& xv = ctx.input(0);
        const Tensor& gv = ctx.input(1);
        Tensor* gx = ctx.input_grad(0);
        Tensor* gg = ctx.input_grad(1);
        Tensor* gb = ctx.input_grad(2);
        for (std::size_t c = 0; c < channels; ++c) {
          double sum_g = 0.0, sum_g_xhat = 0.0;
          for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t i = 0; i < plane; ++i) {
              const std::size_t idx = (n * channels + c) * plane + i;
              const double xhat = (xv[idx] - mean[c]) * inv_std[c];
              sum_g += ctx.grad[idx];
              sum_g_xhat += ctx.grad[idx] * xhat;
            }
          if (gg) (*gg)[c] += sum_g_xhat;
          if (gb) (*gb)[c] += sum_g;
          if (!gx) continue;
          const double scale = gv[c] * inv_std[c];
          const double m = static_cast<double>(count);
          for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t i = 0; i < plane; ++i) {
              const std::size_t idx = (n * channels + c) * plane + i;
              if (training) {
                const double xhat = (xv[idx] - mean[c]) * inv_std[c];
                (*gx)[idx] += scale * (ctx.grad[idx] - sum_g / m - xhat * sum_g_xhat / m);
              } else {
                (*gx)[idx] += scale * ctx.grad[idx];
              }
            }
        }
      });
}

Var relu(Var x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var x) {
  return unary("sigmoid", x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
  for (double v : x.value().data()) {
    if (!(v > 0.0)) throw DomainError("log: argument " + std::to_string(v) + " is not positive");
  }
  return unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var square(Var x) {
  return unary(
      "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var add(Var a, Var b) {
  Shape shape = binary_shape(a, b, "add");
  Tensor out(shape);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = elem(av, i) + elem(bv, i);
  return a.tape().record("add", std::move(out), {a.id(), b.id()}, [](const BackwardContext& ctx) {
    const std::size_t n = ctx.grad.numel();
    accumulate(ctx.input_grad(0), n, [&](std::size_t i) { return ctx.grad[i]; });
    accumulate(ctx.input_grad(1), n, [&](std::size_t i) { return ctx.grad[i]; });
  });
}

Var sub(Var a, Var b) {
  Shape shape = binary_shape(a, b, "sub");
  Tensor out(shape);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = elem(av, i) - elem(bv, i);
  return a.tape().record("sub", std::move(out), {a.id(), b.id()}, [](const BackwardContext& ctx) {
    const std::size_t n = ctx.grad.numel();
    accumulate(ctx.input_grad(0), n, [&](std::size_t i) { return ctx.grad[i]; });
    accumulate(ctx.input_grad(1), n, [&](std::size_t i) { return -ctx.grad[i]; });
  });
}

Var mul(Var a, Var b) {
  Shape shape = binary_shape(a, b, "mul");
  Tensor out(shape);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = elem(av, i) * elem(bv, i);
  return a.tape().record("mul", std::move(out), {a.id(), b.id()}, [](const BackwardContext& ctx) {
    const std::size_t n = ctx.grad.numel();
    const Tensor& av = ctx.input(0);
    const Tensor& bv = ctx.input(1);
    accumulate(ctx.input_grad(0), n, [&](std::size_t i) { return ctx.grad[i] * elem(bv, i); });
    accumulate(ctx.input_grad(1), n, [&](std::size_t i) { return ctx.grad[i] * elem(av, i); });
  });
}

Var div(Var a, Var b) {
  Shape shape = binary_shape(a, b, "div");
  for (double v : b.value().data()) {
    if (v == 0.0) throw DomainError("div: division by zero");
  }
  Tensor out(shape);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = elem(av, i) / elem(bv, i);
  return a.tape().record("div", std::move(out), {a.id(), b.id()}, [](const BackwardContext& ctx) {
    const std::size_t n = ctx.grad.numel();
    const Tensor& bv = ctx.input(1);
    accumulate(ctx.input_grad(0), n, [&](std::size_t i) { return ctx.grad[i] / elem(bv, i); });
    accumulate(ctx.input_grad(1), n,
               [&](std::size_t i) { return -ctx.grad[i] * ctx.output[i] / elem(bv, i); });
  });
}

Var scalar_mul(Var x, double s) {
  return unary(
      "scalar_mul", x, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

Var add_scalar(Var x, double s) {
  return unary(
      "add_scalar", x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Var bias_add(Var x, Var b) {
  require_same_tape(x, b, "bias_add");
  const Shape& xs = x.shape();
  if (xs.size() != 2 && xs.size() != 4) throw ShapeError("bias_add: input must be rank 2 or 4, got " + shape_str(xs));
  const std::size_t channels = xs[1];
  if (b.value().numel() != channels) {
    throw ShapeError("bias_add: bias " + shape_str(b.shape()) + " does not match channel axis of " + shape_str(xs));
  }
  const std::size_t outer = xs[0];
  const std::size_t inner = xs.size() == 4 ? xs[2] * xs[3] : 1;
  Tensor out = x.value();
  const Tensor& bv = b.value();
  for (std::size_t n = 0; n < outer; ++n)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t i = 0; i < inner; ++i) out[(n * channels + c) * inner + i] += bv[c];
  return x.tape().record("bias_add", std::move(out), {x.id(), b.id()},
                         [outer, channels, inner](const BackwardContext& ctx) {
                           if (Tensor* gx = ctx.input_grad(0)) {
                             for (std::size_t i = 0; i < gx->numel(); ++i) (*gx)[i] += ctx.grad[i];
                           }
                           if (Tensor* gb = ctx.input_grad(1)) {
                             for (std::size_t n = 0; n < outer; ++n)
                               for (std::size_t c = 0; c < channels; ++c)
                                 for (std::size_t i = 0; i < inner; ++i)
                                   (*gb)[c] += ctx.grad[(n * channels + c) * inner + i];
                           }
                         });
}

Var bce_with_logits(Var logits, Var targets) {
  require_same_tape(logits, targets, "bce_with_logits");
  const Tensor& zv = logits.value();
  const Tensor& tv = targets.value();
  if (zv.shape() != tv.shape()) {
    throw ShapeError("bce_with_logits: logits " + shape_str(zv.shape()) + " vs targets " + shape_str(tv.shape()));
  }
  for (double t : tv.data()) {
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("bce_with_logits: target " + std::to_string(t) + " outside [0,1]");
  }
  Tensor out(zv.shape());
  for (std::size_t i = 0; i < zv.numel(); ++i) {
    const double z = zv[i];
    out[i] = std::max(z, 0.0) - z * tv[i] + std::log1p(std::exp(-std::abs(z)));
  }
  return logits.tape().record("bce_with_logits", std::move(out), {logits.id(), targets.id()},
                              [](const BackwardContext& ctx) {
                                const Tensor& zv = ctx.input(0);
                                const Tensor& tv = ctx.input(1);
                                if (Tensor* gz = ctx.input_grad(0)) {
                                  for (std::size_t i = 0; i < zv.numel(); ++i)
                                    (*gz)[i] += ctx.grad[i] * (stable_sigmoid(zv[i]) - tv[i]);
                                }
                                if (Tensor* gt = ctx.input_grad(1)) {
                                  for (std::size_t i = 0; i < zv.numel(); ++i) (*gt)[i] -= ctx.grad[i] * zv[i];
                                }
                              });
}

Var reduce_sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape().record("reduce_sum", Tensor::scalar(s), {x.id()}, [](const BackwardContext& ctx) {
    Tensor* gx = ctx.input_grad(0);
    if (!gx) return;
    const double g = ctx.grad[0];
    for (std::size_t i = 0; i < gx->numel(); ++i) (*gx)[i] += g;
  });
}

Var reduce_mean(Var x) {
  const std::size_t n = x.value().numel();
  if (n == 0) throw ShapeError("reduce_mean: empty tensor");
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const double inv = 1.0 / static_cast<double>(n);
  return x.tape().record("reduce_mean", Tensor::scalar(s / static_cast<double>(n)), {x.id()},
                         [inv](const BackwardContext& ctx) {
                           Tensor* gx = ctx.input_grad(0);
                           if (!gx) return;
                           const double g = ctx.grad[0] * inv;
                           for (std::size_t i = 0; i < gx->numel(); ++i) (*gx)[i] += g;
                         });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record("reshape", std::move(out), {x.id()}, [](const BackwardContext& ctx) {
    Tensor* gx = ctx.input_grad(0);
    if (!gx) return;
    for (std::size_t i = 0; i < gx->numel(); ++i) (*gx)[i] += ctx.grad[i];
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_cols");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  if (begin >= end || end > cols) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
                     shape_str(x.shape()));
  }
  const std::size_t width = end - begin;
  Tensor out({rows, width});
  const Tensor& xv = x.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < width; ++c) out[r * width + c] = xv[r * cols + begin + c];
  return x.tape().record("slice_cols", std::move(out), {x.id()}, [rows, cols, begin, width](const BackwardContext& ctx) {
    Tensor* gx = ctx.input_grad(0);
    if (!gx) return;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < width; ++c) (*gx)[r * cols + begin + c] += ctx.grad[r * width + c];
  });
}

Var concat_rows(Var a, Var b) {
  require_same_tape(a, b, "concat_rows");
  require_rank(a, 2, "concat_rows");
  require_rank(b, 2, "concat_rows");
  if (a.shape()[1] != b.shape()[1]) {
    throw ShapeError("concat_rows: column counts differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t na = a.value().numel();
  Storage data(a.value().data().begin(), a.value().data().end());
  data.insert(data.end(), b.value().data().begin(), b.value().data().end());
  Tensor out({a.shape()[0] + b.shape()[0], a.shape()[1]}, std::move(data));
  return a.tape().record("concat_rows", std::move(out), {a.id(), b.id()}, [na](const BackwardContext& ctx) {
    if (Tensor* ga = ctx.input_grad(0)) {
      for (std::size_t i = 0; i < na; ++i) (*ga)[i] += ctx.grad[i];
    }
    if (Tensor* gb = ctx.input_grad(1)) {
      for (std::size_t i = 0; i < gb->numel(); ++i) (*gb)[i] += ctx.grad[na + i];
    }
  });
}

Var pairwise_sqdist(Var a, Var b) {
  require_same_tape(a, b, "pairwise_sqdist");
  require_rank(a, 2, "pairwise_sqdist");
  require_rank(b, 2, "pairwise_sqdist");
  const std::size_t n = a.shape()[0], m = b.shape()[0], k = a.shape()[1];
  if (b.shape()[1] != k) {
    throw ShapeError("pairwise_sqdist: dimensions differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        const double d = av[i * k + c] - bv[j * k + c];
        s += d * d;
      }
      out[i * m + j] = s;
    }
  return a.tape().record("pairwise_sqdist", std::move(out), {a.id(), b.id()}, [n, m, k](const BackwardContext& ctx) {
    const Tensor& av = ctx.input(0);
    const Tensor& bv = ctx.input(1);
    Tensor* ga = ctx.input_grad(0);
    Tensor* gb = ctx.input_grad(1);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double g2 = 2.0 * ctx.grad[i * m + j];
        for (std::size_t c = 0; c < k; ++c) {
          const double d = g2 * (av[i * k + c] - bv[j * k + c]);
          if (ga) (*ga)[i * k + c] += d;
          if (gb) (*gb)[j * k + c] -= d;
        }
      }
  });
}

}  // namespace gcvae::ops
