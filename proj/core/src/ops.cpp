#include "dsnet/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>

#include "dsnet/error.hpp"

namespace dsnet::ops {
namespace {

Tensor finish(Tensor out, const char* op) {
  check_finite(out, op);
  return out;
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// Row-major C = alpha * op(A) * op(B) + beta * C.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, const double* b, double beta, double* c) {
  const auto lda = static_cast<int>(trans_a ? m : k);
  const auto ldb = static_cast<int>(trans_b ? k : n);
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a, lda, b, ldb,
              beta, c, static_cast<int>(n));
}

struct ConvGeometry {
  std::size_t n, cin, h, w, cout, kh, kw, ph, pw, ho, wo;
  std::size_t col_rows() const { return cin * kh * kw; }
  std::size_t col_cols() const { return ho * wo; }
};

void im2col(const ConvGeometry& g, const double* x, double* col) {
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    const double* plane = x + ci * g.h * g.w;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = col + ((ci * g.kh + ki) * g.kw + kj) * g.col_cols();
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          double* dst = row + oh * g.wo;
          const auto ih = static_cast<std::ptrdiff_t>(oh + ki) - static_cast<std::ptrdiff_t>(g.ph);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(ih) * g.w;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow + kj) - static_cast<std::ptrdiff_t>(g.pw);
            dst[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w)) ? 0.0 : src[iw];
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* col, double* dx) {
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    double* plane = dx + ci * g.h * g.w;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = col + ((ci * g.kh + ki) * g.kw + kj) * g.col_cols();
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh + ki) - static_cast<std::ptrdiff_t>(g.ph);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
          double* dst = plane + static_cast<std::size_t>(ih) * g.w;
          const double* src = row + oh * g.wo;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow + kj) - static_cast<std::ptrdiff_t>(g.pw);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.w)) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

// Splits a shape around `axis` into (outer, len, inner) extents.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor conv2d(Graph& g, const Tensor& input, const Tensor& kernel, const Tensor& bias, Padding pad) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  require_rank(bias, 1, "conv2d bias");
  ConvGeometry geo{};
  geo.n = input.dim(0);
  geo.cin = input.dim(1);
  geo.h = input.dim(2);
  geo.w = input.dim(3);
  geo.cout = kernel.dim(0);
  geo.kh = kernel.dim(2);
  geo.kw = kernel.dim(3);
  geo.ph = pad.h;
  geo.pw = pad.w;
  if (kernel.dim(1) != geo.cin) {
    throw ShapeError("conv2d: input has " + std::to_string(geo.cin) + " channels, kernel expects " +
                     std::to_string(kernel.dim(1)));
  }
  if (bias.dim(0) != geo.cout) throw ShapeError("conv2d: bias length does not match output channels");
  if (geo.kh % 2 == 0 || geo.kw % 2 == 0) throw ShapeError("conv2d: kernel sizes must be odd");
  if (geo.kh > geo.h + 2 * geo.ph || geo.kw > geo.w + 2 * geo.pw) {
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) + " larger than padded input " +
                     shape_str(input.shape()));
  }
  geo.ho = geo.h + 2 * geo.ph - geo.kh + 1;
  geo.wo = geo.w + 2 * geo.pw - geo.kw + 1;

  const std::size_t in_stride = geo.cin * geo.h * geo.w;
  const std::size_t out_stride = geo.cout * geo.ho * geo.wo;
  std::vector<double> out(geo.n * out_stride);
  std::vector<double> col(geo.col_rows() * geo.col_cols());
  const auto x = input.data();
  const auto k = kernel.data();
  const auto b = bias.data();
  for (std::size_t n = 0; n < geo.n; ++n) {
    im2col(geo, x.data() + n * in_stride, col.data());
    double* y = out.data() + n * out_stride;
    for (std::size_t co = 0; co < geo.cout; ++co) {
      std::fill(y + co * geo.col_cols(), y + (co + 1) * geo.col_cols(), b[co]);
    }
    gemm(false, false, geo.cout, geo.col_cols(), geo.col_rows(), 1.0, k.data(), col.data(), 1.0, y);
  }
  Tensor result(Shape{geo.n, geo.cout, geo.ho, geo.wo}, std::move(out));
  finish(result, "conv2d");
  if (g.tracks({&input, &kernel, &bias})) {
    g.record("conv2d", {input, kernel, bias}, result, [geo, input, kernel, bias, result]() mutable {
      const auto dy = result.grad();
      const auto x = input.data();
      std::vector<double> col(geo.col_rows() * geo.col_cols());
      std::vector<double> dcol(col.size());
      const std::size_t in_stride = geo.cin * geo.h * geo.w;
      const std::size_t out_stride = geo.cout * geo.ho * geo.wo;
      if (bias.requires_grad()) {
        auto db = bias.grad_mut();
        for (std::size_t n = 0; n < geo.n; ++n) {
          for (std::size_t co = 0; co < geo.cout; ++co) {
            const double* row = dy.data() + n * out_stride + co * geo.col_cols();
            double s = 0.0;
            for (std::size_t i = 0; i < geo.col_cols(); ++i) s += row[i];
            db[co] += s;
          }
        }
      }
      for (std::size_t n = 0; n < geo.n; ++n) {
        const double* dyn = dy.data() + n * out_stride;
        if (kernel.requires_grad()) {
          im2col(geo, x.data() + n * in_stride, col.data());
          gemm(false, true, geo.cout, geo.col_rows(), geo.col_cols(), 1.0, dyn, col.data(), 1.0,
               kernel.grad_mut().data());
        }
        if (input.requires_grad()) {
          gemm(true, false, geo.col_rows(), geo.col_cols(), geo.cout, 1.0, kernel.data().data(), dyn,
               0.0, dcol.data());
          col2im_add(geo, dcol.data(), input.grad_mut().data() + n * in_stride);
        }
      }
    });
  }
  return result;
}

Tensor maxpool2d(Graph& g, const Tensor& input, Window window) {
  require_rank(input, 4, "maxpool2d input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (window.h == 0 || window.w == 0) throw ShapeError("maxpool2d: empty window");
  if (h < window.h || w < window.w) {
    throw ShapeError("maxpool2d: spatial size " + shape_str(input.shape()) + " smaller than window");
  }
  const std::size_t ho = h / window.h, wo = w / window.w;
  std::vector<double> out(n * c * ho * wo);
  std::vector<std::size_t> argmax(out.size());
  const auto x = input.data();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oh = 0; oh < ho; ++oh) {
      for (std::size_t ow = 0; ow < wo; ++ow, ++o) {
        std::size_t best = base + (oh * window.h) * w + ow * window.w;
        for (std::size_t i = 0; i < window.h; ++i) {
          for (std::size_t j = 0; j < window.w; ++j) {
            const std::size_t idx = base + (oh * window.h + i) * w + ow * window.w + j;
            if (x[idx] > x[best]) best = idx;
          }
        }
        argmax[o] = best;
        out[o] = x[best];
      }
    }
  }
  Tensor result(Shape{n, c, ho, wo}, std::move(out));
  finish(result, "maxpool2d");
  if (g.tracks({&input})) {
    g.record("maxpool2d", {input}, result, [input, result, argmax = std::move(argmax)]() mutable {
      const auto dy = result.grad();
      auto dx = input.grad_mut();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
    });
  }
  return result;
}

Tensor affine(Graph& g, const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(input, 2, "affine input");
  require_rank(weight, 2, "affine weight");
  require_rank(bias, 1, "affine bias");
  const std::size_t n = input.dim(0), din = input.dim(1), dout = weight.dim(1);
  if (weight.dim(0) != din || bias.dim(0) != dout) {
    throw ShapeError("affine: " + shape_str(input.shape()) + " x " + shape_str(weight.shape()) + " + " +
                     shape_str(bias.shape()));
  }
  std::vector<double> out(n * dout);
  const auto b = bias.data();
  for (std::size_t i = 0; i < n; ++i) std::copy(b.begin(), b.end(), out.begin() + i * dout);
  gemm(false, false, n, dout, din, 1.0, input.data().data(), weight.data().data(), 1.0, out.data());
  Tensor result(Shape{n, dout}, std::move(out));
  finish(result, "affine");
  if (g.tracks({&input, &weight, &bias})) {
    g.record("affine", {input, weight, bias}, result, [=]() mutable {
      const double* dy = result.grad().data();
      if (input.requires_grad()) {
        gemm(false, true, n, din, dout, 1.0, dy, weight.data().data(), 1.0, input.grad_mut().data());
      }
      if (weight.requires_grad()) {
        gemm(true, false, din, dout, n, 1.0, input.data().data(), dy, 1.0, weight.grad_mut().data());
      }
      if (bias.requires_grad()) {
        auto db = bias.grad_mut();
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < dout; ++j) db[j] += dy[i * dout + j];
        }
      }
    });
  }
  return result;
}

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b, bool transpose_a) {
  require_rank(a, 2, "matmul lhs");
  require_rank(b, 2, "matmul rhs");
  const std::size_t m = transpose_a ? a.dim(1) : a.dim(0);
  const std::size_t k = transpose_a ? a.dim(0) : a.dim(1);
  const std::size_t n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  gemm(transpose_a, false, m, n, k, 1.0, a.data().data(), b.data().data(), 0.0, out.data());
  Tensor result(Shape{m, n}, std::move(out));
  finish(result, "matmul");
  if (g.tracks({&a, &b})) {
    g.record("matmul", {a, b}, result, [=]() mutable {
      const double* dy = result.grad().data();
      if (a.requires_grad()) {
        if (transpose_a) {
          // a is K×M: da = b · dyᵀ
          gemm(false, true, k, m, n, 1.0, b.data().data(), dy, 1.0, a.grad_mut().data());
        } else {
          gemm(false, true, m, k, n, 1.0, dy, b.data().data(), 1.0, a.grad_mut().data());
        }
      }
      if (b.requires_grad()) {
        // db = op(a)ᵀ · dy
        gemm(!transpose_a, false, k, n, m, 1.0, a.data().data(), dy, 1.0, b.grad_mut().data());
      }
    });
  }
  return result;
}

Tensor batchnorm(Graph& g, const Tensor& input, const Tensor& scale, const Tensor& shift,
                 BatchNormStats& stats, Mode mode) {
  if (input.rank() != 2 && input.rank() != 4) {
    throw ShapeError("batchnorm: expected N×C or N×C×H×W, got " + shape_str(input.shape()));
  }
  const std::size_t n = input.dim(0), c = input.dim(1);
  const std::size_t inner = input.rank() == 4 ? input.dim(2) * input.dim(3) : 1;
  if (scale.numel() != c || shift.numel() != c || stats.running_mean.numel() != c ||
      stats.running_var.numel() != c) {
    throw ShapeError("batchnorm: parameter length does not match channel count " + std::to_string(c));
  }
  const double count = static_cast<double>(n * inner);
  const auto x = input.data();
  const auto gam = scale.data();
  const auto bet = shift.data();
  std::vector<double> mean(c), invstd(c);
  if (mode == Mode::kTrain) {
    if (n < 2) throw ValidationError("batchnorm: batch size 1 is not allowed in train mode");
    auto rm = stats.running_mean.data_mut();
    auto rv = stats.running_var.data_mut();
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double* p = x.data() + (i * c + ch) * inner;
        for (std::size_t j = 0; j < inner; ++j) s += p[j];
      }
      const double mu = s / count;
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double* p = x.data() + (i * c + ch) * inner;
        for (std::size_t j = 0; j < inner; ++j) ss += (p[j] - mu) * (p[j] - mu);
      }
      const double var = ss / count;
      mean[ch] = mu;
      invstd[ch] = 1.0 / std::sqrt(var + stats.eps);
      rm[ch] = (1.0 - stats.momentum) * rm[ch] + stats.momentum * mu;
      rv[ch] = (1.0 - stats.momentum) * rv[ch] + stats.momentum * (ss / (count - 1.0));
    }
  } else {
    const auto rm = stats.running_mean.data();
    const auto rv = stats.running_var.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = rm[ch];
      invstd[ch] = 1.0 / std::sqrt(rv[ch] + stats.eps);
    }
  }
  std::vector<double> xhat(x.size()), out(x.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (i * c + ch) * inner;
      for (std::size_t j = 0; j < inner; ++j) {
        xhat[off + j] = (x[off + j] - mean[ch]) * invstd[ch];
        out[off + j] = gam[ch] * xhat[off + j] + bet[ch];
      }
    }
  }
  Tensor result(input.shape(), std::move(out));
  finish(result, "batchnorm");
  if (g.tracks({&input, &scale, &shift})) {
    g.record("batchnorm", {input, scale, shift}, result,
             [=, xhat = std::move(xhat), invstd = std::move(invstd)]() mutable {
               const auto dy = result.grad();
               const auto gam = scale.data();
               std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
               for (std::size_t i = 0; i < n; ++i) {
                 for (std::size_t ch = 0; ch < c; ++ch) {
                   const std::size_t off = (i * c + ch) * inner;
                   for (std::size_t j = 0; j < inner; ++j) {
                     sum_dy[ch] += dy[off + j];
                     sum_dy_xhat[ch] += dy[off + j] * xhat[off + j];
                   }
                 }
               }
               if (scale.requires_grad()) {
                 auto ds = scale.grad_mut();
                 for (std::size_t ch = 0; ch < c; ++ch) ds[ch] += sum_dy_xhat[ch];
               }
               if (shift.requires_grad()) {
                 auto db = shift.grad_mut();
                 for (std::size_t ch = 0; ch < c; ++ch) db[ch] += sum_dy[ch];
               }
               if (!input.requires_grad()) return;
               auto dx = input.grad_mut();
               for (std::size_t i = 0; i < n; ++i) {
                 for (std::size_t ch = 0; ch < c; ++ch) {
                   const std::size_t off = (i * c + ch) * inner;
                   const double k = gam[ch] * invstd[ch];
                   for (std::size_t j = 0; j < inner; ++j) {
                     if (mode == Mode::kTrain) {
                       dx[off + j] += k * (dy[off + j] - sum_dy[ch] / count -
                                           xhat[off + j] * sum_dy_xhat[ch] / count);
                     } else {
                       dx[off + j] += k * dy[off + j];
                     }
                   }
                 }
               }
             });
  }
  return result;
}

Tensor activation(Graph& g, const Tensor& input, Activation kind) {
  const auto x = input.data();
  std::vector<double> out(x.size());
  switch (kind) {
    case Activation::kRelu:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
      break;
    case Activation::kSigmoid:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = stable_sigmoid(x[i]);
      break;
    case Activation::kTanh:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
      break;
  }
  Tensor result(input.shape(), std::move(out));
  finish(result, "activation");
  if (g.tracks({&input})) {
    g.record("activation", {input}, result, [input, result, kind]() mutable {
      const auto dy = result.grad();
      const auto y = result.data();
      const auto x = input.data();
      auto dx = input.grad_mut();
      for (std::size_t i = 0; i < dy.size(); ++i) {
        switch (kind) {
          case Activation::kRelu: dx[i] += x[i] > 0.0 ? dy[i] : 0.0; break;
          case Activation::kSigmoid: dx[i] += dy[i] * y[i] * (1.0 - y[i]); break;
          case Activation::kTanh: dx[i] += dy[i] * (1.0 - y[i] * y[i]); break;
        }
      }
    });
  }
  return result;
}

Tensor softmax(Graph& g, const Tensor& input, std::size_t axis) {
  const AxisSplit s = split_axis(input.shape(), axis);
  const auto x = input.data();
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mx = x[base];
      for (std::size_t k = 1; k < s.len; ++k) mx = std::max(mx, x[base + k * s.inner]);
      double denom = 0.0;
      for (std::size_t k = 0; k < s.len; ++k) {
        const double e = std::exp(x[base + k * s.inner] - mx);
        out[base + k * s.inner] = e;
        denom += e;
      }
      for (std::size_t k = 0; k < s.len; ++k) out[base + k * s.inner] /= denom;
    }
  }
  Tensor result(input.shape(), std::move(out));
  finish(result, "softmax");
  if (g.tracks({&input})) {
    g.record("softmax", {input}, result, [input, result, s]() mutable {
      const auto dy = result.grad();
      const auto y = result.data();
      auto dx = input.grad_mut();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
          const std::size_t base = o * s.len * s.inner + in;
          double dot = 0.0;
          for (std::size_t k = 0; k < s.len; ++k) dot += dy[base + k * s.inner] * y[base + k * s.inner];
          for (std::size_t k = 0; k < s.len; ++k) {
            const std::size_t i = base + k * s.inner;
            dx[i] += y[i] * (dy[i] - dot);
          }
        }
      }
    });
  }
  return result;
}

Tensor dropout(Graph& g, const Tensor& input, double rate, Mode mode, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ValidationError("dropout: rate must lie in [0, 1)");
  if (mode == Mode::kEval || rate == 0.0) return input;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto x = input.data();
  std::vector<double> mask(x.size()), out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = unit(rng) < rate ? 0.0 : keep_scale;
    out[i] = x[i] * mask[i];
  }
  Tensor result(input.shape(), std::move(out));
  finish(result, "dropout");
  if (g.tracks({&input})) {
    g.record("dropout", {input}, result, [input, result, mask = std::move(mask)]() mutable {
      const auto dy = result.grad();
      auto dx = input.grad_mut();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * mask[i];
    });
  }
  return result;
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  Tensor result(a.shape(), std::move(out));
  finish(result, "add");
  if (g.tracks({&a, &b})) {
    g.record("add", {a, b}, result, [a, b, result]() mutable {
      const auto dy = result.grad();
      if (a.requires_grad()) {
        auto da = a.grad_mut();
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
      }
      if (b.requires_grad()) {
        auto db = b.grad_mut();
        for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i];
      }
    });
  }
  return result;
}

Tensor sub(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  Tensor result(a.shape(), std::move(out));
  finish(result, "sub");
  if (g.tracks({&a, &b})) {
    g.record("sub", {a, b}, result, [a, b, result]() mutable {
      const auto dy = result.grad();
      if (a.requires_grad()) {
        auto da = a.grad_mut();
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
      }
      if (b.requires_grad()) {
        auto db = b.grad_mut();
        for (std::size_t i = 0; i < dy.size(); ++i) db[i] -= dy[i];
      }
    });
  }
  return result;
}

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  Tensor result(a.shape(), std::move(out));
  finish(result, "mul");
  if (g.tracks({&a, &b})) {
    g.record("mul", {a, b}, result, [a, b, result]() mutable {
      const auto dy = result.grad();
      // Read both operands before writing: a and b may alias.
      const auto x = a.data(), y = b.data();
      std::vector<double> da(dy.size()), db(dy.size());
      for (std::size_t i = 0; i < dy.size(); ++i) {
        da[i] = dy[i] * y[i];
        db[i] = dy[i] * x[i];
      }
      if (a.requires_grad()) {
        auto ga = a.grad_mut();
        for (std::size_t i = 0; i < dy.size(); ++i) ga[i] += da[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_mut();
        for (std::size_t i = 0; i < dy.size(); ++i) gb[i] += db[i];
      }
    });
  }
  return result;
}

Tensor scale(Graph& g, const Tensor& x, double factor) {
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * factor;
  Tensor result(x.shape(), std::move(out));
  finish(result, "scale");
  if (g.tracks({&x})) {
    g.record("scale", {x}, result, [x, result, factor]() mutable {
      const auto dy = result.grad();
      auto dx = x.grad_mut();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * factor;
    });
  }
  return result;
}

Tensor sum(Graph& g, const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor result = Tensor::scalar(s);
  finish(result, "sum");
  if (g.tracks({&x})) {
    g.record("sum", {x}, result, [x, result]() mutable {
      const double dy = result.grad()[0];
      for (double& d : x.grad_mut()) d += dy;
    });
  }
  return result;
}

Tensor square_sum(Graph& g, const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v * v;
  Tensor result = Tensor::scalar(s);
  finish(result, "square_sum");
  if (g.tracks({&x})) {
    g.record("square_sum", {x}, result, [x, result]() mutable {
      const double dy = result.grad()[0];
      const auto v = x.data();
      auto dx = x.grad_mut();
      for (std::size_t i = 0; i < v.size(); ++i) dx[i] += 2.0 * v[i] * dy;
    });
  }
  return result;
}

namespace {

Tensor reduce_axis(Graph& g, const Tensor& x, std::size_t axis, double factor, const char* name) {
  const AxisSplit s = split_axis(x.shape(), axis);
  Shape out_shape;
  for (std::size_t i = 0; i < x.rank(); ++i) {
    if (i != axis) out_shape.push_back(x.dim(i));
  }
  const auto v = x.data();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t k = 0; k < s.len; ++k) {
      const double* src = v.data() + (o * s.len + k) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t in = 0; in < s.inner; ++in) dst[in] += src[in];
    }
  }
  for (double& d : out) d *= factor;
  Tensor result(std::move(out_shape), std::move(out));
  finish(result, name);
  if (g.tracks({&x})) {
    g.record(name, {x}, result, [x, result, s, factor]() mutable {
      const auto dy = result.grad();
      auto dx = x.grad_mut();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t k = 0; k < s.len; ++k) {
          double* dst = dx.data() + (o * s.len + k) * s.inner;
          const double* src = dy.data() + o * s.inner;
          for (std::size_t in = 0; in < s.inner; ++in) dst[in] += src[in] * factor;
        }
      }
    });
  }
  return result;
}

}  // namespace

Tensor sum_axis(Graph& g, const Tensor& x, std::size_t axis) {
  return reduce_axis(g, x, axis, 1.0, "sum_axis");
}

Tensor mean_axis(Graph& g, const Tensor& x, std::size_t axis) {
  return reduce_axis(g, x, axis, 1.0 / static_cast<double>(split_axis(x.shape(), axis).len), "mean_axis");
}

Tensor reshape(Graph& g, const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  const auto v = x.data();
  Tensor result(std::move(shape), std::vector<double>(v.begin(), v.end()));
  if (g.tracks({&x})) {
    g.record("reshape", {x}, result, [x, result]() mutable {
      const auto dy = result.grad();
      auto dx = x.grad_mut();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
    });
  }
  return result;
}

Tensor swap_last_axes(Graph& g, const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("swap_last_axes: rank must be at least 2");
  Shape shape = x.shape();
  const std::size_t a = shape[shape.size() - 2], b = shape[shape.size() - 1];
  const std::size_t batch = x.numel() / (a * b);
  std::swap(shape[shape.size() - 2], shape[shape.size() - 1]);
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t n = 0; n < batch; ++n) {
    const double* src = v.data() + n * a * b;
    double* dst = out.data() + n * a * b;
    for (std::size_t i = 0; i < a; ++i) {
      for (std::size_t j = 0; j < b; ++j) dst[j * a + i] = src[i * b + j];
    }
  }
  Tensor result(std::move(shape), std::move(out));
  if (g.tracks({&x})) {
    g.record("swap_last_axes", {x}, result, [x, result, a, b, batch]() mutable {
      const auto dy = result.grad();
      auto dx = x.grad_mut();
      for (std::size_t n = 0; n < batch; ++n) {
        const double* src = dy.data() + n * a * b;
        double* dst = dx.data() + n * a * b;
        for (std::size_t i = 0; i < a; ++i) {
          for (std::size_t j = 0; j < b; ++j) dst[i * b + j] += src[j * a + i];
        }
      }
    });
  }
  return result;
}

Tensor concat_last(Graph& g, const Tensor& a, const Tensor& b) {
  if (a.rank() == 0 || a.rank() != b.rank()) throw ShapeError("concat_last: rank mismatch");
  for (std::size_t i = 0; i + 1 < a.rank(); ++i) {
    if (a.dim(i) != b.dim(i)) {
      throw ShapeError("concat_last: leading dims differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
  }
  const std::size_t da = a.shape().back(), db = b.shape().back();
  const std::size_t rows = a.numel() / da;
  Shape shape = a.shape();
  shape.back() = da + db;
  const auto x = a.data(), y = b.data();
  std::vector<double> out(rows * (da + db));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.data() + r * da, da, out.data() + r * (da + db));
    std::copy_n(y.data() + r * db, db, out.data() + r * (da + db) + da);
  }
  Tensor result(std::move(shape), std::move(out));
  if (g.tracks({&a, &b})) {
    g.record("concat_last", {a, b}, result, [a, b, result, rows, da, db]() mutable {
      const auto dy = result.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_mut();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < da; ++j) ga[r * da + j] += dy[r * (da + db) + j];
        }
      }
      if (b.requires_grad()) {
        auto gb = b.grad_mut();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < db; ++j) gb[r * db + j] += dy[r * (da + db) + da + j];
        }
      }
    });
  }
  return result;
}

Tensor stop_gradient(const Tensor& x) { return x.clone(); }

Tensor zscore_columns(Graph& g, const Tensor& x, double eps) {
  require_rank(x, 2, "zscore_columns");
  const std::size_t n = x.dim(0), d = x.dim(1);
  const auto v = x.data();
  std::vector<double> centered(v.size()), sigma(d), out(v.size());
  for (std::size_t j = 0; j < d; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += v[i * d + j];
    const double mu = s / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      centered[i * d + j] = v[i * d + j] - mu;
      ss += centered[i * d + j] * centered[i * d + j];
    }
    sigma[j] = std::sqrt(ss / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) out[i * d + j] = centered[i * d + j] / std::max(sigma[j], eps);
  }
  Tensor result(x.shape(), std::move(out));
  finish(result, "zscore_columns");
  if (g.tracks({&x})) {
    g.record("zscore_columns", {x}, result,
             [=, centered = std::move(centered), sigma = std::move(sigma)]() mutable {
               const auto dy = result.grad();
               auto dx = x.grad_mut();
               const double nn = static_cast<double>(n);
               for (std::size_t j = 0; j < d; ++j) {
                 const bool guarded = sigma[j] <= eps;
                 const double s = guarded ? eps : sigma[j];
                 double mean_g = 0.0, gc = 0.0;
                 for (std::size_t i = 0; i < n; ++i) {
                   mean_g += dy[i * d + j];
                   gc += dy[i * d + j] * centered[i * d + j];
                 }
                 mean_g /= nn;
                 const double k = guarded ? 0.0 : gc / (nn * s * s * s);
                 for (std::size_t i = 0; i < n; ++i) {
                   dx[i * d + j] += (dy[i * d + j] - mean_g) / s - k * centered[i * d + j];
                 }
               }
             });
  }
  return result;
}

Tensor kl_rows(Graph& g, const Tensor& p, const Tensor& q, double eps) {
  require_rank(p, 2, "kl_rows");
  require_same_shape(p, q, "kl_rows");
  const std::size_t n = p.dim(0), d = p.dim(1);
  const auto pv = p.data(), qv = q.data();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double a = pv[i * d + j], b = qv[i * d + j];
      s += a * (std::log(std::max(a, eps)) - std::log(std::max(b, eps)));
    }
    out[i] = s;
  }
  Tensor result(Shape{n}, std::move(out));
  finish(result, "kl_rows");
  if (g.tracks({&p, &q})) {
    g.record("kl_rows", {p, q}, result, [=]() mutable {
      const auto dy = result.grad();
      const auto pv = p.data(), qv = q.data();
      std::vector<double> dp(pv.size()), dq(pv.size());
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          const std::size_t k = i * d + j;
          const double a = pv[k], b = qv[k];
          dp[k] = dy[i] * (std::log(std::max(a, eps)) - std::log(std::max(b, eps)) + (a > eps ? 1.0 : 0.0));
          dq[k] = b > eps ? -dy[i] * a / b : 0.0;
        }
      }
      if (p.requires_grad()) {
        auto gp = p.grad_mut();
        for (std::size_t k = 0; k < dp.size(); ++k) gp[k] += dp[k];
      }
      if (q.requires_grad()) {
        auto gq = q.grad_mut();
        for (std::size_t k = 0; k < dq.size(); ++k) gq[k] += dq[k];
      }
    });
  }
  return result;
}

Tensor nll(Graph& g, const Tensor& probs, std::span<const int> labels, double eps) {
  require_rank(probs, 2, "nll");
  const std::size_t n = probs.dim(0), c = probs.dim(1);
  if (labels.size() != n) throw ShapeError("nll: label count does not match batch size");
  std::vector<int> y(labels.begin(), labels.end());
  for (int l : y) {
    if (l < 0 || static_cast<std::size_t>(l) >= c) {
      throw ValidationError("nll: label " + std::to_string(l) + " out of range [0, " + std::to_string(c) + ")");
    }
  }
  const auto p = probs.data();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::log(std::max(p[i * c + static_cast<std::size_t>(y[i])], eps));
  Tensor result = Tensor::scalar(-s / static_cast<double>(n));
  finish(result, "nll");
  if (g.tracks({&probs})) {
    g.record("nll", {probs}, result, [probs, result, y = std::move(y), n, c, eps]() mutable {
      const double dy = result.grad()[0];
      const auto p = probs.data();
      auto dp = probs.grad_mut();
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = i * c + static_cast<std::size_t>(y[i]);
        if (p[k] > eps) dp[k] += -dy / (static_cast<double>(n) * p[k]);
      }
    });
  }
  return result;
}

}  // namespace dsnet::ops
