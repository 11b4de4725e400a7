#include "msff/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace msff {

namespace {

void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

template <typename T>
std::vector<T>& col_scratch() {
  static thread_local std::vector<T> buf;
  return buf;
}

// Unrolled patch matrix for output rows [oy0, oy1): K = Ci*k*k rows by
// (oy1-oy0)*Wout columns, zero-filled where the window leaves the input.
template <typename T>
void im2col_block(const T* x, int ci_count, int h, int w, int k, int stride, int pad,
                  int wout, int oy0, int oy1, T* col) {
  const std::int64_t block_n = static_cast<std::int64_t>(oy1 - oy0) * wout;
  for (int ci = 0; ci < ci_count; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col + ((static_cast<std::int64_t>(ci) * k + ky) * k + kx) * block_n;
        for (int oy = oy0; oy < oy1; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wout, T(0));
            dst += wout;
            continue;
          }
          const T* xrow = x + (static_cast<std::int64_t>(ci) * h + iy) * w;
          for (int ox = 0; ox < wout; ++ox) {
            const int ix = ox * stride - pad + kx;
            *dst++ = (ix >= 0 && ix < w) ? xrow[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_block_add(const T* col, int ci_count, int h, int w, int k, int stride, int pad,
                      int wout, int oy0, int oy1, T* gx) {
  const std::int64_t block_n = static_cast<std::int64_t>(oy1 - oy0) * wout;
  for (int ci = 0; ci < ci_count; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = col + ((static_cast<std::int64_t>(ci) * k + ky) * k + kx) * block_n;
        for (int oy = oy0; oy < oy1; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) {
            src += wout;
            continue;
          }
          T* grow = gx + (static_cast<std::int64_t>(ci) * h + iy) * w;
          for (int ox = 0; ox < wout; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) grow[ix] += src[ox];
          }
          src += wout;
        }
      }
    }
  }
}

int conv_block_rows(std::int64_t K, int wout, int hout, std::size_t elem_size) {
  constexpr std::int64_t kBudgetBytes = std::int64_t(48) << 20;
  std::int64_t rows = kBudgetBytes / std::max<std::int64_t>(1, K * wout * static_cast<std::int64_t>(elem_size));
  return static_cast<int>(std::clamp<std::int64_t>(rows, 1, hout));
}

template <typename T>
void conv2d_forward(const TensorImpl& x, const TensorImpl& w, const TensorImpl& b,
                    int stride, int pad, TensorImpl& out) {
  const int n = x.shape.n, ci = x.shape.c, h = x.shape.h, wid = x.shape.w;
  const int co = w.shape.n, k = w.shape.h;
  const int hout = out.shape.h, wout = out.shape.w;
  const std::int64_t kdim = static_cast<std::int64_t>(ci) * k * k;
  const std::int64_t out_hw = static_cast<std::int64_t>(hout) * wout;
  const int block = conv_block_rows(kdim, wout, hout, sizeof(T));

  auto& col = col_scratch<T>();
  col.resize(static_cast<std::size_t>(kdim) * block * wout);

  const T* xp = x.ptr<T>();
  const T* wp = w.ptr<T>();
  const T* bp = b.ptr<T>();
  T* op = out.ptr<T>();

  for (int s = 0; s < n; ++s) {
    const T* xs = xp + static_cast<std::int64_t>(s) * ci * h * wid;
    T* os = op + static_cast<std::int64_t>(s) * co * out_hw;
    for (int oy0 = 0; oy0 < hout; oy0 += block) {
      const int oy1 = std::min(oy0 + block, hout);
      const int block_n = (oy1 - oy0) * wout;
      im2col_block(xs, ci, h, wid, k, stride, pad, wout, oy0, oy1, col.data());
      gemm(CblasNoTrans, CblasNoTrans, co, block_n, static_cast<int>(kdim), T(1), wp,
           static_cast<int>(kdim), col.data(), block_n, T(0),
           os + static_cast<std::int64_t>(oy0) * wout, static_cast<int>(out_hw));
    }
    for (int oc = 0; oc < co; ++oc) {
      T* row = os + oc * out_hw;
      const T bias = bp[oc];
      for (std::int64_t i = 0; i < out_hw; ++i) row[i] += bias;
    }
  }
}

template <typename T>
void conv2d_backward(const TensorImpl& x, const TensorImpl& w, const TensorImpl& b,
                     int stride, int pad, const TensorImpl& out) {
  const int n = x.shape.n, ci = x.shape.c, h = x.shape.h, wid = x.shape.w;
  const int co = w.shape.n, k = w.shape.h;
  const int hout = out.shape.h, wout = out.shape.w;
  const std::int64_t kdim = static_cast<std::int64_t>(ci) * k * k;
  const std::int64_t out_hw = static_cast<std::int64_t>(hout) * wout;
  const int block = conv_block_rows(kdim, wout, hout, sizeof(T));

  const T* go = grad_ptr<T>(out);
  const T* xp = x.ptr<T>();
  const T* wp = w.ptr<T>();

  T* gb = b.requires_grad ? ensure_grad<T>(const_cast<TensorImpl&>(b)) : nullptr;
  T* gw = w.requires_grad ? ensure_grad<T>(const_cast<TensorImpl&>(w)) : nullptr;
  T* gx = x.requires_grad ? ensure_grad<T>(const_cast<TensorImpl&>(x)) : nullptr;

  if (gb) {
    for (int s = 0; s < n; ++s) {
      const T* gos = go + static_cast<std::int64_t>(s) * co * out_hw;
      for (int oc = 0; oc < co; ++oc) {
        T acc = T(0);
        const T* row = gos + oc * out_hw;
        for (std::int64_t i = 0; i < out_hw; ++i) acc += row[i];
        gb[oc] += acc;
      }
    }
  }

  if (!gw && !gx) return;

  auto& col = col_scratch<T>();
  col.resize(static_cast<std::size_t>(kdim) * block * wout);
  std::vector<T> colg;
  if (gx) colg.resize(static_cast<std::size_t>(kdim) * block * wout);

  for (int s = 0; s < n; ++s) {
    const T* xs = xp + static_cast<std::int64_t>(s) * ci * h * wid;
    const T* gos = go + static_cast<std::int64_t>(s) * co * out_hw;
    for (int oy0 = 0; oy0 < hout; oy0 += block) {
      const int oy1 = std::min(oy0 + block, hout);
      const int block_n = (oy1 - oy0) * wout;
      const T* go_block = gos + static_cast<std::int64_t>(oy0) * wout;
      if (gw) {
        im2col_block(xs, ci, h, wid, k, stride, pad, wout, oy0, oy1, col.data());
        gemm(CblasNoTrans, CblasTrans, co, static_cast<int>(kdim), block_n, T(1), go_block,
             static_cast<int>(out_hw), col.data(), block_n, T(1), gw, static_cast<int>(kdim));
      }
      if (gx) {
        gemm(CblasTrans, CblasNoTrans, static_cast<int>(kdim), block_n, co, T(1), wp,
             static_cast<int>(kdim), go_block, static_cast<int>(out_hw), T(0), colg.data(),
             block_n);
        col2im_block_add(colg.data(), ci, h, wid, k, stride, pad, wout, oy0, oy1,
                         gx + static_cast<std::int64_t>(s) * ci * h * wid);
      }
    }
  }
}

void check_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype())
    throw std::runtime_error(std::string(op) + ": mixed dtypes " + dtype_name(a.dtype()) +
                             " vs " + dtype_name(b.dtype()));
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  check_same_dtype(input, weight, "conv2d");
  check_same_dtype(input, bias, "conv2d");
  if (ws.h != ws.w) throw ShapeError("conv2d: non-square kernel " + ws.str());
  if (xs.c != ws.c)
    throw ShapeError("conv2d: input channels mismatch, input " + xs.str() + " vs weight " +
                     ws.str());
  if (bias.shape() != Shape{1, ws.n, 1, 1})
    throw ShapeError("conv2d: bias must be 1x" + std::to_string(ws.n) + "x1x1, got " +
                     bias.shape().str());
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: bad stride/padding");
  const int k = ws.h;
  const int hout = (xs.h + 2 * padding - k) / stride + 1;
  const int wout = (xs.w + 2 * padding - k) / stride + 1;
  if (hout < 1 || wout < 1)
    throw ShapeError("conv2d: empty output for input " + xs.str() + ", kernel " + ws.str());

  Tensor out = Tensor::zeros({xs.n, ws.n, hout, wout}, input.dtype());
  dispatch_dtype(input.dtype(), [&](auto tag) {
    using T = decltype(tag);
    conv2d_forward<T>(*input.impl(), *weight.impl(), *bias.impl(), stride, padding,
                      *out.impl());
  });

  if (autograd::should_record({input, weight, bias})) {
    autograd::record("conv2d", {input, weight, bias}, out,
                     [xi = input.impl(), wi = weight.impl(), bi = bias.impl(),
                      oi = out.impl(), stride, padding] {
                       dispatch_dtype(xi->dtype, [&](auto tag) {
                         using T = decltype(tag);
                         conv2d_backward<T>(*xi, *wi, *bi, stride, padding, *oi);
                       });
                     });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xp = x.data<T>();
    T* op = out.data<T>();
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) op[i] = xp[i] > T(0) ? xp[i] : T(0);
  });
  if (autograd::should_record({x})) {
    autograd::record("relu", {x}, out, [xi = x.impl(), oi = out.impl()] {
      dispatch_dtype(xi->dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* go = grad_ptr<T>(*oi);
        const T* xp = xi->ptr<T>();
        T* gx = ensure_grad<T>(*xi);
        const std::int64_t n = xi->shape.numel();
        for (std::int64_t i = 0; i < n; ++i)
          if (xp[i] > T(0)) gx[i] += go[i];
      });
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xp = x.data<T>();
    T* op = out.data<T>();
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) op[i] = T(1) / (T(1) + std::exp(-xp[i]));
  });
  if (autograd::should_record({x})) {
    autograd::record("sigmoid", {x}, out, [xi = x.impl(), oi = out.impl()] {
      dispatch_dtype(xi->dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* go = grad_ptr<T>(*oi);
        const T* op = oi->ptr<T>();
        T* gx = ensure_grad<T>(*xi);
        const std::int64_t n = xi->shape.numel();
        for (std::int64_t i = 0; i < n; ++i) gx[i] += go[i] * op[i] * (T(1) - op[i]);
      });
    });
  }
  return out;
}

namespace {

template <typename T>
void upsample_forward(const TensorImpl& x, int factor, TensorImpl& out) {
  const int n = x.shape.n, c = x.shape.c, h = x.shape.h, w = x.shape.w;
  const int ho = out.shape.h, wo = out.shape.w;
  const T* xp = x.ptr<T>();
  T* op = out.ptr<T>();
  const T inv = T(1) / static_cast<T>(factor);
  for (int s = 0; s < n; ++s) {
    for (int ch = 0; ch < c; ++ch) {
      const T* xc = xp + (static_cast<std::int64_t>(s) * c + ch) * h * w;
      T* oc = op + (static_cast<std::int64_t>(s) * c + ch) * ho * wo;
      for (int oy = 0; oy < ho; ++oy) {
        const T iy = (static_cast<T>(oy) + T(0.5)) * inv - T(0.5);
        const int y0 = static_cast<int>(std::floor(iy));
        const T wy = iy - static_cast<T>(y0);
        const int y0c = std::clamp(y0, 0, h - 1);
        const int y1c = std::clamp(y0 + 1, 0, h - 1);
        for (int ox = 0; ox < wo; ++ox) {
          const T ix = (static_cast<T>(ox) + T(0.5)) * inv - T(0.5);
          const int x0 = static_cast<int>(std::floor(ix));
          const T wx = ix - static_cast<T>(x0);
          const int x0c = std::clamp(x0, 0, w - 1);
          const int x1c = std::clamp(x0 + 1, 0, w - 1);
          const T top = (T(1) - wx) * xc[y0c * w + x0c] + wx * xc[y0c * w + x1c];
          const T bot = (T(1) - wx) * xc[y1c * w + x0c] + wx * xc[y1c * w + x1c];
          oc[static_cast<std::int64_t>(oy) * wo + ox] = (T(1) - wy) * top + wy * bot;
        }
      }
    }
  }
}

template <typename T>
void upsample_backward(TensorImpl& x, int factor, const TensorImpl& out) {
  const int n = x.shape.n, c = x.shape.c, h = x.shape.h, w = x.shape.w;
  const int ho = out.shape.h, wo = out.shape.w;
  const T* go = grad_ptr<T>(out);
  T* gx = ensure_grad<T>(x);
  const T inv = T(1) / static_cast<T>(factor);
  for (int s = 0; s < n; ++s) {
    for (int ch = 0; ch < c; ++ch) {
      T* gc = gx + (static_cast<std::int64_t>(s) * c + ch) * h * w;
      const T* oc = go + (static_cast<std::int64_t>(s) * c + ch) * ho * wo;
      for (int oy = 0; oy < ho; ++oy) {
        const T iy = (static_cast<T>(oy) + T(0.5)) * inv - T(0.5);
        const int y0 = static_cast<int>(std::floor(iy));
        const T wy = iy - static_cast<T>(y0);
        const int y0c = std::clamp(y0, 0, h - 1);
        const int y1c = std::clamp(y0 + 1, 0, h - 1);
        for (int ox = 0; ox < wo; ++ox) {
          const T ix = (static_cast<T>(ox) + T(0.5)) * inv - T(0.5);
          const int x0 = static_cast<int>(std::floor(ix));
          const T wx = ix - static_cast<T>(x0);
          const int x0c = std::clamp(x0, 0, w - 1);
          const int x1c = std::clamp(x0 + 1, 0, w - 1);
          const T g = oc[static_cast<std::int64_t>(oy) * wo + ox];
          gc[y0c * w + x0c] += g * (T(1) - wy) * (T(1) - wx);
          gc[y0c * w + x1c] += g * (T(1) - wy) * wx;
          gc[y1c * w + x0c] += g * wy * (T(1) - wx);
          gc[y1c * w + x1c] += g * wy * wx;
        }
      }
    }
  }
}

}  // namespace

Tensor bilinear_upsample(const Tensor& x, int factor) {
  if (factor < 2) throw ShapeError("bilinear_upsample: factor must be >= 2");
  const Shape& s = x.shape();
  Tensor out = Tensor::zeros({s.n, s.c, s.h * factor, s.w * factor}, x.dtype());
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    upsample_forward<T>(*x.impl(), factor, *out.impl());
  });
  if (autograd::should_record({x})) {
    autograd::record("bilinear_upsample", {x}, out, [xi = x.impl(), oi = out.impl(), factor] {
      dispatch_dtype(xi->dtype, [&](auto tag) {
        using T = decltype(tag);
        upsample_backward<T>(*xi, factor, *oi);
      });
    });
  }
  return out;
}

namespace {

template <typename T>
void warp_forward(const TensorImpl& feat, const TensorImpl& flow, TensorImpl& out) {
  const int n = feat.shape.n, c = feat.shape.c, h = feat.shape.h, w = feat.shape.w;
  const T* fp = feat.ptr<T>();
  const T* lp = flow.ptr<T>();
  T* op = out.ptr<T>();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (int s = 0; s < n; ++s) {
    const T* fx = lp + static_cast<std::int64_t>(s) * 2 * hw;
    const T* fy = fx + hw;
    for (int oy = 0; oy < h; ++oy) {
      for (int ox = 0; ox < w; ++ox) {
        const std::int64_t p = static_cast<std::int64_t>(oy) * w + ox;
        const T sx = std::clamp(static_cast<T>(ox) + fx[p], T(0), static_cast<T>(w - 1));
        const T sy = std::clamp(static_cast<T>(oy) + fy[p], T(0), static_cast<T>(h - 1));
        const int x0 = static_cast<int>(std::floor(sx));
        const int y0 = static_cast<int>(std::floor(sy));
        const int x1 = std::min(x0 + 1, w - 1);
        const int y1 = std::min(y0 + 1, h - 1);
        const T wx = sx - static_cast<T>(x0);
        const T wy = sy - static_cast<T>(y0);
        for (int ch = 0; ch < c; ++ch) {
          const T* fc = fp + (static_cast<std::int64_t>(s) * c + ch) * hw;
          const T top = (T(1) - wx) * fc[y0 * w + x0] + wx * fc[y0 * w + x1];
          const T bot = (T(1) - wx) * fc[y1 * w + x0] + wx * fc[y1 * w + x1];
          op[(static_cast<std::int64_t>(s) * c + ch) * hw + p] = (T(1) - wy) * top + wy * bot;
        }
      }
    }
  }
}

template <typename T>
void warp_backward(TensorImpl& feat, TensorImpl& flow, const TensorImpl& out) {
  const int n = feat.shape.n, c = feat.shape.c, h = feat.shape.h, w = feat.shape.w;
  const T* fp = feat.ptr<T>();
  const T* lp = flow.ptr<T>();
  const T* go = grad_ptr<T>(out);
  T* gfeat = feat.requires_grad ? ensure_grad<T>(feat) : nullptr;
  T* gflow = flow.requires_grad ? ensure_grad<T>(flow) : nullptr;
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (int s = 0; s < n; ++s) {
    const T* fx = lp + static_cast<std::int64_t>(s) * 2 * hw;
    const T* fy = fx + hw;
    T* gfx = gflow ? gflow + static_cast<std::int64_t>(s) * 2 * hw : nullptr;
    T* gfy = gfx ? gfx + hw : nullptr;
    for (int oy = 0; oy < h; ++oy) {
      for (int ox = 0; ox < w; ++ox) {
        const std::int64_t p = static_cast<std::int64_t>(oy) * w + ox;
        const T px = static_cast<T>(ox) + fx[p];
        const T py = static_cast<T>(oy) + fy[p];
        const T sx = std::clamp(px, T(0), static_cast<T>(w - 1));
        const T sy = std::clamp(py, T(0), static_cast<T>(h - 1));
        const int x0 = static_cast<int>(std::floor(sx));
        const int y0 = static_cast<int>(std::floor(sy));
        const int x1 = std::min(x0 + 1, w - 1);
        const int y1 = std::min(y0 + 1, h - 1);
        const T wx = sx - static_cast<T>(x0);
        const T wy = sy - static_cast<T>(y0);
        // Right-continuous derivative of the clamp: zero once the sample
        // position reaches the far border.
        const bool in_x = px >= T(0) && px < static_cast<T>(w - 1);
        const bool in_y = py >= T(0) && py < static_cast<T>(h - 1);
        T acc_x = T(0), acc_y = T(0);
        for (int ch = 0; ch < c; ++ch) {
          const std::int64_t base = (static_cast<std::int64_t>(s) * c + ch) * hw;
          const T g = go[base + p];
          const T* fc = fp + base;
          const T v00 = fc[y0 * w + x0], v01 = fc[y0 * w + x1];
          const T v10 = fc[y1 * w + x0], v11 = fc[y1 * w + x1];
          if (gfeat) {
            T* gc = gfeat + base;
            gc[y0 * w + x0] += g * (T(1) - wy) * (T(1) - wx);
            gc[y0 * w + x1] += g * (T(1) - wy) * wx;
            gc[y1 * w + x0] += g * wy * (T(1) - wx);
            gc[y1 * w + x1] += g * wy * wx;
          }
          if (gflow) {
            acc_x += g * ((T(1) - wy) * (v01 - v00) + wy * (v11 - v10));
            acc_y += g * ((T(1) - wx) * (v10 - v00) + wx * (v11 - v01));
          }
        }
        if (gflow) {
          if (in_x) gfx[p] += acc_x;
          if (in_y) gfy[p] += acc_y;
        }
      }
    }
  }
}

}  // namespace

Tensor warp_bilinear(const Tensor& feat, const Tensor& flow) {
  const Shape& fs = feat.shape();
  const Shape& ls = flow.shape();
  check_same_dtype(feat, flow, "warp_bilinear");
  if (ls.c != 2 || ls.n != fs.n || ls.h != fs.h || ls.w != fs.w)
    throw ShapeError("warp_bilinear: flow must be " + std::to_string(fs.n) + "x2x" +
                     std::to_string(fs.h) + "x" + std::to_string(fs.w) + ", got " + ls.str());
  Tensor out = Tensor::zeros(fs, feat.dtype());
  dispatch_dtype(feat.dtype(), [&](auto tag) {
    using T = decltype(tag);
    warp_forward<T>(*feat.impl(), *flow.impl(), *out.impl());
  });
  if (autograd::should_record({feat, flow})) {
    autograd::record("warp_bilinear", {feat, flow}, out,
                     [fi = feat.impl(), li = flow.impl(), oi = out.impl()] {
                       dispatch_dtype(fi->dtype, [&](auto tag) {
                         using T = decltype(tag);
                         warp_backward<T>(*fi, *li, *oi);
                       });
                     });
  }
  return out;
}

Tensor concat_channels(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: empty input list");
  const Shape& first = xs[0].shape();
  int total_c = 0;
  for (const Tensor& t : xs) {
    check_same_dtype(xs[0], t, "concat_channels");
    const Shape& s = t.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w)
      throw ShapeError("concat_channels: spatial mismatch " + first.str() + " vs " + s.str());
    total_c += s.c;
  }
  Tensor out = Tensor::zeros({first.n, total_c, first.h, first.w}, xs[0].dtype());
  dispatch_dtype(out.dtype(), [&](auto tag) {
    using T = decltype(tag);
    T* op = out.data<T>();
    const std::int64_t hw = static_cast<std::int64_t>(first.h) * first.w;
    for (int s = 0; s < first.n; ++s) {
      std::int64_t coff = 0;
      for (const Tensor& t : xs) {
        const int tc = t.shape().c;
        const T* tp = t.data<T>() + static_cast<std::int64_t>(s) * tc * hw;
        std::copy(tp, tp + static_cast<std::int64_t>(tc) * hw,
                  op + (static_cast<std::int64_t>(s) * total_c + coff) * hw);
        coff += tc;
      }
    }
  });
  if (autograd::should_record(xs)) {
    std::vector<std::shared_ptr<TensorImpl>> impls;
    impls.reserve(xs.size());
    for (const Tensor& t : xs) impls.push_back(t.impl());
    autograd::record("concat_channels", xs, out, [impls, oi = out.impl()] {
      dispatch_dtype(oi->dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* go = grad_ptr<T>(*oi);
        const int n = oi->shape.n, total_c = oi->shape.c;
        const std::int64_t hw = static_cast<std::int64_t>(oi->shape.h) * oi->shape.w;
        for (int s = 0; s < n; ++s) {
          std::int64_t coff = 0;
          for (const auto& impl : impls) {
            const int tc = impl->shape.c;
            if (impl->requires_grad) {
              T* g = ensure_grad<T>(*impl) + static_cast<std::int64_t>(s) * tc * hw;
              const T* src = go + (static_cast<std::int64_t>(s) * total_c + coff) * hw;
              for (std::int64_t i = 0; i < static_cast<std::int64_t>(tc) * hw; ++i)
                g[i] += src[i];
            }
            coff += tc;
          }
        }
      });
    });
  }
  return out;
}

Tensor slice_channels(const Tensor& x, int c0, int c1) {
  const Shape& s = x.shape();
  if (c0 < 0 || c1 > s.c || c0 >= c1)
    throw ShapeError("slice_channels: range [" + std::to_string(c0) + ", " +
                     std::to_string(c1) + ") out of bounds for " + s.str());
  Tensor out = Tensor::zeros({s.n, c1 - c0, s.h, s.w}, x.dtype());
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xp = x.data<T>();
    T* op = out.data<T>();
    const std::int64_t hw = static_cast<std::int64_t>(s.h) * s.w;
    const int oc = c1 - c0;
    for (int b = 0; b < s.n; ++b)
      std::copy(xp + (static_cast<std::int64_t>(b) * s.c + c0) * hw,
                xp + (static_cast<std::int64_t>(b) * s.c + c1) * hw,
                op + static_cast<std::int64_t>(b) * oc * hw);
  });
  if (autograd::should_record({x})) {
    autograd::record("slice_channels", {x}, out, [xi = x.impl(), oi = out.impl(), c0] {
      dispatch_dtype(xi->dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* go = grad_ptr<T>(*oi);
        T* gx = ensure_grad<T>(*xi);
        const Shape& s = xi->shape;
        const int oc = oi->shape.c;
        const std::int64_t hw = static_cast<std::int64_t>(s.h) * s.w;
        for (int b = 0; b < s.n; ++b) {
          T* dst = gx + (static_cast<std::int64_t>(b) * s.c + c0) * hw;
          const T* src = go + static_cast<std::int64_t>(b) * oc * hw;
          for (std::int64_t i = 0; i < static_cast<std::int64_t>(oc) * hw; ++i)
            dst[i] += src[i];
        }
      });
    });
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  const Shape& s = x.shape();
  Tensor out = Tensor::zeros({s.n, s.c, 1, 1}, x.dtype());
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xp = x.data<T>();
    T* op = out.data<T>();
    const std::int64_t hw = static_cast<std::int64_t>(s.h) * s.w;
    for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(s.n) * s.c; ++nc) {
      T acc = T(0);
      const T* p = xp + nc * hw;
      for (std::int64_t i = 0; i < hw; ++i) acc += p[i];
      op[nc] = acc / static_cast<T>(hw);
    }
  });
  if (autograd::should_record({x})) {
    autograd::record("global_avg_pool", {x}, out, [xi = x.impl(), oi = out.impl()] {
      dispatch_dtype(xi->dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* go = grad_ptr<T>(*oi);
        T* gx = ensure_grad<T>(*xi);
        const Shape& s = xi->shape;
        const std::int64_t hw = static_cast<std::int64_t>(s.h) * s.w;
        for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(s.n) * s.c; ++nc) {
          const T g = go[nc] / static_cast<T>(hw);
          T* p = gx + nc * hw;
          for (std::int64_t i = 0; i < hw; ++i) p[i] += g;
        }
      });
    });
  }
  return out;
}

namespace {

enum class Broadcast { none, per_channel };

Broadcast binary_broadcast(const Shape& a, const Shape& b, const char* op, bool allow_bcast) {
  if (a == b) return Broadcast::none;
  if (allow_bcast && b.n == a.n && b.c == a.c && b.h == 1 && b.w == 1)
    return Broadcast::per_channel;
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.str() + " vs " + b.str());
}

// y broadcast as N x C x 1 x 1 when bc == per_channel.
template <typename T, typename FwdFn>
void binary_forward(const TensorImpl& x, const TensorImpl& y, Broadcast bc, TensorImpl& out,
                    FwdFn fn) {
  const T* xp = x.ptr<T>();
  const T* yp = y.ptr<T>();
  T* op = out.ptr<T>();
  const std::int64_t hw = static_cast<std::int64_t>(x.shape.h) * x.shape.w;
  const std::int64_t n = x.shape.numel();
  if (bc == Broadcast::none) {
    for (std::int64_t i = 0; i < n; ++i) op[i] = fn(xp[i], yp[i]);
  } else {
    for (std::int64_t i = 0; i < n; ++i) op[i] = fn(xp[i], yp[i / hw]);
  }
}

}  // namespace

Tensor add(const Tensor& x, const Tensor& y) {
  check_same_dtype(x, y, "add");
  const Broadcast bc = binary_broadcast(x.shape(), y.shape(), "add", true);
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    binary_forward<T>(*x.impl(), *y.impl(), bc, *out.impl(),
                      [](T a, T b) { return a + b; });
  });
  if (autograd::should_record({x, y})) {
    autograd::record("add", {x, y}, out, [xi = x.impl(), yi = y.impl(), oi = out.impl(), bc] {
      dispatch_dtype(xi->dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* go = grad_ptr<T>(*oi);
        const std::int64_t n = oi->shape.numel();
        const std::int64_t hw = static_cast<std::int64_t>(xi->shape.h) * xi->shape.w;
        if (xi->requires_grad) {
          T* gx = ensure_grad<T>(*xi);
          for (std::int64_t i = 0; i < n; ++i) gx[i] += go[i];
        }
        if (yi->requires_grad) {
          T* gy = ensure_grad<T>(*yi);
          if (bc == Broadcast::none) {
            for (std::int64_t i = 0; i < n; ++i) gy[i] += go[i];
          } else {
            for (std::int64_t i = 0; i < n; ++i) gy[i / hw] += go[i];
          }
        }
      });
    });
  }
  return out;
}

Tensor sub(const Tensor& x, const Tensor& y) {
  check_same_dtype(x, y, "sub");
  binary_broadcast(x.shape(), y.shape(), "sub", false);
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    binary_forward<T>(*x.impl(), *y.impl(), Broadcast::none, *out.impl(),
                      [](T a, T b) { return a - b; });
  });
  if (autograd::should_record({x, y})) {
    autograd::record("sub", {x, y}, out, [xi = x.impl(), yi = y.impl(), oi = out.impl()] {
      dispatch_dtype(xi->dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* go = grad_ptr<T>(*oi);
        const std::int64_t n = oi->shape.numel();
        if (xi->requires_grad) {
          T* gx = ensure_grad<T>(*xi);
          for (std::int64_t i = 0; i < n; ++i) gx[i] += go[i];
        }
        if (yi->requires_grad) {
          T* gy = ensure_grad<T>(*yi);
          for (std::int64_t i = 0; i < n; ++i) gy[i] -= go[i];
        }
      });
    });
  }
  return out;
}

namespace {

Tensor mul_impl(const Tensor& x, const Tensor& y, const char* op, bool strict_bcast) {
  check_same_dtype(x, y, op);
  Broadcast bc = binary_broadcast(x.shape(), y.shape(), op, true);
  if (strict_bcast && bc != Broadcast::per_channel)
    throw ShapeError(std::string(op) + ": scale must be Nx" + std::to_string(x.shape().c) +
                     "x1x1, got " + y.shape().str());
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    binary_forward<T>(*x.impl(), *y.impl(), bc, *out.impl(),
                      [](T a, T b) { return a * b; });
  });
  if (autograd::should_record({x, y})) {
    autograd::record(op, {x, y}, out, [xi = x.impl(), yi = y.impl(), oi = out.impl(), bc] {
      dispatch_dtype(xi->dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* go = grad_ptr<T>(*oi);
        const T* xp = xi->ptr<T>();
        const T* yp = yi->ptr<T>();
        const std::int64_t n = oi->shape.numel();
        const std::int64_t hw = static_cast<std::int64_t>(xi->shape.h) * xi->shape.w;
        if (xi->requires_grad) {
          T* gx = ensure_grad<T>(*xi);
          if (bc == Broadcast::none) {
            for (std::int64_t i = 0; i < n; ++i) gx[i] += go[i] * yp[i];
          } else {
            for (std::int64_t i = 0; i < n; ++i) gx[i] += go[i] * yp[i / hw];
          }
        }
        if (yi->requires_grad) {
          T* gy = ensure_grad<T>(*yi);
          if (bc == Broadcast::none) {
            for (std::int64_t i = 0; i < n; ++i) gy[i] += go[i] * xp[i];
          } else {
            for (std::int64_t i = 0; i < n; ++i) gy[i / hw] += go[i] * xp[i];
          }
        }
      });
    });
  }
  return out;
}

}  // namespace

Tensor mul(const Tensor& x, const Tensor& y) { return mul_impl(x, y, "mul", false); }

Tensor scale_broadcast(const Tensor& x, const Tensor& s) {
  return mul_impl(x, s, "scale_broadcast", true);
}

Tensor abs(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xp = x.data<T>();
    T* op = out.data<T>();
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) op[i] = std::fabs(xp[i]);
  });
  if (autograd::should_record({x})) {
    autograd::record("abs", {x}, out, [xi = x.impl(), oi = out.impl()] {
      dispatch_dtype(xi->dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* go = grad_ptr<T>(*oi);
        const T* xp = xi->ptr<T>();
        T* gx = ensure_grad<T>(*xi);
        const std::int64_t n = xi->shape.numel();
        for (std::int64_t i = 0; i < n; ++i) {
          if (xp[i] > T(0))
            gx[i] += go[i];
          else if (xp[i] < T(0))
            gx[i] -= go[i];
        }
      });
    });
  }
  return out;
}

Tensor mul_scalar(const Tensor& x, double s) {
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xp = x.data<T>();
    T* op = out.data<T>();
    const T f = static_cast<T>(s);
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) op[i] = xp[i] * f;
  });
  if (autograd::should_record({x})) {
    autograd::record("mul_scalar", {x}, out, [xi = x.impl(), oi = out.impl(), s] {
      dispatch_dtype(xi->dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* go = grad_ptr<T>(*oi);
        T* gx = ensure_grad<T>(*xi);
        const T f = static_cast<T>(s);
        const std::int64_t n = xi->shape.numel();
        for (std::int64_t i = 0; i < n; ++i) gx[i] += go[i] * f;
      });
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  Tensor out = Tensor::zeros({1, 1, 1, 1}, x.dtype());
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xp = x.data<T>();
    T acc = T(0);
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) acc += xp[i];
    out.data<T>()[0] = acc / static_cast<T>(n);
  });
  if (autograd::should_record({x})) {
    autograd::record("mean", {x}, out, [xi = x.impl(), oi = out.impl()] {
      dispatch_dtype(xi->dtype, [&](auto tag) {
        using T = decltype(tag);
        const T g = grad_ptr<T>(*oi)[0] / static_cast<T>(xi->shape.numel());
        T* gx = ensure_grad<T>(*xi);
        const std::int64_t n = xi->shape.numel();
        for (std::int64_t i = 0; i < n; ++i) gx[i] += g;
      });
    });
  }
  return out;
}

}  // namespace msff
