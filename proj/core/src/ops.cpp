#include "fpsr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

namespace fpsr::ops {

namespace {

// Rows [i, i + R) of C. Each block of two vectors' worth of columns keeps its
// R x 2 accumulators in registers for the whole k loop.
template <int R, typename T>
void gemm_rows(std::int64_t i, std::int64_t n, std::int64_t k, const T* a, std::int64_t a_rs, std::int64_t a_cs,
               const T* __restrict b, T* __restrict c, std::int64_t ldc) {
  typedef T Vec __attribute__((vector_size(32)));
  constexpr std::int64_t kLanes = sizeof(Vec) / sizeof(T);
  constexpr std::int64_t kCols = 2 * kLanes;
  auto load = [](const T* p) {
    Vec v;
    std::memcpy(&v, p, sizeof v);
    return v;
  };
  const T* ai = a + i * a_rs;
  std::int64_t j = 0;
  for (; j + kCols <= n; j += kCols) {
    Vec acc[R][2];
    for (int r = 0; r < R; ++r) {
      acc[r][0] = load(c + (i + r) * ldc + j);
      acc[r][1] = load(c + (i + r) * ldc + j + kLanes);
    }
    for (std::int64_t q = 0; q < k; ++q) {
      const Vec b0 = load(b + q * n + j), b1 = load(b + q * n + j + kLanes);
      for (int r = 0; r < R; ++r) {
        const T ar = ai[r * a_rs + q * a_cs];
        acc[r][0] += ar * b0;
        acc[r][1] += ar * b1;
      }
    }
    for (int r = 0; r < R; ++r) {
      std::memcpy(c + (i + r) * ldc + j, &acc[r][0], sizeof(Vec));
      std::memcpy(c + (i + r) * ldc + j + kLanes, &acc[r][1], sizeof(Vec));
    }
  }
  for (int r = 0; r < R; ++r) {
    T* cr = c + (i + r) * ldc;
    for (std::int64_t q = 0; q < k; ++q) {
      const T ar = ai[r * a_rs + q * a_cs];
      const T* br = b + q * n;
      for (std::int64_t jj = j; jj < n; ++jj) cr[jj] += ar * br[jj];
    }
  }
}

// C (m x n, row stride ldc) = [C +] A B where A(i, k) = a[i * a_rs + k * a_cs]
// and B is k x n row-major. Every output sums over k in increasing order, so
// results do not depend on buffer alignment or on how the j loop is vectorized.
template <typename T>
void gemm(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, std::int64_t a_rs, std::int64_t a_cs,
          const T* __restrict b, T* __restrict c, bool accumulate, std::int64_t ldc = -1) {
  if (ldc < 0) ldc = n;
  if (!accumulate)
    for (std::int64_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, T(0));
  std::int64_t i = 0;
  for (; i + 4 <= m; i += 4) gemm_rows<4>(i, n, k, a, a_rs, a_cs, b, c, ldc);
  switch (m - i) {
    case 3: gemm_rows<3>(i, n, k, a, a_rs, a_cs, b, c, ldc); break;
    case 2: gemm_rows<2>(i, n, k, a, a_rs, a_cs, b, c, ldc); break;
    case 1: gemm_rows<1>(i, n, k, a, a_rs, a_cs, b, c, ldc); break;
    default: break;
  }
}

template <typename T>
void transpose_into(const T* src, std::int64_t rows, std::int64_t cols, std::vector<T>& dst) {
  dst.resize(static_cast<std::size_t>(rows * cols));
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

template <typename T>
void require_rank(const char* op, const Tensor<T>& x, std::size_t rank) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(x.shape()));
  }
}

// Elementwise map with a pointwise derivative computed from (x, y).
template <typename T, typename F, typename D>
Tensor<T> unary(const char* op, const Tensor<T>& x, F f, D dfdx) {
  const auto xs = x.data();
  std::vector<T> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = f(xs[i]);
  auto bw = [x, dfdx](std::span<const T> g) {
    const auto xd = x.data();
    std::vector<T> gx(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * dfdx(xd[i]);
    accumulate_grad(x, std::span<const T>(gx));
  };
  return make_op_result<T>(op, x.shape(), std::move(out), {x}, bw);
}

template <typename T>
T stable_sigmoid(T v) {
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a, b);
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<T> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] + bd[i];
  return make_op_result<T>("add", a.shape(), std::move(out), {a, b}, [a, b](std::span<const T> g) {
    accumulate_grad(a, g);
    accumulate_grad(b, g);
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("sub", a, b);
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<T> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] - bd[i];
  return make_op_result<T>("sub", a.shape(), std::move(out), {a, b}, [a, b](std::span<const T> g) {
    accumulate_grad(a, g);
    if (b.requires_grad()) {
      std::vector<T> neg(g.begin(), g.end());
      for (auto& v : neg) v = -v;
      accumulate_grad(b, std::span<const T>(neg));
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("mul", a, b);
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<T> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] * bd[i];
  return make_op_result<T>("mul", a.shape(), std::move(out), {a, b}, [a, b](std::span<const T> g) {
    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<T> t(g.size());
    if (a.requires_grad()) {
      for (std::size_t i = 0; i < g.size(); ++i) t[i] = g[i] * bd[i];
      accumulate_grad(a, std::span<const T>(t));
    }
    if (b.requires_grad()) {
      for (std::size_t i = 0; i < g.size(); ++i) t[i] = g[i] * ad[i];
      accumulate_grad(b, std::span<const T>(t));
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary<T>("scale", x, [factor](T v) { return v * factor; }, [factor](T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
  return unary<T>("add_scalar", x, [value](T v) { return v + value; }, [](T) { return T(1); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return unary<T>("square", x, [](T v) { return v * v; }, [](T v) { return T(2) * v; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary<T>("relu", x, [](T v) { return v > T(0) ? v : T(0); },
                  [](T v) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T alpha) {
  if (!(alpha > T(0) && alpha <= T(1))) {
    throw std::invalid_argument("leaky_relu: alpha must lie in (0,1]");
  }
  return unary<T>("leaky_relu", x, [alpha](T v) { return v > T(0) ? v : alpha * v; },
                  [alpha](T v) { return v > T(0) ? T(1) : alpha; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary<T>("sigmoid", x, [](T v) { return stable_sigmoid(v); },
                  [](T v) {
                    const T s = stable_sigmoid(v);
                    return s * (T(1) - s);
                  });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  return unary<T>("softplus", x,
                  [](T v) { return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v))); },
                  [](T v) { return stable_sigmoid(v); });
}

template <typename T>
Tensor<T> log_clamped(const Tensor<T>& x, T floor) {
  return unary<T>("log", x, [floor](T v) { return std::log(std::max(v, floor)); },
                  [floor](T v) { return v > floor ? T(1) / v : T(0); });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (const T v : x.data()) acc += v;
  return make_op_result<T>("sum", Shape{}, {acc}, {x}, [x](std::span<const T> g) {
    std::vector<T> gx(static_cast<std::size_t>(x.numel()), g[0]);
    accumulate_grad(x, std::span<const T>(gx));
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> mean_abs(const Tensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean_abs of an empty tensor");
  const auto n = static_cast<T>(x.numel());
  T acc = T(0);
  for (const T v : x.data()) acc += std::abs(v);
  return make_op_result<T>("mean_abs", Shape{}, {acc / n}, {x}, [x, n](std::span<const T> g) {
    const auto xd = x.data();
    std::vector<T> gx(xd.size());
    for (std::size_t i = 0; i < xd.size(); ++i) {
      const T s = xd[i] > T(0) ? T(1) : (xd[i] < T(0) ? T(-1) : T(0));
      gx[i] = g[0] * s / n;
    }
    accumulate_grad(x, std::span<const T>(gx));
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  require_rank("softmax", x, 2);
  const auto rows = static_cast<std::size_t>(x.dim(0));
  const auto k = static_cast<std::size_t>(x.dim(1));
  const auto xd = x.data();
  std::vector<T> y(xd.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xd.data() + r * k;
    T* out = y.data() + r * k;
    const T mx = *std::max_element(in, in + k);
    T total = T(0);
    for (std::size_t i = 0; i < k; ++i) total += (out[i] = std::exp(in[i] - mx));
    for (std::size_t i = 0; i < k; ++i) out[i] /= total;
  }
  auto saved = y;
  return make_op_result<T>("softmax", x.shape(), std::move(y), {x},
                           [x, saved = std::move(saved), rows, k](std::span<const T> g) {
                             std::vector<T> gx(g.size());
                             for (std::size_t r = 0; r < rows; ++r) {
                               T dot = T(0);
                               for (std::size_t i = 0; i < k; ++i) dot += g[r * k + i] * saved[r * k + i];
                               for (std::size_t i = 0; i < k; ++i)
                                 gx[r * k + i] = saved[r * k + i] * (g[r * k + i] - dot);
                             }
                             accumulate_grad(x, std::span<const T>(gx));
                           });
}

template <typename T>
Tensor<T> cumsum(const Tensor<T>& x) {
  require_rank("cumsum", x, 2);
  const auto rows = static_cast<std::size_t>(x.dim(0));
  const auto k = static_cast<std::size_t>(x.dim(1));
  const auto xd = x.data();
  std::vector<T> y(xd.size());
  for (std::size_t r = 0; r < rows; ++r) {
    T acc = T(0);
    for (std::size_t i = 0; i < k; ++i) y[r * k + i] = (acc += xd[r * k + i]);
  }
  return make_op_result<T>("cumsum", x.shape(), std::move(y), {x}, [x, rows, k](std::span<const T> g) {
    std::vector<T> gx(g.size());
    for (std::size_t r = 0; r < rows; ++r) {
      T acc = T(0);
      for (std::size_t i = k; i-- > 0;) gx[r * k + i] = (acc += g[r * k + i]);
    }
    accumulate_grad(x, std::span<const T>(gx));
  });
}

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank("dense", x, 2);
  require_rank("dense weight", weight, 2);
  require_rank("dense bias", bias, 1);
  const auto n = x.dim(0);
  const auto f = x.dim(1);
  const auto g = weight.dim(1);
  if (weight.dim(0) != f || bias.dim(0) != g) {
    throw ShapeError("dense: input " + shape_str(x.shape()) + ", weight " +
                     shape_str(weight.shape()) + ", bias " + shape_str(bias.shape()) +
                     " do not agree");
  }
  std::vector<T> out(static_cast<std::size_t>(n * g));
  gemm(n, g, f, x.data().data(), f, 1, weight.data().data(), out.data(), false);
  const auto bd = bias.data();
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t c = 0; c < g; ++c) out[r * g + c] += bd[c];
  return make_op_result<T>(
      "dense", Shape{n, g}, std::move(out), {x, weight, bias},
      [x, weight, bias, n, f, g](std::span<const T> grad) {
        if (x.requires_grad()) {
          std::vector<T> wt;
          transpose_into(weight.data().data(), f, g, wt);
          std::vector<T> gx(static_cast<std::size_t>(n * f));
          gemm(n, f, g, grad.data(), g, 1, wt.data(), gx.data(), false);
          accumulate_grad(x, std::span<const T>(gx));
        }
        if (weight.requires_grad()) {
          std::vector<T> gw(static_cast<std::size_t>(f * g));
          gemm(f, g, n, x.data().data(), 1, f, grad.data(), gw.data(), false);
          accumulate_grad(weight, std::span<const T>(gw));
        }
        if (bias.requires_grad()) {
          std::vector<T> gb(static_cast<std::size_t>(g), T(0));
          for (std::int64_t r = 0; r < n; ++r)
            for (std::int64_t c = 0; c < g; ++c) gb[c] += grad[r * g + c];
          accumulate_grad(bias, std::span<const T>(gb));
        }
      });
}

namespace {

struct ConvGeometry {
  std::int64_t n, cin, h, w, cout, k, stride, pad, oh, ow;
  std::int64_t patch() const { return cin * k * k; }
  std::int64_t pixels() const { return oh * ow; }
};

// Columns for output rows [oy0, oy1); each of the K rows of `cols` holds
// (oy1 - oy0) * ow entries.
template <typename T>
void im2col(const T* img, const ConvGeometry& g, T* cols, std::int64_t oy0, std::int64_t oy1) {
  const auto p = (oy1 - oy0) * g.ow;
  for (std::int64_t c = 0; c < g.cin; ++c) {
    const T* plane = img + c * g.h * g.w;
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        T* row = cols + ((c * g.k + ky) * g.k + kx) * p;
        // Output columns whose input column ox * stride - pad + kx lies inside the image.
        const std::int64_t shift = kx - g.pad;
        const std::int64_t lo = std::min(g.ow, shift >= 0 ? 0 : (-shift + g.stride - 1) / g.stride);
        const std::int64_t hi = std::max(lo, std::min(g.ow, (g.w - 1 - shift) / g.stride + 1));
        for (std::int64_t oy = oy0; oy < oy1; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          T* dst = row + (oy - oy0) * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.ow, T(0));
            continue;
          }
          const T* src = plane + iy * g.w + shift;
          std::fill(dst, dst + lo, T(0));
          if (g.stride == 1) {
            std::copy(src + lo, src + hi, dst + lo);
          } else {
            for (std::int64_t ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride];
          }
          std::fill(dst + hi, dst + g.ow, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* img) {
  const auto p = g.pixels();
  for (std::int64_t c = 0; c < g.cin; ++c) {
    T* plane = img + c * g.h * g.w;
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        const T* row = cols + ((c * g.k + ky) * g.k + kx) * p;
        for (std::int64_t oy = 0; oy < g.oh; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          T* dst = plane + iy * g.w;
          const T* src = row + oy * g.ow;
          for (std::int64_t ox = 0; ox < g.ow; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                 int pad) {
  require_rank("conv2d input", x, 4);
  require_rank("conv2d weight", weight, 4);
  require_rank("conv2d bias", bias, 1);
  ConvGeometry g{};
  g.n = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = weight.dim(0);
  g.k = weight.dim(2);
  g.stride = stride;
  g.pad = pad;
  if (weight.dim(1) != g.cin || weight.dim(3) != g.k || bias.dim(0) != g.cout) {
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + ", weight " +
                     shape_str(weight.shape()) + ", bias " + shape_str(bias.shape()) +
                     " do not agree");
  }
  if (g.k % 2 == 0) throw ShapeError("conv2d: kernel size must be odd, got " + std::to_string(g.k));
  if (stride < 1 || pad < 0) throw ShapeError("conv2d: invalid stride or padding");
  g.oh = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.ow = (g.w + 2 * g.pad - g.k) / g.stride + 1;
  if (g.h + 2 * g.pad < g.k || g.w + 2 * g.pad < g.k) {
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " smaller than kernel");
  }

  const auto K = g.patch();
  const auto P = g.pixels();
  std::vector<T> out(static_cast<std::size_t>(g.n * g.cout * P));
  // Bands of output rows keep the column buffer around 256 KiB.
  const std::int64_t band = std::clamp<std::int64_t>((std::int64_t{1} << 15) / (K * g.ow), 1, g.oh);
  std::vector<T> cols(static_cast<std::size_t>(K * band * g.ow));
  const auto bd = bias.data();
  for (std::int64_t b = 0; b < g.n; ++b) {
    T* ob = out.data() + b * g.cout * P;
    for (std::int64_t oy0 = 0; oy0 < g.oh; oy0 += band) {
      const std::int64_t oy1 = std::min(g.oh, oy0 + band);
      im2col(x.data().data() + b * g.cin * g.h * g.w, g, cols.data(), oy0, oy1);
      gemm(g.cout, (oy1 - oy0) * g.ow, K, weight.data().data(), K, 1, cols.data(), ob + oy0 * g.ow, false, P);
    }
    for (std::int64_t c = 0; c < g.cout; ++c)
      for (std::int64_t p = 0; p < P; ++p) ob[c * P + p] += bd[c];
  }

  return make_op_result<T>(
      "conv2d", Shape{g.n, g.cout, g.oh, g.ow}, std::move(out), {x, weight, bias},
      [x, weight, bias, g](std::span<const T> grad) {
        const auto K = g.patch();
        const auto P = g.pixels();
        std::vector<T> cols(static_cast<std::size_t>(K * P));
        std::vector<T> cols_t;
        std::vector<T> gw;
        std::vector<T> gb;
        std::vector<T> gx;
        if (weight.requires_grad()) gw.assign(static_cast<std::size_t>(g.cout * K), T(0));
        if (bias.requires_grad()) gb.assign(static_cast<std::size_t>(g.cout), T(0));
        if (x.requires_grad()) gx.assign(static_cast<std::size_t>(x.numel()), T(0));
        for (std::int64_t b = 0; b < g.n; ++b) {
          const T* gm = grad.data() + b * g.cout * P;
          if (!gw.empty()) {
            im2col(x.data().data() + b * g.cin * g.h * g.w, g, cols.data(), 0, g.oh);
            transpose_into(cols.data(), K, P, cols_t);
            gemm(g.cout, K, P, gm, P, 1, cols_t.data(), gw.data(), true);
          }
          if (!gb.empty()) {
            for (std::int64_t c = 0; c < g.cout; ++c)
              for (std::int64_t p = 0; p < P; ++p) gb[c] += gm[c * P + p];
          }
          if (!gx.empty()) {
            gemm(K, P, g.cout, weight.data().data(), 1, K, gm, cols.data(), false);
            col2im_add(cols.data(), g, gx.data() + b * g.cin * g.h * g.w);
          }
        }
        if (!gw.empty()) accumulate_grad(weight, std::span<const T>(gw));
        if (!gb.empty()) accumulate_grad(bias, std::span<const T>(gb));
        if (!gx.empty()) accumulate_grad(x, std::span<const T>(gx));
      });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require_rank("global_avg_pool", x, 4);
  const auto n = x.dim(0);
  const auto c = x.dim(1);
  const auto hw = x.dim(2) * x.dim(3);
  if (hw == 0) throw ShapeError("global_avg_pool: empty spatial extent");
  const auto xd = x.data();
  std::vector<T> out(static_cast<std::size_t>(n * c));
  for (std::int64_t i = 0; i < n * c; ++i) {
    T acc = T(0);
    for (std::int64_t j = 0; j < hw; ++j) acc += xd[i * hw + j];
    out[i] = acc / static_cast<T>(hw);
  }
  return make_op_result<T>("global_avg_pool", Shape{n, c}, std::move(out), {x},
                           [x, n, c, hw](std::span<const T> g) {
                             std::vector<T> gx(static_cast<std::size_t>(x.numel()));
                             for (std::int64_t i = 0; i < n * c; ++i) {
                               const T v = g[i] / static_cast<T>(hw);
                               std::fill(gx.begin() + i * hw, gx.begin() + (i + 1) * hw, v);
                             }
                             accumulate_grad(x, std::span<const T>(gx));
                           });
}

namespace {

// Index of the input element feeding flat output position under depth-to-space.
struct ShuffleMap {
  std::int64_t n, c, h, w, r;
  // input is n x (c r^2) x h x w ; output n x c x hr x wr
  template <typename F>
  void for_each(F f) const {
    const auto oh = h * r;
    const auto ow = w * r;
    for (std::int64_t b = 0; b < n; ++b)
      for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t y = 0; y < oh; ++y) {
          const auto i = y % r;
          const auto in_row = ((b * c * r * r + ch * r * r + i * r) * h + y / r) * w;
          const auto out_row = ((b * c + ch) * oh + y) * ow;
          for (std::int64_t j = 0; j < r; ++j) {
            const auto in_base = in_row + j * h * w;
            for (std::int64_t xx = 0; xx < w; ++xx) f(in_base + xx, out_row + xx * r + j);
          }
        }
  }
};

}  // namespace

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r) {
  require_rank("pixel_shuffle", x, 4);
  if (r < 1 || x.dim(1) % (static_cast<std::int64_t>(r) * r) != 0) {
    throw ShapeError("pixel_shuffle: channels " + std::to_string(x.dim(1)) +
                     " not divisible by r^2 = " + std::to_string(r * r));
  }
  const ShuffleMap m{x.dim(0), x.dim(1) / (r * r), x.dim(2), x.dim(3), r};
  const auto xd = x.data();
  std::vector<T> out(xd.size());
  m.for_each([&](std::int64_t in, std::int64_t o) { out[o] = xd[in]; });
  return make_op_result<T>("pixel_shuffle", Shape{m.n, m.c, m.h * r, m.w * r}, std::move(out), {x},
                           [x, m](std::span<const T> g) {
                             std::vector<T> gx(g.size());
                             m.for_each([&](std::int64_t in, std::int64_t o) { gx[in] = g[o]; });
                             accumulate_grad(x, std::span<const T>(gx));
                           });
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int r) {
  require_rank("pixel_unshuffle", x, 4);
  if (r < 1 || x.dim(2) % r != 0 || x.dim(3) % r != 0) {
    throw ShapeError("pixel_unshuffle: spatial extents of " + shape_str(x.shape()) +
                     " not divisible by " + std::to_string(r));
  }
  const ShuffleMap m{x.dim(0), x.dim(1), x.dim(2) / r, x.dim(3) / r, r};
  const auto xd = x.data();
  std::vector<T> out(xd.size());
  m.for_each([&](std::int64_t in, std::int64_t o) { out[in] = xd[o]; });
  return make_op_result<T>("pixel_unshuffle", Shape{m.n, m.c * r * r, m.h, m.w}, std::move(out),
                           {x}, [x, m](std::span<const T> g) {
                             std::vector<T> gx(g.size());
                             m.for_each([&](std::int64_t in, std::int64_t o) { gx[o] = g[in]; });
                             accumulate_grad(x, std::span<const T>(gx));
                           });
}

template <typename T>
Tensor<T> resample(const Tensor<T>& x, const AxisWeights& rows, const AxisWeights& cols) {
  require_rank("resample", x, 4);
  const auto planes = x.dim(0) * x.dim(1);
  const auto h = x.dim(2);
  const auto w = x.dim(3);
  if (rows.in_size != h || cols.in_size != w) {
    throw ShapeError("resample: weights expect " + std::to_string(rows.in_size) + "x" +
                     std::to_string(cols.in_size) + ", input is " + shape_str(x.shape()));
  }
  const std::int64_t oh = rows.out_size;
  const std::int64_t ow = cols.out_size;
  const auto xd = x.data();
  std::vector<T> out(static_cast<std::size_t>(planes * oh * ow), T(0));
  std::vector<T> tmp(static_cast<std::size_t>(h * ow));
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = xd.data() + p * h * w;
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t o = 0; o < ow; ++o) {
        T acc = T(0);
        for (int k = cols.start[o]; k < cols.start[o + 1]; ++k)
          acc += static_cast<T>(cols.weight[k]) * src[y * w + cols.index[k]];
        tmp[y * ow + o] = acc;
      }
    T* dst = out.data() + p * oh * ow;
    for (std::int64_t o = 0; o < oh; ++o)
      for (int k = rows.start[o]; k < rows.start[o + 1]; ++k) {
        const T wk = static_cast<T>(rows.weight[k]);
        const T* trow = tmp.data() + rows.index[k] * ow;
        for (std::int64_t xo = 0; xo < ow; ++xo) dst[o * ow + xo] += wk * trow[xo];
      }
  }
  return make_op_result<T>(
      "resample", Shape{x.dim(0), x.dim(1), oh, ow}, std::move(out), {x},
      [x, rows, cols, planes, h, w, oh, ow](std::span<const T> g) {
        std::vector<T> gx(static_cast<std::size_t>(planes * h * w), T(0));
        std::vector<T> tmp(static_cast<std::size_t>(h * ow));
        for (std::int64_t p = 0; p < planes; ++p) {
          std::fill(tmp.begin(), tmp.end(), T(0));
          const T* gp = g.data() + p * oh * ow;
          for (std::int64_t o = 0; o < oh; ++o)
            for (int k = rows.start[o]; k < rows.start[o + 1]; ++k) {
              const T wk = static_cast<T>(rows.weight[k]);
              T* trow = tmp.data() + rows.index[k] * ow;
              for (std::int64_t xo = 0; xo < ow; ++xo) trow[xo] += wk * gp[o * ow + xo];
            }
          T* dst = gx.data() + p * h * w;
          for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t o = 0; o < ow; ++o)
              for (int k = cols.start[o]; k < cols.start[o + 1]; ++k)
                dst[y * w + cols.index[k]] += static_cast<T>(cols.weight[k]) * tmp[y * ow + o];
        }
        accumulate_grad(x, std::span<const T>(gx));
      });
}

template <typename T>
Tensor<T> resize_bicubic(const Tensor<T>& x, Ratio scale) {
  require_rank("resize_bicubic", x, 4);
  if (scale.is_unit()) return x;
  const int h = static_cast<int>(x.dim(2));
  const int w = static_cast<int>(x.dim(3));
  return resample(x, bicubic_axis_weights(h, scaled_extent(h, scale), scale.value()),
                  bicubic_axis_weights(w, scaled_extent(w, scale), scale.value()));
}

template <typename T>
Tensor<T> concat_batch(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_batch: no inputs");
  Shape inner(parts.front().shape().begin() + 1, parts.front().shape().end());
  std::int64_t total = 0;
  std::vector<T> out;
  for (const auto& p : parts) {
    if (p.rank() != inner.size() + 1 || !std::equal(inner.begin(), inner.end(), p.shape().begin() + 1)) {
      throw ShapeError("concat_batch: incompatible shape " + shape_str(p.shape()));
    }
    total += p.dim(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  Shape shape{total};
  shape.insert(shape.end(), inner.begin(), inner.end());
  return make_op_result<T>("concat_batch", std::move(shape), std::move(out), parts,
                           [parts](std::span<const T> g) {
                             std::size_t off = 0;
                             for (const auto& p : parts) {
                               const auto n = static_cast<std::size_t>(p.numel());
                               accumulate_grad(p, g.subspan(off, n));
                               off += n;
                             }
                           });
}

template <typename T>
Tensor<T> slice_batch(const Tensor<T>& x, std::int64_t begin, std::int64_t count) {
  if (x.rank() < 1 || begin < 0 || count < 1 || begin + count > x.dim(0)) {
    throw ShapeError("slice_batch: rows [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside " + shape_str(x.shape()));
  }
  const auto row = x.numel() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = count;
  std::vector<T> out(x.data().begin() + begin * row, x.data().begin() + (begin + count) * row);
  return make_op_result<T>("slice_batch", std::move(shape), std::move(out), {x},
                           [x, begin, count, row](std::span<const T> g) {
                             std::vector<T> gx(static_cast<std::size_t>(x.numel()), T(0));
                             std::copy(g.begin(), g.end(), gx.begin() + begin * row);
                             accumulate_grad(x, std::span<const T>(gx));
                           });
}

#define FPSR_INSTANTIATE_OPS(T)                                                            \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                        \
  template Tensor<T> add_scalar<T>(const Tensor<T>&, T);                                   \
  template Tensor<T> square<T>(const Tensor<T>&);                                          \
  template Tensor<T> relu<T>(const Tensor<T>&);                                            \
  template Tensor<T> leaky_relu<T>(const Tensor<T>&, T);                                   \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                         \
  template Tensor<T> softplus<T>(const Tensor<T>&);                                        \
  template Tensor<T> log_clamped<T>(const Tensor<T>&, T);                                  \
  template Tensor<T> sum<T>(const Tensor<T>&);                                             \
  template Tensor<T> mean<T>(const Tensor<T>&);                                            \
  template Tensor<T> mean_abs<T>(const Tensor<T>&);                                        \
  template Tensor<T> softmax<T>(const Tensor<T>&);                                         \
  template Tensor<T> cumsum<T>(const Tensor<T>&);                                          \
  template Tensor<T> dense<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);       \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int,  \
                               int);                                                       \
  template Tensor<T> global_avg_pool<T>(const Tensor<T>&);                                 \
  template Tensor<T> pixel_shuffle<T>(const Tensor<T>&, int);                              \
  template Tensor<T> pixel_unshuffle<T>(const Tensor<T>&, int);                            \
  template Tensor<T> resample<T>(const Tensor<T>&, const AxisWeights&, const AxisWeights&); \
  template Tensor<T> resize_bicubic<T>(const Tensor<T>&, Ratio);                           \
  template Tensor<T> concat_batch<T>(const std::vector<Tensor<T>>&);                       \
  template Tensor<T> slice_batch<T>(const Tensor<T>&, std::int64_t, std::int64_t);

FPSR_INSTANTIATE_OPS(float)
FPSR_INSTANTIATE_OPS(double)

#undef FPSR_INSTANTIATE_OPS

}  // namespace fpsr::ops
