#include "cbgt/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "cbgt/numerics/kernels.hpp"
#include "cbgt/numerics/math.hpp"

namespace cbgt::numerics {
namespace {

[[noreturn]] void shape_error(const std::string& op, const std::string& what) {
  throw std::invalid_argument(op + ": " + what);
}

void require_rank(const std::string& op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    shape_error(op, "expected rank " + std::to_string(rank) + ", got " + shape_string(s));
  }
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

struct ConvGeometry {
  std::size_t n, h, w, c, out_c, kh, kw, stride, pad, oh, ow;
  std::size_t rows() const { return n * oh * ow; }
  std::size_t patch() const { return kh * kw * c; }
};

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  const std::size_t patch = g.patch();
  for (std::size_t b = 0; b < g.n; ++b) {
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        T* dst = col + ((b * g.oh + oy) * g.ow + ox) * patch;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            T* d = dst + (ky * g.kw + kx) * g.c;
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.h) || ix >= static_cast<long>(g.w)) {
              std::fill(d, d + g.c, T{0});
            } else {
              const T* s = x + ((b * g.h + iy) * g.w + ix) * g.c;
              std::copy(s, s + g.c, d);
            }
          }
        }
      }
    }
  }
}

// Column-major variant: colT[(ky,kx,c), row].
template <typename T>
void im2col_t(const ConvGeometry& g, const T* x, T* colt) {
  const std::size_t rows = g.rows();
  for (std::size_t ky = 0; ky < g.kh; ++ky)
    for (std::size_t kx = 0; kx < g.kw; ++kx)
      for (std::size_t ch = 0; ch < g.c; ++ch) {
        T* dst = colt + ((ky * g.kw + kx) * g.c + ch) * rows;
        for (std::size_t b = 0; b < g.n; ++b)
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
            T* d = dst + (b * g.oh + oy) * g.ow;
            if (iy < 0 || iy >= static_cast<long>(g.h)) {
              std::fill(d, d + g.ow, T{0});
              continue;
            }
            const T* src = x + (b * g.h + iy) * g.w * g.c + ch;
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
              d[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? T{0} : src[ix * g.c];
            }
          }
      }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* col, T* dx) {
  const std::size_t patch = g.patch();
  for (std::size_t b = 0; b < g.n; ++b) {
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        const T* src = col + ((b * g.oh + oy) * g.ow + ox) * patch;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            const T* s = src + (ky * g.kw + kx) * g.c;
            T* d = dx + ((b * g.h + iy) * g.w + ix) * g.c;
            for (std::size_t ch = 0; ch < g.c; ++ch) d[ch] += s[ch];
          }
        }
      }
    }
  }
}

// Mean over non-overlapping k x k windows of an NHWC tensor.
template <typename T>
Tensor<T> pool_mean(const Tensor<T>& x, std::size_t k) {
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const std::size_t oh = h / k, ow = w / k;
  Tensor<T> out({n, oh, ow, c});
  const T inv = T{1} / static_cast<T>(k * k);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T* d = out.data() + ((b * oh + oy) * ow + ox) * c;
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx) {
            const T* s = x.data() + ((b * h + oy * k + ky) * w + ox * k + kx) * c;
            for (std::size_t ch = 0; ch < c; ++ch) d[ch] += s[ch];
          }
        for (std::size_t ch = 0; ch < c; ++ch) d[ch] *= inv;
      }
  return out;
}

// Spreads d(out)/k^2 back over each window; `per_channel` optionally scales
// the gradient of channel c.
template <typename T>
void pool_mean_backward(const Tensor<T>& g, std::size_t k, const T* per_channel, Tensor<T>& dx) {
  const std::size_t n = dx.dim(0), h = dx.dim(1), w = dx.dim(2), c = dx.dim(3);
  const std::size_t oh = h / k, ow = w / k;
  const T inv = T{1} / static_cast<T>(k * k);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const T* s = g.data() + ((b * oh + oy) * ow + ox) * c;
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx) {
            T* d = dx.data() + ((b * h + oy * k + ky) * w + ox * k + kx) * c;
            for (std::size_t ch = 0; ch < c; ++ch)
              d[ch] += s[ch] * inv * (per_channel ? per_channel[ch] : T{1});
          }
      }
}

void check_pool(const std::string& op, const Shape& s, std::size_t k) {
  require_rank(op, s, 4);
  if (k == 0 || s[1] % k != 0 || s[2] % k != 0) {
    shape_error(op, "window " + std::to_string(k) + " does not tile " + shape_string(s));
  }
}

template <typename T, typename Fwd, typename Deriv>
Var unary(Tape<T>& tape, Var x, Fwd fwd, Deriv deriv) {
  const auto& xv = tape.value(x);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  const bool rg = tape.requires_grad(x);
  Var y{tape.size()};
  return tape.record(std::move(out), rg, [x, y, deriv](Tape<T>& t, const Tensor<T>& g) {
    const auto& yv = t.value(y);
    auto& dx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * deriv(yv[i]);
  });
}

}  // namespace

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  if (av.shape() != bv.shape()) {
    shape_error("add", shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  }
  Tensor<T> out = av;
  add_into(out, bv);
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.record(std::move(out), rg, [a, b](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(a)) add_into(t.grad(a), g);
    if (t.requires_grad(b)) add_into(t.grad(b), g);
  });
}

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  if (av.shape() != bv.shape()) {
    shape_error("mul", shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  }
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.record(std::move(out), rg, [a, b](Tape<T>& t, const Tensor<T>& g) {
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    if (t.requires_grad(a)) {
      auto& da = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b)) {
      auto& db = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var scale(Tape<T>& tape, Var a, T factor) {
  Tensor<T> out = tape.value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor;
  return tape.record(std::move(out), tape.requires_grad(a),
                     [a, factor](Tape<T>& t, const Tensor<T>& g) {
                       auto& da = t.grad(a);
                       for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * factor;
                     });
}

template <typename T>
Var sum(Tape<T>& tape, Var a) {
  const auto& av = tape.value(a);
  T total = 0;
  for (std::size_t i = 0; i < av.size(); ++i) total += av[i];
  return tape.record(Tensor<T>({1}, std::vector<T>{total}), tape.requires_grad(a),
                     [a](Tape<T>& t, const Tensor<T>& g) {
                       auto& da = t.grad(a);
                       for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[0];
                     });
}

template <typename T>
Var reshape(Tape<T>& tape, Var a, Shape shape) {
  Tensor<T> out = tape.value(a).reshaped(std::move(shape));
  return tape.record(std::move(out), tape.requires_grad(a),
                     [a](Tape<T>& t, const Tensor<T>& g) { add_into(t.grad(a), g); });
}

template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  require_rank("matmul", av.shape(), 2);
  require_rank("matmul", bv.shape(), 2);
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  if (bv.dim(0) != k) shape_error("matmul", shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  Tensor<T> out({m, n});
  kernels::gemm_nn(m, n, k, av.data(), bv.data(), out.data(), false);
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.record(std::move(out), rg, [a, b, m, n, k](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(a)) {
      // dA = G B^T
      kernels::gemm_nt(m, k, n, g.data(), t.value(b).data(), t.grad(a).data(), true);
    }
    if (t.requires_grad(b)) {
      // dB = A^T G
      kernels::gemm_tn_acc(k, n, m, t.value(a).data(), g.data(), t.grad(b).data());
    }
  });
}

template <typename T>
Var dense(Tape<T>& tape, Var x, Var weight, Var bias) {
  const auto& xv = tape.value(x);
  const auto& wv = tape.value(weight);
  const auto& bv = tape.value(bias);
  require_rank("dense", xv.shape(), 2);
  require_rank("dense", wv.shape(), 2);
  const std::size_t n = xv.dim(0), d = xv.dim(1), o = wv.dim(0);
  if (wv.dim(1) != d || bv.size() != o || bv.rank() != 1) {
    shape_error("dense", "input " + shape_string(xv.shape()) + ", weight " +
                             shape_string(wv.shape()) + ", bias " + shape_string(bv.shape()));
  }
  Tensor<T> out({n, o});
  std::vector<T> wt(d * o);
  kernels::transpose(o, d, wv.data(), wt.data());
  kernels::gemm_nn(n, o, d, xv.data(), wt.data(), out.data(), false);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < o; ++j) out[r * o + j] += bv[j];
  const bool rg = tape.requires_grad(x) || tape.requires_grad(weight) || tape.requires_grad(bias);
  return tape.record(std::move(out), rg, [=](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(x)) {
      kernels::gemm_nn(n, d, o, g.data(), t.value(weight).data(), t.grad(x).data(), true);
    }
    if (t.requires_grad(weight)) {
      kernels::gemm_tn_acc(o, d, n, g.data(), t.value(x).data(), t.grad(weight).data());
    }
    if (t.requires_grad(bias)) {
      auto& db = t.grad(bias);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < o; ++j) db[j] += g[r * o + j];
    }
  });
}

template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var weight, Var bias, std::size_t stride, std::size_t pad) {
  const auto& xv = tape.value(x);
  const auto& wv = tape.value(weight);
  const auto& bv = tape.value(bias);
  require_rank("conv2d", xv.shape(), 4);
  require_rank("conv2d", wv.shape(), 4);
  if (stride == 0) shape_error("conv2d", "stride must be positive");
  ConvGeometry geo{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), wv.dim(0), wv.dim(1), wv.dim(2),
                   stride, pad, 0, 0};
  if (wv.dim(3) != geo.c || bv.rank() != 1 || bv.size() != geo.out_c) {
    shape_error("conv2d", "input " + shape_string(xv.shape()) + ", weight " +
                              shape_string(wv.shape()) + ", bias " + shape_string(bv.shape()));
  }
  if (geo.h + 2 * pad < geo.kh || geo.w + 2 * pad < geo.kw) {
    shape_error("conv2d", "kernel larger than padded input " + shape_string(xv.shape()));
  }
  geo.oh = (geo.h + 2 * pad - geo.kh) / stride + 1;
  geo.ow = (geo.w + 2 * pad - geo.kw) / stride + 1;

  // out^T (O, rows) = W (O, patch) * col^T (patch, rows); the long row axis
  // is the vectorised one.
  std::vector<T> colt(geo.rows() * geo.patch());
  im2col_t(geo, xv.data(), colt.data());
  std::vector<T> outt(geo.out_c * geo.rows());
  kernels::gemm_nn(geo.out_c, geo.rows(), geo.patch(), wv.data(), colt.data(), outt.data(), false);
  Tensor<T> out({geo.n, geo.oh, geo.ow, geo.out_c});
  kernels::transpose(geo.out_c, geo.rows(), outt.data(), out.data());
  for (std::size_t r = 0; r < geo.rows(); ++r)
    for (std::size_t o = 0; o < geo.out_c; ++o) out[r * geo.out_c + o] += bv[o];

  const bool rg = tape.requires_grad(x) || tape.requires_grad(weight) || tape.requires_grad(bias);
  return tape.record(std::move(out), rg, [=](Tape<T>& t, const Tensor<T>& g) {
    const std::size_t rows = geo.rows(), patch = geo.patch(), oc = geo.out_c;
    if (t.requires_grad(weight)) {
      std::vector<T> cols(rows * patch);
      im2col(geo, t.value(x).data(), cols.data());
      kernels::gemm_tn_acc(oc, patch, rows, g.data(), cols.data(), t.grad(weight).data());
    }
    if (t.requires_grad(bias)) {
      auto& db = t.grad(bias);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < oc; ++o) db[o] += g[r * oc + o];
    }
    if (t.requires_grad(x)) {
      std::vector<T> dcol(rows * patch);
      kernels::gemm_nn(rows, patch, oc, g.data(), t.value(weight).data(), dcol.data(), false);
      col2im_add(geo, dcol.data(), t.grad(x).data());
    }
  });
}

template <typename T>
Var avg_pool(Tape<T>& tape, Var x, std::size_t k) {
  check_pool("avg_pool", tape.value(x).shape(), k);
  Tensor<T> out = pool_mean(tape.value(x), k);
  return tape.record(std::move(out), tape.requires_grad(x), [x, k](Tape<T>& t, const Tensor<T>& g) {
    pool_mean_backward<T>(g, k, nullptr, t.grad(x));
  });
}

template <typename T>
Var subsample(Tape<T>& tape, Var x, Var coeff, Var bias, std::size_t k) {
  const auto& xv = tape.value(x);
  check_pool("subsample", xv.shape(), k);
  const std::size_t c = xv.dim(3);
  const auto& cv = tape.value(coeff);
  const auto& bv = tape.value(bias);
  if (cv.rank() != 1 || cv.size() != c || bv.rank() != 1 || bv.size() != c) {
    shape_error("subsample", "coefficient/bias must have " + std::to_string(c) + " channels");
  }
  Tensor<T> out = pool_mean(xv, k);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = cv[i % c] * out[i] + bv[i % c];
  const bool rg = tape.requires_grad(x) || tape.requires_grad(coeff) || tape.requires_grad(bias);
  return tape.record(std::move(out), rg, [=](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(coeff)) {
      const Tensor<T> pooled = pool_mean(t.value(x), k);
      auto& dc = t.grad(coeff);
      for (std::size_t i = 0; i < g.size(); ++i) dc[i % c] += g[i] * pooled[i];
    }
    if (t.requires_grad(bias)) {
      auto& db = t.grad(bias);
      for (std::size_t i = 0; i < g.size(); ++i) db[i % c] += g[i];
    }
    if (t.requires_grad(x)) pool_mean_backward<T>(g, k, t.value(coeff).data(), t.grad(x));
  });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  return unary(
      tape, x, [](T v) { return v > T{0} ? v : T{0}; },
      [](T y) { return y > T{0} ? T{1} : T{0}; });
}

template <typename T>
Var tanh(Tape<T>& tape, Var x) {
  return unary(
      tape, x, [](T v) { return std::tanh(v); }, [](T y) { return T{1} - y * y; });
}

template <typename T>
Var sigmoid(Tape<T>& tape, Var x) {
  return unary(
      tape, x,
      [](T v) {
        // Split by sign so exp never overflows.
        if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
        const T e = std::exp(v);
        return e / (T{1} + e);
      },
      [](T y) { return y * (T{1} - y); });
}

namespace {

template <typename T>
Var batch_norm_impl(Tape<T>& tape, Var x, Var gamma, Var beta, Tensor<T>* running_mean,
                    Tensor<T>* running_var, const Tensor<T>* fixed_mean, const Tensor<T>* fixed_var,
                    T momentum, T eps) {
  const bool training = running_mean != nullptr;
  const auto& xv = tape.value(x);
  if (xv.rank() < 2) shape_error("batch_norm", "input must have a channel axis");
  const std::size_t c = xv.shape().back();
  const std::size_t m = xv.size() / c;
  const auto& gv = tape.value(gamma);
  const auto& bv = tape.value(beta);
  const Tensor<T>& stats_mean = training ? *running_mean : *fixed_mean;
  const Tensor<T>& stats_var = training ? *running_var : *fixed_var;
  if (gv.size() != c || bv.size() != c || stats_mean.size() != c || stats_var.size() != c) {
    shape_error("batch_norm", "per-channel tensors must have " + std::to_string(c) + " entries");
  }

  std::vector<T> mean(c, T{0}), inv_std(c, T{0});
  if (training) {
    std::vector<T> var(c, T{0});
    for (std::size_t i = 0; i < xv.size(); ++i) mean[i % c] += xv[i];
    for (auto& v : mean) v /= static_cast<T>(m);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const T d = xv[i] - mean[i % c];
      var[i % c] += d * d;
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
      var[ch] /= static_cast<T>(m);
      inv_std[ch] = T{1} / std::sqrt(var[ch] + eps);
      const T unbiased = m > 1 ? var[ch] * static_cast<T>(m) / static_cast<T>(m - 1) : var[ch];
      (*running_mean)[ch] = momentum * (*running_mean)[ch] + (T{1} - momentum) * mean[ch];
      (*running_var)[ch] = momentum * (*running_var)[ch] + (T{1} - momentum) * unbiased;
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = stats_mean[ch];
      inv_std[ch] = T{1} / std::sqrt(stats_var[ch] + eps);
    }
  }

  Tensor<T> xhat(xv.shape());
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const std::size_t ch = i % c;
    xhat[i] = (xv[i] - mean[ch]) * inv_std[ch];
    out[i] = gv[ch] * xhat[i] + bv[ch];
  }
  const bool rg = tape.requires_grad(x) || tape.requires_grad(gamma) || tape.requires_grad(beta);
  return tape.record(
      std::move(out), rg,
      [x, gamma, beta, c, m, training, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape<T>& t, const Tensor<T>& g) {
        const auto& gv = t.value(gamma);
        std::vector<T> sum_g(c, T{0}), sum_gx(c, T{0});
        for (std::size_t i = 0; i < g.size(); ++i) {
          sum_g[i % c] += g[i];
          sum_gx[i % c] += g[i] * xhat[i];
        }
        if (t.requires_grad(gamma)) {
          auto& dg = t.grad(gamma);
          for (std::size_t ch = 0; ch < c; ++ch) dg[ch] += sum_gx[ch];
        }
        if (t.requires_grad(beta)) {
          auto& db = t.grad(beta);
          for (std::size_t ch = 0; ch < c; ++ch) db[ch] += sum_g[ch];
        }
        if (t.requires_grad(x)) {
          auto& dx = t.grad(x);
          if (training) {
            const T inv_m = T{1} / static_cast<T>(m);
            for (std::size_t i = 0; i < g.size(); ++i) {
              const std::size_t ch = i % c;
              dx[i] += gv[ch] * inv_std[ch] * inv_m *
                       (static_cast<T>(m) * g[i] - sum_g[ch] - xhat[i] * sum_gx[ch]);
            }
          } else {
            for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * gv[i % c] * inv_std[i % c];
          }
        }
      });
}

}  // namespace

template <typename T>
Var batch_norm_train(Tape<T>& tape, Var x, Var gamma, Var beta, Tensor<T>& running_mean,
                     Tensor<T>& running_var, T momentum, T eps) {
  return batch_norm_impl<T>(tape, x, gamma, beta, &running_mean, &running_var, nullptr, nullptr,
                            momentum, eps);
}

template <typename T>
Var batch_norm_eval(Tape<T>& tape, Var x, Var gamma, Var beta, const Tensor<T>& mean,
                    const Tensor<T>& var, T eps) {
  return batch_norm_impl<T>(tape, x, gamma, beta, nullptr, nullptr, &mean, &var, T{0}, eps);
}

template <typename T>
Var softmax_rows(Tape<T>& tape, Var x) {
  const auto& xv = tape.value(x);
  require_rank("softmax_rows", xv.shape(), 2);
  const std::size_t n = xv.dim(0), k = xv.dim(1);
  Tensor<T> out(xv.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = softmax(std::span<const T>(xv.data() + r * k, k));
    std::copy(row.begin(), row.end(), out.data() + r * k);
  }
  Var y{tape.size()};
  return tape.record(std::move(out), tape.requires_grad(x), [x, y, n, k](Tape<T>& t, const Tensor<T>& g) {
    const auto& yv = t.value(y);
    auto& dx = t.grad(x);
    for (std::size_t r = 0; r < n; ++r) {
      T dot = 0;
      for (std::size_t j = 0; j < k; ++j) dot += g[r * k + j] * yv[r * k + j];
      for (std::size_t j = 0; j < k; ++j) dx[r * k + j] += yv[r * k + j] * (g[r * k + j] - dot);
    }
  });
}

template <typename T>
Var cross_entropy(Tape<T>& tape, Var probs, std::span<const std::size_t> targets) {
  const auto& pv = tape.value(probs);
  require_rank("cross_entropy", pv.shape(), 2);
  const std::size_t n = pv.dim(0), k = pv.dim(1);
  if (targets.size() != n) {
    shape_error("cross_entropy", std::to_string(targets.size()) + " targets for " +
                                     std::to_string(n) + " rows");
  }
  double total = 0;
  for (std::size_t r = 0; r < n; ++r) {
    total += numerics::cross_entropy(std::span<const T>(pv.data() + r * k, k), targets[r]);
  }
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  return tape.record(
      Tensor<T>({1}, std::vector<T>{static_cast<T>(total / static_cast<double>(n))}),
      tape.requires_grad(probs), [probs, n, k, tgt = std::move(tgt)](Tape<T>& t, const Tensor<T>& g) {
        const auto& pv = t.value(probs);
        auto& dp = t.grad(probs);
        const T scale_factor = g[0] / static_cast<T>(n);
        for (std::size_t r = 0; r < n; ++r) {
          const T p = pv[r * k + tgt[r]];
          if (static_cast<double>(p) > kLogFloor) dp[r * k + tgt[r]] -= scale_factor / p;
        }
      });
}

template <typename T>
Var scatter_add_rows(Tape<T>& tape, Var base, Var src, std::span<const std::size_t> rows) {
  const auto& bv = tape.value(base);
  const auto& sv = tape.value(src);
  require_rank("scatter_add_rows", bv.shape(), 2);
  require_rank("scatter_add_rows", sv.shape(), 2);
  const std::size_t k = bv.dim(1);
  if (sv.dim(1) != k || sv.dim(0) != rows.size()) {
    shape_error("scatter_add_rows", "source " + shape_string(sv.shape()) + " for " +
                                        std::to_string(rows.size()) + " rows of width " +
                                        std::to_string(k));
  }
  Tensor<T> out = bv;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= bv.dim(0)) shape_error("scatter_add_rows", "row index out of range");
    for (std::size_t j = 0; j < k; ++j) out[rows[i] * k + j] += sv[i * k + j];
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  const bool rg = tape.requires_grad(base) || tape.requires_grad(src);
  return tape.record(std::move(out), rg, [base, src, k, idx = std::move(idx)](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(base)) add_into(t.grad(base), g);
    if (t.requires_grad(src)) {
      auto& ds = t.grad(src);
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < k; ++j) ds[i * k + j] += g[idx[i] * k + j];
    }
  });
}

template <typename T>
Var slice_cols(Tape<T>& tape, Var x, std::size_t begin, std::size_t end) {
  const auto& xv = tape.value(x);
  require_rank("slice_cols", xv.shape(), 2);
  const std::size_t n = xv.dim(0), d = xv.dim(1);
  if (begin >= end || end > d) shape_error("slice_cols", "bad column range");
  const std::size_t w = end - begin;
  Tensor<T> out({n, w});
  for (std::size_t r = 0; r < n; ++r)
    std::copy(xv.data() + r * d + begin, xv.data() + r * d + end, out.data() + r * w);
  return tape.record(std::move(out), tape.requires_grad(x), [x, n, d, begin, w](Tape<T>& t, const Tensor<T>& g) {
    auto& dx = t.grad(x);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < w; ++j) dx[r * d + begin + j] += g[r * w + j];
  });
}

#define CBGT_INSTANTIATE(T)                                                                       \
  template Var add<T>(Tape<T>&, Var, Var);                                                        \
  template Var mul<T>(Tape<T>&, Var, Var);                                                        \
  template Var scale<T>(Tape<T>&, Var, T);                                                        \
  template Var sum<T>(Tape<T>&, Var);                                                             \
  template Var reshape<T>(Tape<T>&, Var, Shape);                                                  \
  template Var matmul<T>(Tape<T>&, Var, Var);                                                     \
  template Var dense<T>(Tape<T>&, Var, Var, Var);                                                 \
  template Var conv2d<T>(Tape<T>&, Var, Var, Var, std::size_t, std::size_t);                      \
  template Var avg_pool<T>(Tape<T>&, Var, std::size_t);                                           \
  template Var subsample<T>(Tape<T>&, Var, Var, Var, std::size_t);                                \
  template Var relu<T>(Tape<T>&, Var);                                                            \
  template Var tanh<T>(Tape<T>&, Var);                                                            \
  template Var sigmoid<T>(Tape<T>&, Var);                                                         \
  template Var batch_norm_train<T>(Tape<T>&, Var, Var, Var, Tensor<T>&, Tensor<T>&, T, T);        \
  template Var batch_norm_eval<T>(Tape<T>&, Var, Var, Var, const Tensor<T>&, const Tensor<T>&, T); \
  template Var softmax_rows<T>(Tape<T>&, Var);                                                    \
  template Var cross_entropy<T>(Tape<T>&, Var, std::span<const std::size_t>);                     \
  template Var scatter_add_rows<T>(Tape<T>&, Var, Var, std::span<const std::size_t>);             \
  template Var slice_cols<T>(Tape<T>&, Var, std::size_t, std::size_t);

CBGT_INSTANTIATE(float)
CBGT_INSTANTIATE(double)
#undef CBGT_INSTANTIATE

}  // namespace cbgt::numerics
