// Copyright 2026 The panoavoid Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "panoavoid/tensor.hpp"

namespace panoavoid {

namespace detail {

inline void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) +
                     " vs " + shape_str(b));
  }
}

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <class T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <class T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

// Elementwise map y = f(x) with dy/dx = df(x, y).
template <class T, class F, class DF>
Tensor<T> unary(const Tensor<T>& x, F f, DF df) {
  const std::size_t n = x.size();
  std::vector<T> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = f(x[i]);
  if (active_tape<T>() == nullptr || !x.requires_grad()) {
    return Tensor<T>(x.shape(), std::move(y));
  }
  std::vector<T> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = df(x[i], y[i]);
  return make_result<T>(x.shape(), std::move(y), {&x},
                        [d = std::move(d)](const T* g, const GradRefs<T>& gr) {
                          T* gx = gr[0];
                          for (std::size_t i = 0; i < d.size(); ++i) gx[i] += g[i] * d[i];
                        });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("add", a.shape(), b.shape());
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] + b[i];
  const std::size_t n = y.size();
  return detail::make_result<T>(a.shape(), std::move(y), {&a, &b},
                                [n](const T* g, const GradRefs<T>& gr) {
                                  for (int k = 0; k < 2; ++k) {
                                    if (T* gx = gr[k]) {
                                      for (std::size_t i = 0; i < n; ++i) gx[i] += g[i];
                                    }
                                  }
                                });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("sub", a.shape(), b.shape());
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] - b[i];
  const std::size_t n = y.size();
  return detail::make_result<T>(a.shape(), std::move(y), {&a, &b},
                                [n](const T* g, const GradRefs<T>& gr) {
                                  if (T* ga = gr[0]) {
                                    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
                                  }
                                  if (T* gb = gr[1]) {
                                    for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
                                  }
                                });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("mul", a.shape(), b.shape());
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * b[i];
  return detail::make_result<T>(a.shape(), std::move(y), {&a, &b},
                                [a, b](const T* g, const GradRefs<T>& gr) {
                                  const std::size_t n = a.size();
                                  if (T* ga = gr[0]) {
                                    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * b[i];
                                  }
                                  if (T* gb = gr[1]) {
                                    for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * a[i];
                                  }
                                });
}

/// Multiplies every element of `x` by the scalar tensor `s`.
template <class T>
Tensor<T> mul_scalar(const Tensor<T>& x, const Tensor<T>& s) {
  if (s.size() != 1) throw ShapeError("mul_scalar: factor must be a scalar");
  const T sv = s[0];
  std::vector<T> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * sv;
  return detail::make_result<T>(x.shape(), std::move(y), {&x, &s},
                                [x, sv](const T* g, const GradRefs<T>& gr) {
                                  const std::size_t n = x.size();
                                  if (T* gx = gr[0]) {
                                    for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * sv;
                                  }
                                  if (T* gs = gr[1]) {
                                    T acc = 0;
                                    for (std::size_t i = 0; i < n; ++i) acc += g[i] * x[i];
                                    gs[0] += acc;
                                  }
                                });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  return detail::unary(x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
  return detail::unary(x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> neg(const Tensor<T>& x) {
  return scale(x, T(-1));
}

template <class T>
Tensor<T> square(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return v * v; }, [](T v, T) { return 2 * v; });
}

template <class T>
Tensor<T> reciprocal(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return T(1) / v; }, [](T, T y) { return -y * y; });
}

// ---------------------------------------------------------------------------
// Activations and robust penalties

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.01)) {
  return detail::unary(
      x, [slope](T v) { return v > 0 ? v : slope * v; },
      [slope](T v, T) { return v > 0 ? T(1) : slope; });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return leaky_relu(x, T(0));
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary(
      x,
      [](T v) {
        if (v >= 0) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return std::tanh(v); },
                       [](T, T y) { return T(1) - y * y; });
}

namespace detail {
template <class T>
T softplus_value(T v) {
  // log(1 + e^v) without overflow.
  return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}
template <class T>
T logistic(T v) {
  if (v >= 0) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}
}  // namespace detail

/// softplus(x) = log(1 + exp(beta x)) / beta.
template <class T>
Tensor<T> softplus(const Tensor<T>& x, T beta = T(1)) {
  return detail::unary(
      x, [beta](T v) { return detail::softplus_value(beta * v) / beta; },
      [beta](T v, T) { return detail::logistic(beta * v); });
}

/// Huber-style penalty: 0.5 x^2 / beta inside |x| < beta, |x| - 0.5 beta outside.
template <class T>
Tensor<T> smooth_l1(const Tensor<T>& x, T beta = T(1)) {
  return detail::unary(
      x,
      [beta](T v) {
        const T a = std::abs(v);
        return a < beta ? T(0.5) * v * v / beta : a - T(0.5) * beta;
      },
      [beta](T v, T) {
        if (std::abs(v) < beta) return v / beta;
        return v > 0 ? T(1) : T(-1);
      });
}

// ---------------------------------------------------------------------------
// Reductions and reshaping

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  const std::size_t n = x.size();
  return detail::make_result<T>(Shape{1}, {acc}, {&x},
                                [n](const T* g, const GradRefs<T>& gr) {
                                  T* gx = gr[0];
                                  for (std::size_t i = 0; i < n; ++i) gx[i] += g[0];
                                });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.size() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

template <class T>
Tensor<T> dot(const Tensor<T>& a, const Tensor<T>& b) {
  return sum(mul(a, b));
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(shape));
  }
  const std::size_t n = x.size();
  return detail::make_result<T>(std::move(shape), x.values(), {&x},
                                [n](const T* g, const GradRefs<T>& gr) {
                                  T* gx = gr[0];
                                  for (std::size_t i = 0; i < n; ++i) gx[i] += g[i];
                                });
}

template <class T>
Tensor<T> flatten(const Tensor<T>& x) {
  return reshape(x, Shape{x.size()});
}

/// Concatenates along the leading axis; trailing extents must agree.
template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t lead = 0;
  std::vector<T> y;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.rank() == 0) throw ShapeError("concat: scalar input");
    Shape pt(p.shape().begin() + 1, p.shape().end());
    if (pt != tail) {
      throw ShapeError("concat: trailing extents " + shape_str(pt) + " vs " +
                       shape_str(tail));
    }
    offsets.push_back(y.size());
    lead += p.dim(0);
    y.insert(y.end(), p.data().begin(), p.data().end());
  }
  Shape shape{lead};
  shape.insert(shape.end(), tail.begin(), tail.end());
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) sizes.push_back(p.size());
  return detail::make_result<T>(
      std::move(shape), std::move(y), parts,
      [offsets, sizes](const T* g, const GradRefs<T>& gr) {
        for (std::size_t k = 0; k < sizes.size(); ++k) {
          if (T* gx = gr[k]) {
            for (std::size_t i = 0; i < sizes[k]; ++i) gx[i] += g[offsets[k] + i];
          }
        }
      });
}

/// Contiguous range [begin, begin + len) of a 1-D tensor.
template <class T>
Tensor<T> slice(const Tensor<T>& x, std::size_t begin, std::size_t len) {
  if (x.rank() != 1 || begin + len > x.size()) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + len) + ") outside " +
                     shape_str(x.shape()));
  }
  std::vector<T> y(x.data().begin() + begin, x.data().begin() + begin + len);
  return detail::make_result<T>(Shape{len}, std::move(y), {&x},
                                [begin, len](const T* g, const GradRefs<T>& gr) {
                                  T* gx = gr[0];
                                  for (std::size_t i = 0; i < len; ++i) gx[begin + i] += g[i];
                                });
}

// ---------------------------------------------------------------------------
// Vector norms with saturation

/// x * s * tanh(|x| / s) / |x|: a smooth norm limiter with slope 1 at the
/// origin and asymptote s.
template <class T>
Tensor<T> smooth_clip_norm(const Tensor<T>& x, T s) {
  const std::size_t n_el = x.size();
  T n2 = 0;
  for (T v : x.data()) n2 += v * v;
  const T n = std::sqrt(n2);
  const T r = n / s;
  // f(n) = s tanh(n/s) / n and f'(n) / n, both by series near zero.
  T f, fp_over_n;
  if (r < T(1e-4)) {
    f = T(1) - r * r / T(3);
    fp_over_n = (T(-2) / T(3)) / (s * s);
  } else {
    const T th = std::tanh(r);
    f = s * th / n;
    const T fp = (T(1) - th * th) / n - s * th / n2;
    fp_over_n = fp / n;
  }
  std::vector<T> y(n_el);
  for (std::size_t i = 0; i < n_el; ++i) y[i] = x[i] * f;
  return detail::make_result<T>(
      x.shape(), std::move(y), {&x},
      [x, f, fp_over_n](const T* g, const GradRefs<T>& gr) {
        // dy_i/dx_j = f delta_ij + x_i x_j f'(n)/n
        T gx_dot = 0;
        for (std::size_t i = 0; i < x.size(); ++i) gx_dot += g[i] * x[i];
        T* gx = gr[0];
        for (std::size_t j = 0; j < x.size(); ++j) gx[j] += g[j] * f + x[j] * gx_dot * fp_over_n;
      });
}

/// Rescales x to norm s when |x| > s; identity otherwise.
template <class T>
Tensor<T> clip_norm(const Tensor<T>& x, T s) {
  T n2 = 0;
  for (T v : x.data()) n2 += v * v;
  const T n = std::sqrt(n2);
  if (n <= s) {
    return detail::unary(x, [](T v) { return v; }, [](T, T) { return T(1); });
  }
  std::vector<T> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * s / n;
  return detail::make_result<T>(
      x.shape(), std::move(y), {&x}, [x, s, n](const T* g, const GradRefs<T>& gr) {
        T gx_dot = 0;
        for (std::size_t i = 0; i < x.size(); ++i) gx_dot += g[i] * x[i];
        T* gx = gr[0];
        const T f = s / n;
        const T c = -s / (n * n * n);
        for (std::size_t j = 0; j < x.size(); ++j) gx[j] += g[j] * f + x[j] * gx_dot * c;
      });
}

// ---------------------------------------------------------------------------
// Dense layers

/// y = W x (+ b) for x of shape [D], W of shape [O, D].
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b = {}) {
  if (x.rank() != 1 || w.rank() != 2 || w.dim(1) != x.dim(0)) {
    throw ShapeError("linear: weight " + shape_str(w.shape()) +
                     " incompatible with input " + shape_str(x.shape()));
  }
  const std::size_t out = w.dim(0), in = w.dim(1);
  if (b.defined() && (b.rank() != 1 || b.dim(0) != out)) {
    throw ShapeError("linear: bias " + shape_str(b.shape()) + " for " +
                     std::to_string(out) + " outputs");
  }
  std::vector<T> y(out);
  detail::VecMap<T> ym(y.data(), out);
  ym.noalias() = detail::ConstMatMap<T>(w.data().data(), out, in) *
                 detail::ConstVecMap<T>(x.data().data(), in);
  if (b.defined()) ym += detail::ConstVecMap<T>(b.data().data(), out);
  auto rule = [x, w, out, in](const T* g, const GradRefs<T>& gr) {
    detail::ConstVecMap<T> gm(g, out);
    if (T* gx = gr[0]) {
      detail::VecMap<T>(gx, in).noalias() +=
          detail::ConstMatMap<T>(w.data().data(), out, in).transpose() * gm;
    }
    if (T* gw = gr[1]) {
      detail::MatMap<T>(gw, out, in).noalias() +=
          gm * detail::ConstVecMap<T>(x.data().data(), in).transpose();
    }
    if (gr.in.size() > 2) {
      if (T* gb = gr[2]) detail::VecMap<T>(gb, out) += gm;
    }
  };
  if (b.defined()) {
    return detail::make_result<T>(Shape{out}, std::move(y), {&x, &w, &b}, rule);
  }
  return detail::make_result<T>(Shape{out}, std::move(y), {&x, &w}, rule);
}

// ---------------------------------------------------------------------------
// Convolution

enum class PadMode { zero, circular_longitude };

namespace detail {

// Pads [C,H,W] by `pad` on every side; circular mode wraps the width axis.
template <class T>
std::vector<T> pad_input(std::span<const T> in, std::size_t c, std::size_t h,
                         std::size_t w, std::size_t pad, PadMode mode) {
  const std::size_t hp = h + 2 * pad, wp = w + 2 * pad;
  std::vector<T> out(c * hp * wp, T(0));
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      const T* src = in.data() + (ch * h + y) * w;
      T* dst = out.data() + (ch * hp + y + pad) * wp;
      std::copy(src, src + w, dst + pad);
      if (mode == PadMode::circular_longitude) {
        for (std::size_t k = 0; k < pad; ++k) {
          dst[pad - 1 - k] = src[(w - 1 - k % w)];
          dst[pad + w + k] = src[k % w];
        }
      }
    }
  }
  return out;
}

template <class T>
void unpad_accumulate(const std::vector<T>& gpad, T* gin, std::size_t c,
                      std::size_t h, std::size_t w, std::size_t pad, PadMode mode) {
  const std::size_t hp = h + 2 * pad, wp = w + 2 * pad;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      const T* src = gpad.data() + (ch * hp + y + pad) * wp;
      T* dst = gin + (ch * h + y) * w;
      for (std::size_t x = 0; x < w; ++x) dst[x] += src[pad + x];
      if (mode == PadMode::circular_longitude) {
        for (std::size_t k = 0; k < pad; ++k) {
          dst[w - 1 - k % w] += src[pad - 1 - k];
          dst[k % w] += src[pad + w + k];
        }
      }
    }
  }
}

}  // namespace detail

/// Cross-correlation of input [C,H,W] with weight [O,C,kH,kW] plus bias [O].
/// `padding` cells are added on every side before the kernel slides.
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding = 0,
                 PadMode pad_mode = PadMode::zero) {
  if (input.rank() != 3) {
    throw ShapeError("conv2d: input must be [C,H,W], got " + shape_str(input.shape()));
  }
  if (weight.rank() != 4 || weight.dim(1) != input.dim(0)) {
    throw ShapeError("conv2d: weight " + shape_str(weight.shape()) +
                     " incompatible with input " + shape_str(input.shape()));
  }
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(0)) {
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " for " +
                     std::to_string(weight.dim(0)) + " output channels");
  }
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t o = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  const std::size_t hp = h + 2 * padding, wp = w + 2 * padding;
  if (kh > hp || kw > wp) {
    throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                     " larger than padded input " + std::to_string(hp) + "x" +
                     std::to_string(wp));
  }
  const std::size_t ho = (hp - kh) / stride + 1, wo = (wp - kw) / stride + 1;
  const std::size_t kdim = c * kh * kw, npix = ho * wo;

  std::vector<T> padded =
      padding ? detail::pad_input<T>(input.data(), c, h, w, padding, pad_mode)
              : input.values();
  std::vector<T> cols(kdim * npix);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        T* row = cols.data() + ((ch * kh + ky) * kw + kx) * npix;
        for (std::size_t y = 0; y < ho; ++y) {
          const T* src = padded.data() + (ch * hp + y * stride + ky) * wp + kx;
          for (std::size_t x = 0; x < wo; ++x) row[y * wo + x] = src[x * stride];
        }
      }
    }
  }
  std::vector<T> y(o * npix);
  detail::MatMap<T> ym(y.data(), o, npix);
  ym.noalias() = detail::ConstMatMap<T>(weight.data().data(), o, kdim) *
                 detail::ConstMatMap<T>(cols.data(), kdim, npix);
  ym.colwise() += detail::ConstVecMap<T>(bias.data().data(), o);

  auto rule = [weight, cols = std::move(cols), c, h, w, o, kh, kw, ho, wo, hp, wp,
               stride, padding, pad_mode](const T* g, const GradRefs<T>& gr) {
    const std::size_t kdim = c * kh * kw, npix = ho * wo;
    detail::ConstMatMap<T> gm(g, o, npix);
    if (T* gw = gr[1]) {
      detail::MatMap<T>(gw, o, kdim).noalias() +=
          gm * detail::ConstMatMap<T>(cols.data(), kdim, npix).transpose();
    }
    if (T* gb = gr[2]) detail::VecMap<T>(gb, o) += gm.rowwise().sum();
    if (T* gin = gr[0]) {
      std::vector<T> gcols(kdim * npix);
      detail::MatMap<T>(gcols.data(), kdim, npix).noalias() =
          detail::ConstMatMap<T>(weight.data().data(), o, kdim).transpose() * gm;
      std::vector<T> gpad(c * hp * wp, T(0));
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const T* row = gcols.data() + ((ch * kh + ky) * kw + kx) * npix;
            for (std::size_t yy = 0; yy < ho; ++yy) {
              T* dst = gpad.data() + (ch * hp + yy * stride + ky) * wp + kx;
              for (std::size_t xx = 0; xx < wo; ++xx) dst[xx * stride] += row[yy * wo + xx];
            }
          }
        }
      }
      if (padding) {
        detail::unpad_accumulate(gpad, gin, c, h, w, padding, pad_mode);
      } else {
        for (std::size_t i = 0; i < gpad.size(); ++i) gin[i] += gpad[i];
      }
    }
  };
  return detail::make_result<T>(Shape{o, ho, wo}, std::move(y), {&input, &weight, &bias},
                                std::move(rule));
}

// ---------------------------------------------------------------------------
// Bilinear resampling

/// Precomputed gather: every output location blends four input pixels.
struct BilinearPlan {
  std::size_t in_h = 0, in_w = 0, out_h = 0, out_w = 0;
  std::vector<std::uint32_t> index;  // 4 per output location
  std::vector<double> weight;        // 4 per output location
};

/// Builds a plan from continuous (row, col) pixel coordinates laid out as
/// [H', W', 2]. Pixel centres sit at integer coordinates. With `wrap_width`
/// columns wrap around; rows are always clamped to the border.
inline BilinearPlan make_bilinear_plan(std::size_t in_h, std::size_t in_w,
                                       std::size_t out_h, std::size_t out_w,
                                       std::span<const double> coords, bool wrap_width) {
  if (coords.size() != out_h * out_w * 2) {
    throw ShapeError("grid_sample: expected " + std::to_string(out_h * out_w * 2) +
                     " coordinates, got " + std::to_string(coords.size()));
  }
  BilinearPlan plan;
  plan.in_h = in_h;
  plan.in_w = in_w;
  plan.out_h = out_h;
  plan.out_w = out_w;
  const std::size_t n = out_h * out_w;
  plan.index.resize(4 * n);
  plan.weight.resize(4 * n);
  const auto ih = static_cast<long>(in_h), iw = static_cast<long>(in_w);
  auto col_index = [&](long cx) {
    if (wrap_width) return ((cx % iw) + iw) % iw;
    return std::clamp(cx, 0L, iw - 1);
  };
  for (std::size_t k = 0; k < n; ++k) {
    const double r = coords[2 * k], cc = coords[2 * k + 1];
    const double r0f = std::floor(r), c0f = std::floor(cc);
    const double fr = r - r0f, fc = cc - c0f;
    const long r0 = static_cast<long>(r0f), c0 = static_cast<long>(c0f);
    const long ra = std::clamp(r0, 0L, ih - 1), rb = std::clamp(r0 + 1, 0L, ih - 1);
    const long ca = col_index(c0), cb = col_index(c0 + 1);
    plan.index[4 * k + 0] = static_cast<std::uint32_t>(ra * iw + ca);
    plan.index[4 * k + 1] = static_cast<std::uint32_t>(ra * iw + cb);
    plan.index[4 * k + 2] = static_cast<std::uint32_t>(rb * iw + ca);
    plan.index[4 * k + 3] = static_cast<std::uint32_t>(rb * iw + cb);
    plan.weight[4 * k + 0] = (1 - fr) * (1 - fc);
    plan.weight[4 * k + 1] = (1 - fr) * fc;
    plan.weight[4 * k + 2] = fr * (1 - fc);
    plan.weight[4 * k + 3] = fr * fc;
  }
  return plan;
}

/// Applies a plan channel by channel; differentiable in the input values.
template <class T>
Tensor<T> grid_sample(const Tensor<T>& input, std::shared_ptr<const BilinearPlan> plan) {
  if (input.rank() != 3 || input.dim(1) != plan->in_h || input.dim(2) != plan->in_w) {
    throw ShapeError("grid_sample: input " + shape_str(input.shape()) +
                     " does not match plan " + std::to_string(plan->in_h) + "x" +
                     std::to_string(plan->in_w));
  }
  const std::size_t c = input.dim(0), in_n = plan->in_h * plan->in_w;
  const std::size_t out_n = plan->out_h * plan->out_w;
  std::vector<T> y(c * out_n);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* src = input.data().data() + ch * in_n;
    T* dst = y.data() + ch * out_n;
    for (std::size_t k = 0; k < out_n; ++k) {
      T acc = 0;
      for (int j = 0; j < 4; ++j) {
        acc += static_cast<T>(plan->weight[4 * k + j]) * src[plan->index[4 * k + j]];
      }
      dst[k] = acc;
    }
  }
  return detail::make_result<T>(
      Shape{c, plan->out_h, plan->out_w}, std::move(y), {&input},
      [plan, c, in_n, out_n](const T* g, const GradRefs<T>& gr) {
        T* gin = gr[0];
        for (std::size_t ch = 0; ch < c; ++ch) {
          const T* gsrc = g + ch * out_n;
          T* gdst = gin + ch * in_n;
          for (std::size_t k = 0; k < out_n; ++k) {
            for (int j = 0; j < 4; ++j) {
              gdst[plan->index[4 * k + j]] += static_cast<T>(plan->weight[4 * k + j]) * gsrc[k];
            }
          }
        }
      });
}

/// Bilinear sampling of input [C,H,W] at coords [H',W',2] (row, col).
template <class T>
Tensor<T> grid_sample_bilinear(const Tensor<T>& input, const Tensor<double>& coords,
                               bool wrap_width) {
  if (input.rank() != 3) {
    throw ShapeError("grid_sample: input must be [C,H,W], got " + shape_str(input.shape()));
  }
  if (coords.rank() != 3 || coords.dim(2) != 2) {
    throw ShapeError("grid_sample: coords must be [H',W',2], got " +
                     shape_str(coords.shape()));
  }
  auto plan = std::make_shared<const BilinearPlan>(
      make_bilinear_plan(input.dim(1), input.dim(2), coords.dim(0), coords.dim(1),
                         coords.data(), wrap_width));
  return grid_sample(input, std::move(plan));
}

// ---------------------------------------------------------------------------
// Precision conversion (values only; used for inputs and checkpoints)

template <class To, class From>
Tensor<To> cast(const Tensor<From>& x) {
  std::vector<To> y(x.data().begin(), x.data().end());
  return Tensor<To>(x.shape(), std::move(y));
}

}  // namespace panoavoid
