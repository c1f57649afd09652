// SPDX-FileCopyrightText: Copyright (c) 2026 The vidta-cpp Authors.
// SPDX-License-Identifier: Apache-2.0

//! @file Differentiable primitives. Every op computes its forward value eagerly
//!       and records a backward rule on the inputs' tape.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "vidta/tensor/random.hpp"
#include "vidta/tensor/tape.hpp"
#include "vidta/tensor/tensor.hpp"

namespace vidta {

namespace detail {

inline void require_shape(bool ok, const char* op, const Shape& a, const Shape& b) {
  if (!ok) throw ShapeMismatch(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

inline void require_rank(const char* op, const Shape& a, std::size_t rank) {
  if (a.size() != rank) {
    throw ShapeMismatch(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(a));
  }
}

//! True when `b` equals `a` or matches its trailing axes.
inline bool broadcasts_over_leading(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) return false;
  return std::equal(b.rbegin(), b.rend(), a.rbegin());
}

template <typename T>
void accumulate(Tensor<T>& into, std::span<const T> from) {
  T* dst = into.data();
  for (std::size_t i = 0; i < from.size(); ++i) dst[i] += from[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

//! [m x k] * [k x n] -> [m x n]
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  detail::require_rank("matmul", av.shape(), 2);
  detail::require_rank("matmul", bv.shape(), 2);
  detail::require_shape(av.dim(1) == bv.dim(0), "matmul", av.shape(), bv.shape());
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor<T> out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    T* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = av[i * k + p];
      const T* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return a.tape().record(std::move(out), {a, b}, [a, b, m, k, n](Tape<T>&, const Tensor<T>& g) {
    const auto& av = a.value();
    const auto& bv = b.value();
    if (a.requires_grad()) {
      auto& ga = a.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          T acc = 0;
          const T* grow = g.data() + i * n;
          const T* brow = bv.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
    }
    if (b.requires_grad()) {
      auto& gb = b.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const T aip = av[i * k + p];
          const T* grow = g.data() + i * n;
          T* gbrow = gb.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
        }
    }
  });
}

//! Affine map over rows: x [m x in] * w [in x out] + bias [out].
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  const auto& bv = bias.value();
  detail::require_rank("linear", wv.shape(), 2);
  detail::require_shape(xv.cols() == wv.dim(0), "linear", xv.shape(), wv.shape());
  detail::require_shape(bv.size() == wv.dim(1), "linear", wv.shape(), bv.shape());
  const std::size_t m = xv.rows(), k = wv.dim(0), n = wv.dim(1);
  Shape shape = xv.shape().empty() ? Shape{n} : xv.shape();
  shape.back() = n;
  Tensor<T> out(shape);
  for (std::size_t i = 0; i < m; ++i) {
    T* orow = out.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) orow[j] = bv[j];
    for (std::size_t p = 0; p < k; ++p) {
      const T xip = xv[i * k + p];
      if (xip == T(0)) continue;
      const T* wrow = wv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += xip * wrow[j];
    }
  }
  return x.tape().record(std::move(out), {x, w, bias}, [x, w, bias, m, k, n](Tape<T>&, const Tensor<T>& g) {
    const auto& xv = x.value();
    const auto& wv = w.value();
    if (x.requires_grad()) {
      auto& gx = x.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          T acc = 0;
          const T* grow = g.data() + i * n;
          const T* wrow = wv.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * wrow[j];
          gx[i * k + p] += acc;
        }
    }
    if (w.requires_grad()) {
      auto& gw = w.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const T xip = xv[i * k + p];
          if (xip == T(0)) continue;
          const T* grow = g.data() + i * n;
          T* gwrow = gw.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gwrow[j] += xip * grow[j];
        }
    }
    if (bias.requires_grad()) {
      auto& gb = bias.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
  });
}

template <typename T>
Var<T> transpose(const Var<T>& x) {
  const auto& xv = x.value();
  detail::require_rank("transpose", xv.shape(), 2);
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  Tensor<T> out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = xv[i * n + j];
  return x.tape().record(std::move(out), {x}, [x, m, n](Tape<T>&, const Tensor<T>& g) {
    auto& gx = x.grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[j * m + i];
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x}, [x](Tape<T>&, const Tensor<T>& g) {
    detail::accumulate(x.grad(), g.values());
  });
}

// ---------------------------------------------------------------------------
// Elementwise

namespace detail {

enum class Binary { kAdd, kSub, kMul };

template <typename T>
Var<T> binary(const Var<T>& a, const Var<T>& b, Binary kind, const char* name) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_shape(broadcasts_over_leading(av.shape(), bv.shape()), name, av.shape(), bv.shape());
  const std::size_t n = av.size(), nb = bv.size();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T x = av[i], y = bv[i % nb];
    out[i] = kind == Binary::kAdd ? x + y : kind == Binary::kSub ? x - y : x * y;
  }
  return a.tape().record(std::move(out), {a, b}, [a, b, kind, n, nb](Tape<T>&, const Tensor<T>& g) {
    if (a.requires_grad()) {
      auto& ga = a.grad();
      if (kind == Binary::kMul) {
        const auto& bv = b.value();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bv[i % nb];
      } else {
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      }
    }
    if (b.requires_grad()) {
      auto& gb = b.grad();
      if (kind == Binary::kMul) {
        const auto& av = a.value();
        for (std::size_t i = 0; i < n; ++i) gb[i % nb] += g[i] * av[i];
      } else {
        const T sign = kind == Binary::kSub ? T(-1) : T(1);
        for (std::size_t i = 0; i < n; ++i) gb[i % nb] += sign * g[i];
      }
    }
  });
}

}  // namespace detail

//! Elementwise a + b; `b` may match only the trailing axes of `a`.
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return detail::binary(a, b, detail::Binary::kAdd, "add");
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return detail::binary(a, b, detail::Binary::kSub, "sub");
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return detail::binary(a, b, detail::Binary::kMul, "mul");
}

//! alpha * x + beta
template <typename T>
Var<T> affine(const Var<T>& x, T alpha, T beta) {
  const auto& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = alpha * xv[i] + beta;
  return x.tape().record(std::move(out), {x}, [x, alpha](Tape<T>&, const Tensor<T>& g) {
    auto& gx = x.grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += alpha * g[i];
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, T alpha) {
  return affine(x, alpha, T(0));
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  const auto& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
  return x.tape().record(std::move(out), {x}, [x](Tape<T>&, const Tensor<T>& g) {
    const auto& xv = x.value();
    auto& gx = x.grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > T(0)) gx[i] += g[i];
  });
}

template <typename T>
T sigmoid_value(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  const auto& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = sigmoid_value(xv[i]);
  // The output's tape id is the next slot; the rule reads y back from it.
  return x.tape().record(std::move(out), {x}, [x, id = x.tape().size()](Tape<T>& tape, const Tensor<T>& g) {
    const auto& y = tape.value(id);
    auto& gx = x.grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (T(1) - y[i]);
  });
}

//! Softmax over the last axis, stabilized by max subtraction.
template <typename T>
Var<T> softmax_lastdim(const Var<T>& x) {
  const auto& xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  Tensor<T> out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * cols;
    T* o = out.data() + r * cols;
    const T mx = *std::max_element(in, in + cols);
    T total = 0;
    for (std::size_t c = 0; c < cols; ++c) total += (o[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  return x.tape().record(std::move(out), {x}, [x, rows, cols, id = x.tape().size()](Tape<T>& tape, const Tensor<T>& g) {
    const auto& y = tape.value(id);
    auto& gx = x.grad();
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = 0;
      for (std::size_t c = 0; c < cols; ++c) dot += y[r * cols + c] * g[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - dot);
    }
  });
}

// ---------------------------------------------------------------------------
// Normalization

//! Per-row normalization over the last axis followed by gain and bias.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps = T(1e-5)) {
  const auto& xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  detail::require_shape(gain.value().size() == cols && bias.value().size() == cols, "layer_norm", xv.shape(),
                        gain.shape());
  Tensor<T> out(xv.shape());
  std::vector<T> xhat(xv.size()), rstd(rows);
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * cols;
    T mean = 0;
    for (std::size_t c = 0; c < cols; ++c) mean += in[c];
    mean /= T(cols);
    T var = 0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= T(cols);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      const T h = (in[c] - mean) * rstd[r];
      xhat[r * cols + c] = h;
      out[r * cols + c] = h * gv[c] + bv[c];
    }
  }
  return x.tape().record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, rows, cols, xhat = std::move(xhat), rstd = std::move(rstd)](Tape<T>&, const Tensor<T>& g) {
        const auto& gv = gain.value();
        if (gain.requires_grad()) {
          auto& gg = gain.grad();
          for (std::size_t i = 0; i < g.size(); ++i) gg[i % cols] += g[i] * xhat[i];
        }
        if (bias.requires_grad()) {
          auto& gb = bias.grad();
          for (std::size_t i = 0; i < g.size(); ++i) gb[i % cols] += g[i];
        }
        if (x.requires_grad()) {
          auto& gx = x.grad();
          for (std::size_t r = 0; r < rows; ++r) {
            T mean_d = 0, mean_dx = 0;
            for (std::size_t c = 0; c < cols; ++c) {
              const T d = g[r * cols + c] * gv[c];
              mean_d += d;
              mean_dx += d * xhat[r * cols + c];
            }
            mean_d /= T(cols);
            mean_dx /= T(cols);
            for (std::size_t c = 0; c < cols; ++c) {
              const T d = g[r * cols + c] * gv[c];
              gx[r * cols + c] += rstd[r] * (d - mean_d - xhat[r * cols + c] * mean_dx);
            }
          }
        }
      });
}

//! Running statistics of one batch-normalization layer.
template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);

  BatchNormState() = default;
  explicit BatchNormState(std::size_t channels)
      : running_mean(Shape{channels}, T(0)), running_var(Shape{channels}, T(1)) {}
};

//! Normalizes x [batch x channels] per channel. Training mode uses batch statistics
//! and updates the running estimates; eval mode is the fixed affine map they define.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, BatchNormState<T>& state,
                  bool train_mode) {
  const auto& xv = x.value();
  detail::require_rank("batch_norm", xv.shape(), 2);
  const std::size_t batch = xv.dim(0), cols = xv.dim(1);
  detail::require_shape(gain.value().size() == cols && state.running_mean.size() == cols, "batch_norm", xv.shape(),
                        gain.shape());
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  Tensor<T> out(xv.shape());
  std::vector<T> xhat(xv.size()), rstd(cols);
  for (std::size_t c = 0; c < cols; ++c) {
    T mean, var;
    if (train_mode) {
      mean = 0;
      for (std::size_t b = 0; b < batch; ++b) mean += xv[b * cols + c];
      mean /= T(batch);
      var = 0;
      for (std::size_t b = 0; b < batch; ++b) var += (xv[b * cols + c] - mean) * (xv[b * cols + c] - mean);
      const T unbiased = batch > 1 ? var / T(batch - 1) : var;
      var /= T(batch);
      state.running_mean[c] = (T(1) - state.momentum) * state.running_mean[c] + state.momentum * mean;
      state.running_var[c] = (T(1) - state.momentum) * state.running_var[c] + state.momentum * unbiased;
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    rstd[c] = T(1) / std::sqrt(var + state.eps);
    for (std::size_t b = 0; b < batch; ++b) {
      const T h = (xv[b * cols + c] - mean) * rstd[c];
      xhat[b * cols + c] = h;
      out[b * cols + c] = h * gv[c] + bv[c];
    }
  }
  return x.tape().record(std::move(out), {x, gain, bias},
                         [x, gain, bias, batch, cols, train_mode, xhat = std::move(xhat), rstd = std::move(rstd)](
                             Tape<T>&, const Tensor<T>& g) {
                           const auto& gv = gain.value();
                           if (gain.requires_grad()) {
                             auto& gg = gain.grad();
                             for (std::size_t i = 0; i < g.size(); ++i) gg[i % cols] += g[i] * xhat[i];
                           }
                           if (bias.requires_grad()) {
                             auto& gb = bias.grad();
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i % cols] += g[i];
                           }
                           if (!x.requires_grad()) return;
                           auto& gx = x.grad();
                           for (std::size_t c = 0; c < cols; ++c) {
                             if (!train_mode) {
                               for (std::size_t b = 0; b < batch; ++b)
                                 gx[b * cols + c] += g[b * cols + c] * gv[c] * rstd[c];
                               continue;
                             }
                             T mean_d = 0, mean_dx = 0;
                             for (std::size_t b = 0; b < batch; ++b) {
                               const T d = g[b * cols + c] * gv[c];
                               mean_d += d;
                               mean_dx += d * xhat[b * cols + c];
                             }
                             mean_d /= T(batch);
                             mean_dx /= T(batch);
                             for (std::size_t b = 0; b < batch; ++b) {
                               const T d = g[b * cols + c] * gv[c];
                               gx[b * cols + c] += rstd[c] * (d - mean_d - xhat[b * cols + c] * mean_dx);
                             }
                           }
                         });
}

// ---------------------------------------------------------------------------
// Sequence ops

//! Stride-1, dilation-1 convolution with symmetric zero padding.
//! x [channels_in x length], kernels [channels_out x channels_in x k], bias [channels_out]
//! -> [channels_out x (length + 2 * padding - k + 1)]
template <typename T>
Var<T> conv1d(const Var<T>& x, const Var<T>& kernels, const Var<T>& bias, std::size_t padding) {
  const auto& xv = x.value();
  const auto& wv = kernels.value();
  detail::require_rank("conv1d", xv.shape(), 2);
  detail::require_rank("conv1d", wv.shape(), 3);
  detail::require_shape(wv.dim(1) == xv.dim(0), "conv1d", xv.shape(), wv.shape());
  detail::require_shape(bias.value().size() == wv.dim(0), "conv1d", wv.shape(), bias.shape());
  const std::size_t cin = xv.dim(0), len = xv.dim(1), cout = wv.dim(0), k = wv.dim(2);
  if (len + 2 * padding < k) throw ShapeMismatch("conv1d: kernel longer than padded input " + shape_str(xv.shape()));
  const std::size_t lout = len + 2 * padding - k + 1;
  // Valid output range for tap s: 0 <= t + s - padding < len.
  auto range = [=](std::size_t s) {
    const std::size_t lo = padding > s ? padding - s : 0;
    const std::size_t hi = std::min(lout, len + padding - s);
    return std::pair{lo, std::max(lo, hi)};
  };
  Tensor<T> out(Shape{cout, lout});
  const auto& bv = bias.value();
  for (std::size_t o = 0; o < cout; ++o) {
    T* orow = out.data() + o * lout;
    std::fill(orow, orow + lout, bv[o]);
    for (std::size_t c = 0; c < cin; ++c) {
      const T* xrow = xv.data() + c * len;
      for (std::size_t s = 0; s < k; ++s) {
        const T w = wv[(o * cin + c) * k + s];
        const auto [lo, hi] = range(s);
        const T* src = xrow + (lo + s - padding);
        for (std::size_t t = lo; t < hi; ++t) orow[t] += w * src[t - lo];
      }
    }
  }
  return x.tape().record(std::move(out), {x, kernels, bias},
                         [x, kernels, bias, cin, len, cout, k, lout, padding, range](Tape<T>&, const Tensor<T>& g) {
                           const auto& xv = x.value();
                           const auto& wv = kernels.value();
                           if (bias.requires_grad()) {
                             auto& gb = bias.grad();
                             for (std::size_t o = 0; o < cout; ++o)
                               for (std::size_t t = 0; t < lout; ++t) gb[o] += g[o * lout + t];
                           }
                           const bool need_x = x.requires_grad(), need_w = kernels.requires_grad();
                           Tensor<T>* gx = need_x ? &x.grad() : nullptr;
                           Tensor<T>* gw = need_w ? &kernels.grad() : nullptr;
                           for (std::size_t o = 0; o < cout; ++o) {
                             const T* grow = g.data() + o * lout;
                             for (std::size_t c = 0; c < cin; ++c) {
                               for (std::size_t s = 0; s < k; ++s) {
                                 const auto [lo, hi] = range(s);
                                 const std::size_t offset = c * len + lo + s - padding;
                                 const std::size_t widx = (o * cin + c) * k + s;
                                 if (need_w) {
                                   T acc = 0;
                                   const T* src = xv.data() + offset;
                                   for (std::size_t t = lo; t < hi; ++t) acc += grow[t] * src[t - lo];
                                   (*gw)[widx] += acc;
                                 }
                                 if (need_x) {
                                   const T w = wv[widx];
                                   T* dst = gx->data() + offset;
                                   for (std::size_t t = lo; t < hi; ++t) dst[t - lo] += w * grow[t];
                                 }
                               }
                             }
                           }
                         });
}

//! Per-channel maximum over the length axis: [channels x length] -> [channels].
template <typename T>
Var<T> maxpool_global(const Var<T>& x) {
  const auto& xv = x.value();
  detail::require_rank("maxpool_global", xv.shape(), 2);
  const std::size_t ch = xv.dim(0), len = xv.dim(1);
  if (len == 0) throw ShapeMismatch("maxpool_global: empty length axis");
  Tensor<T> out(Shape{ch});
  std::vector<std::size_t> arg(ch);
  for (std::size_t c = 0; c < ch; ++c) {
    const T* row = xv.data() + c * len;
    arg[c] = static_cast<std::size_t>(std::max_element(row, row + len) - row);
    out[c] = row[arg[c]];
  }
  return x.tape().record(std::move(out), {x}, [x, len, arg = std::move(arg)](Tape<T>&, const Tensor<T>& g) {
    auto& gx = x.grad();
    for (std::size_t c = 0; c < arg.size(); ++c) gx[c * len + arg[c]] += g[c];
  });
}

//! Rows of `table` selected by `indices` -> [indices.size() x width].
template <typename T>
Var<T> embedding_lookup(const Var<T>& table, std::span<const std::size_t> indices) {
  const auto& tv = table.value();
  detail::require_rank("embedding_lookup", tv.shape(), 2);
  const std::size_t vocab = tv.dim(0), width = tv.dim(1);
  Tensor<T> out(Shape{indices.size(), width});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= vocab) {
      throw ShapeMismatch("embedding_lookup: index " + std::to_string(indices[i]) + " outside table " +
                          shape_str(tv.shape()));
    }
    std::copy_n(tv.data() + indices[i] * width, width, out.data() + i * width);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return table.tape().record(std::move(out), {table}, [table, width, idx = std::move(idx)](Tape<T>&, const Tensor<T>& g) {
    auto& gt = table.grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < width; ++c) gt[idx[i] * width + c] += g[i * width + c];
  });
}

template <typename T>
Var<T> gather_rows(const Var<T>& x, std::span<const std::size_t> rows) {
  return embedding_lookup(x, rows);
}

// ---------------------------------------------------------------------------
// Graph / segment ops

//! Sums each contiguous block of `block` columns: [m x (h * block)] -> [m x h].
template <typename T>
Var<T> block_sum(const Var<T>& x, std::size_t block) {
  const auto& xv = x.value();
  detail::require_rank("block_sum", xv.shape(), 2);
  if (block == 0 || xv.dim(1) % block != 0) {
    throw ShapeMismatch("block_sum: width " + std::to_string(xv.dim(1)) + " not divisible by " + std::to_string(block));
  }
  const std::size_t m = xv.dim(0), heads = xv.dim(1) / block;
  Tensor<T> out(Shape{m, heads});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t h = 0; h < heads; ++h) {
      T acc = 0;
      for (std::size_t c = 0; c < block; ++c) acc += xv[(i * heads + h) * block + c];
      out[i * heads + h] = acc;
    }
  return x.tape().record(std::move(out), {x}, [x, m, heads, block](Tape<T>&, const Tensor<T>& g) {
    auto& gx = x.grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t c = 0; c < block; ++c) gx[(i * heads + h) * block + c] += g[i * heads + h];
  });
}

//! Softmax of scores [m x h] over all rows sharing a segment id, per column.
//! Segments without rows are simply absent from the output.
template <typename T>
Var<T> segment_softmax(const Var<T>& scores, std::span<const std::size_t> segment, std::size_t segments) {
  const auto& sv = scores.value();
  detail::require_rank("segment_softmax", sv.shape(), 2);
  const std::size_t m = sv.dim(0), h = sv.dim(1);
  if (segment.size() != m) throw ShapeMismatch("segment_softmax: segment ids do not match rows of " + shape_str(sv.shape()));
  std::vector<T> mx(segments * h, -std::numeric_limits<T>::infinity());
  std::vector<T> total(segments * h, T(0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t c = 0; c < h; ++c) mx[segment[i] * h + c] = std::max(mx[segment[i] * h + c], sv[i * h + c]);
  Tensor<T> out(sv.shape());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t c = 0; c < h; ++c) {
      out[i * h + c] = std::exp(sv[i * h + c] - mx[segment[i] * h + c]);
      total[segment[i] * h + c] += out[i * h + c];
    }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t c = 0; c < h; ++c) out[i * h + c] /= total[segment[i] * h + c];
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  return scores.tape().record(
      std::move(out), {scores},
      [scores, m, h, segments, seg = std::move(seg), id = scores.tape().size()](Tape<T>& tape, const Tensor<T>& g) {
        const auto& y = tape.value(id);
        std::vector<T> dot(segments * h, T(0));
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t c = 0; c < h; ++c) dot[seg[i] * h + c] += y[i * h + c] * g[i * h + c];
        auto& gs = scores.grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t c = 0; c < h; ++c) gs[i * h + c] += y[i * h + c] * (g[i * h + c] - dot[seg[i] * h + c]);
      });
}

//! out[segment[e], k*block + c] += weights[e, k] * values[e, k*block + c]
//! weights [m x h], values [m x (h * block)] -> [segments x (h * block)]
template <typename T>
Var<T> weighted_scatter(const Var<T>& weights, const Var<T>& values, std::span<const std::size_t> segment,
                        std::size_t segments) {
  const auto& wv = weights.value();
  const auto& vv = values.value();
  detail::require_rank("weighted_scatter", wv.shape(), 2);
  detail::require_rank("weighted_scatter", vv.shape(), 2);
  const std::size_t m = wv.dim(0), h = wv.dim(1);
  detail::require_shape(vv.dim(0) == m && h > 0 && vv.dim(1) % h == 0 && segment.size() == m, "weighted_scatter",
                        wv.shape(), vv.shape());
  const std::size_t width = vv.dim(1), block = width / h;
  Tensor<T> out(Shape{segments, width});
  for (std::size_t e = 0; e < m; ++e)
    for (std::size_t k = 0; k < h; ++k) {
      const T w = wv[e * h + k];
      for (std::size_t c = 0; c < block; ++c) out[segment[e] * width + k * block + c] += w * vv[e * width + k * block + c];
    }
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  return weights.tape().record(std::move(out), {weights, values},
                               [weights, values, m, h, width, block, seg = std::move(seg)](Tape<T>&, const Tensor<T>& g) {
                                 const auto& wv = weights.value();
                                 const auto& vv = values.value();
                                 if (weights.requires_grad()) {
                                   auto& gw = weights.grad();
                                   for (std::size_t e = 0; e < m; ++e)
                                     for (std::size_t k = 0; k < h; ++k) {
                                       T acc = 0;
                                       for (std::size_t c = 0; c < block; ++c)
                                         acc += g[seg[e] * width + k * block + c] * vv[e * width + k * block + c];
                                       gw[e * h + k] += acc;
                                     }
                                 }
                                 if (values.requires_grad()) {
                                   auto& gv = values.grad();
                                   for (std::size_t e = 0; e < m; ++e)
                                     for (std::size_t k = 0; k < h; ++k)
                                       for (std::size_t c = 0; c < block; ++c)
                                         gv[e * width + k * block + c] += wv[e * h + k] * g[seg[e] * width + k * block + c];
                                 }
                               });
}

// ---------------------------------------------------------------------------
// Structural

//! Row r of a matrix as a vector.
template <typename T>
Var<T> select_row(const Var<T>& x, std::size_t r) {
  const auto& xv = x.value();
  detail::require_rank("select_row", xv.shape(), 2);
  if (r >= xv.dim(0)) throw ShapeMismatch("select_row: row " + std::to_string(r) + " outside " + shape_str(xv.shape()));
  const std::size_t cols = xv.dim(1);
  Tensor<T> out(Shape{cols}, std::vector<T>(xv.data() + r * cols, xv.data() + (r + 1) * cols));
  return x.tape().record(std::move(out), {x}, [x, r, cols](Tape<T>&, const Tensor<T>& g) {
    auto& gx = x.grad();
    for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[c];
  });
}

template <typename T>
Var<T> mean_rows(const Var<T>& x) {
  const auto& xv = x.value();
  detail::require_rank("mean_rows", xv.shape(), 2);
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  if (rows == 0) throw ShapeMismatch("mean_rows: no rows");
  Tensor<T> out(Shape{cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += xv[r * cols + c];
  for (std::size_t c = 0; c < cols; ++c) out[c] /= T(rows);
  return x.tape().record(std::move(out), {x}, [x, rows, cols](Tape<T>&, const Tensor<T>& g) {
    auto& gx = x.grad();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[c] / T(rows);
  });
}

//! Stacks equally sized vectors into [count x width].
template <typename T>
Var<T> stack_rows(std::span<const Var<T>> rows) {
  if (rows.empty()) throw ShapeMismatch("stack_rows: nothing to stack");
  const std::size_t width = rows[0].value().size();
  Tensor<T> out(Shape{rows.size(), width});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    detail::require_shape(rows[r].value().size() == width, "stack_rows", rows[0].shape(), rows[r].shape());
    std::copy_n(rows[r].value().data(), width, out.data() + r * width);
  }
  std::vector<Var<T>> inputs(rows.begin(), rows.end());
  return rows[0].tape().record(std::move(out), std::span<const Var<T>>(inputs),
                               [inputs, width](Tape<T>&, const Tensor<T>& g) {
                                 for (std::size_t r = 0; r < inputs.size(); ++r) {
                                   if (!inputs[r].requires_grad()) continue;
                                   detail::accumulate(inputs[r].grad(), g.values().subspan(r * width, width));
                                 }
                               });
}

//! Concatenates two vectors.
template <typename T>
Var<T> concat(const Var<T>& a, const Var<T>& b) {
  const std::size_t na = a.value().size(), nb = b.value().size();
  std::vector<T> values(a.value().storage());
  values.insert(values.end(), b.value().storage().begin(), b.value().storage().end());
  Tensor<T> out(Shape{na + nb}, std::move(values));
  return a.tape().record(std::move(out), {a, b}, [a, b, na, nb](Tape<T>&, const Tensor<T>& g) {
    if (a.requires_grad()) detail::accumulate(a.grad(), g.values().subspan(0, na));
    if (b.requires_grad()) detail::accumulate(b.grad(), g.values().subspan(na, nb));
  });
}

//! Inverted dropout: zeroes each entry with probability p and rescales survivors.
template <typename T>
Var<T> dropout(const Var<T>& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  const auto& xv = x.value();
  const T keep_scale = T(1.0 / (1.0 - p));
  std::vector<T> mask(xv.size());
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    mask[i] = uniform01(rng) < p ? T(0) : keep_scale;
    out[i] = xv[i] * mask[i];
  }
  return x.tape().record(std::move(out), {x}, [x, mask = std::move(mask)](Tape<T>&, const Tensor<T>& g) {
    auto& gx = x.grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T total = 0;
  for (T v : x.value().values()) total += v;
  return x.tape().record(Tensor<T>::scalar(total), {x}, [x](Tape<T>&, const Tensor<T>& g) {
    auto& gx = x.grad();
    const T d = g[0];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += d;
  });
}

//! (1/N) * sum((pred - target)^2) over all N entries.
template <typename T>
Var<T> mse_loss(const Var<T>& pred, const Var<T>& target) {
  const auto& pv = pred.value();
  const auto& tv = target.value();
  detail::require_shape(pv.size() == tv.size() && pv.size() > 0, "mse_loss", pv.shape(), tv.shape());
  const std::size_t n = pv.size();
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) total += (pv[i] - tv[i]) * (pv[i] - tv[i]);
  return pred.tape().record(Tensor<T>::scalar(total / T(n)), {pred, target}, [pred, target, n](Tape<T>&, const Tensor<T>& g) {
    const auto& pv = pred.value();
    const auto& tv = target.value();
    const T coeff = T(2) * g[0] / T(n);
    if (pred.requires_grad()) {
      auto& gp = pred.grad();
      for (std::size_t i = 0; i < n; ++i) gp[i] += coeff * (pv[i] - tv[i]);
    }
    if (target.requires_grad()) {
      auto& gt = target.grad();
      for (std::size_t i = 0; i < n; ++i) gt[i] -= coeff * (pv[i] - tv[i]);
    }
  });
}

}  // namespace vidta
