#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pixelvol/ndiff/tape.hpp"

// Differentiable primitives recorded on a Tape. Forward kernels never mutate
// their inputs; backward rules accumulate (+=) into input gradient buffers so
// fan-out sums naturally.
namespace pixelvol::ndiff {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

namespace detail {

// Trailing-dimension broadcasting: the smaller operand must either be a
// single element or match a suffix of the larger shape.
struct BroadcastPlan {
  int64_t outer = 1;   // replication count of the small operand
  int64_t inner = 1;   // elements of the small operand
  bool a_is_big = true;
};

inline BroadcastPlan broadcast_plan(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan plan;
  if (a == b) {
    plan.outer = 1;
    plan.inner = numel(a);
    return plan;
  }
  const Shape* big = &a;
  const Shape* small = &b;
  plan.a_is_big = true;
  if (numel(a) < numel(b)) {
    std::swap(big, small);
    plan.a_is_big = false;
  }
  if (numel(*small) == 1) {
    plan.outer = numel(*big);
    plan.inner = 1;
    return plan;
  }
  if (small->size() <= big->size() &&
      std::equal(small->rbegin(), small->rend(), big->rbegin())) {
    plan.inner = numel(*small);
    plan.outer = numel(*big) / plan.inner;
    return plan;
  }
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + to_string(a) +
                              " vs " + to_string(b));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pointwise binaries with trailing broadcast.

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& tape = *a.tape;
  const Array<T>& av = tape.value(a);
  const Array<T>& bv = tape.value(b);
  auto plan = detail::broadcast_plan(av.shape(), bv.shape(), "add");
  const Array<T>& big = plan.a_is_big ? av : bv;
  const Array<T>& small = plan.a_is_big ? bv : av;
  std::vector<T> out(size_t(big.size()));
  const T* bp = big.data();
  const T* sp = small.data();
  for (int64_t o = 0, i = 0; o < plan.outer; ++o)
    for (int64_t j = 0; j < plan.inner; ++j, ++i) out[size_t(i)] = bp[i] + sp[j];
  Var<T> big_var = plan.a_is_big ? a : b;
  Var<T> small_var = plan.a_is_big ? b : a;
  return tape.make_node(
      Array<T>(big.shape(), std::move(out)), {a, b},
      [big_var, small_var, plan](Tape<T>& t, const std::vector<T>& g) {
        if (t.needs_grad(big_var)) {
          std::vector<T>& gb = t.grad_buffer(big_var);
          for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
        if (t.needs_grad(small_var)) {
          std::vector<T>& gs = t.grad_buffer(small_var);
          for (int64_t o = 0, i = 0; o < plan.outer; ++o)
            for (int64_t j = 0; j < plan.inner; ++j, ++i) gs[size_t(j)] += g[size_t(i)];
        }
      },
      "add");
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  Tape<T>& tape = *a.tape;
  const Array<T>& av = tape.value(a);
  const Array<T>& bv = tape.value(b);
  auto plan = detail::broadcast_plan(av.shape(), bv.shape(), "mul");
  const Array<T>& big = plan.a_is_big ? av : bv;
  const Array<T>& small = plan.a_is_big ? bv : av;
  std::vector<T> out(size_t(big.size()));
  const T* bp = big.data();
  const T* sp = small.data();
  for (int64_t o = 0, i = 0; o < plan.outer; ++o)
    for (int64_t j = 0; j < plan.inner; ++j, ++i) out[size_t(i)] = bp[i] * sp[j];
  Var<T> big_var = plan.a_is_big ? a : b;
  Var<T> small_var = plan.a_is_big ? b : a;
  return tape.make_node(
      Array<T>(big.shape(), std::move(out)), {a, b},
      [big_var, small_var, plan](Tape<T>& t, const std::vector<T>& g) {
        const T* bp = t.value(big_var).data();
        const T* sp = t.value(small_var).data();
        if (t.needs_grad(big_var)) {
          std::vector<T>& gb = t.grad_buffer(big_var);
          for (int64_t o = 0, i = 0; o < plan.outer; ++o)
            for (int64_t j = 0; j < plan.inner; ++j, ++i) gb[size_t(i)] += g[size_t(i)] * sp[j];
        }
        if (t.needs_grad(small_var)) {
          std::vector<T>& gs = t.grad_buffer(small_var);
          for (int64_t o = 0, i = 0; o < plan.outer; ++o)
            for (int64_t j = 0; j < plan.inner; ++j, ++i) gs[size_t(j)] += g[size_t(i)] * bp[i];
        }
      },
      "mul");
}

// ---------------------------------------------------------------------------
// Pointwise unaries.

namespace detail {

template <typename T, class F, class DF>
Var<T> unary_map(Var<T> x, F f, DF df, const char* name) {
  Tape<T>& tape = *x.tape;
  const Array<T>& xv = tape.value(x);
  std::vector<T> out(size_t(xv.size()));
  const T* xp = xv.data();
  for (int64_t i = 0; i < xv.size(); ++i) out[size_t(i)] = f(xp[i]);
  return tape.make_node(
      Array<T>(xv.shape(), std::move(out)), {x},
      [x, df](Tape<T>& t, const std::vector<T>& g) {
        const T* xp = t.value(x).data();
        std::vector<T>& gx = t.grad_buffer(x);
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xp[i]);
      },
      name);
}

template <typename T>
T stable_softplus(T x) {
  if (x > T(30)) return x;
  if (x < T(-30)) return std::exp(x);
  return std::log1p(std::exp(x));
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) {
    T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace detail

template <typename T>
Var<T> relu(Var<T> x) {
  return detail::unary_map(
      x, [](T v) { return v > T(0) ? v : T(0); }, [](T v) { return v > T(0) ? T(1) : T(0); },
      "relu");
}

template <typename T>
Var<T> softplus(Var<T> x) {
  return detail::unary_map(
      x, [](T v) { return detail::stable_softplus(v); },
      [](T v) { return detail::stable_sigmoid(v); }, "softplus");
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  return detail::unary_map(
      x, [](T v) { return detail::stable_sigmoid(v); },
      [](T v) {
        T s = detail::stable_sigmoid(v);
        return s * (T(1) - s);
      },
      "sigmoid");
}

template <typename T>
Var<T> exp_op(Var<T> x) {
  return detail::unary_map(
      x, [](T v) { return std::exp(v); }, [](T v) { return std::exp(v); }, "exp");
}

// y = alpha * x + beta, elementwise.
template <typename T>
Var<T> scale_add(Var<T> x, T alpha, T beta = T(0)) {
  return detail::unary_map(
      x, [alpha, beta](T v) { return alpha * v + beta; }, [alpha](T) { return alpha; },
      "scale_add");
}

template <typename T>
Var<T> negate(Var<T> x) {
  return scale_add(x, T(-1));
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  return add(a, negate(b));
}

template <typename T>
Var<T> square(Var<T> x) {
  return mul(x, x);
}

// Clamp with pass-through gradient strictly inside the interval.
template <typename T>
Var<T> clamp(Var<T> x, T lo, T hi) {
  return detail::unary_map(
      x, [lo, hi](T v) { return std::min(hi, std::max(lo, v)); },
      [lo, hi](T v) { return (v > lo && v < hi) ? T(1) : T(0); }, "clamp");
}

// ---------------------------------------------------------------------------
// Reductions.

template <typename T>
Var<T> reduce_sum(Var<T> x) {
  Tape<T>& tape = *x.tape;
  const Array<T>& xv = tape.value(x);
  T acc = T(0);
  for (T v : xv.values()) acc += v;
  return tape.make_node(
      Array<T>::scalar(acc), {x},
      [x](Tape<T>& t, const std::vector<T>& g) {
        std::vector<T>& gx = t.grad_buffer(x);
        for (auto& v : gx) v += g[0];
      },
      "sum");
}

template <typename T>
Var<T> reduce_mean(Var<T> x) {
  Tape<T>& tape = *x.tape;
  T inv = T(1) / T(tape.value(x).size());
  return scale_add(reduce_sum(x), inv);
}

namespace detail {

template <typename T>
Var<T> reduce_axis(Var<T> x, int axis, bool mean, const char* name) {
  Tape<T>& tape = *x.tape;
  const Array<T>& xv = tape.value(x);
  if (axis < 0 || axis >= xv.rank())
    throw std::invalid_argument(std::string(name) + ": axis out of range");
  const Shape& s = xv.shape();
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[size_t(i)];
  for (size_t i = size_t(axis) + 1; i < s.size(); ++i) inner *= s[i];
  int64_t d = s[size_t(axis)];
  Shape out_shape;
  for (int i = 0; i < int(s.size()); ++i)
    if (i != axis) out_shape.push_back(s[size_t(i)]);
  if (out_shape.empty()) out_shape = {1};
  std::vector<T> out(size_t(outer * inner), T(0));
  const T* xp = xv.data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t k = 0; k < d; ++k)
      for (int64_t j = 0; j < inner; ++j)
        out[size_t(o * inner + j)] += xp[(o * d + k) * inner + j];
  T scale = mean ? T(1) / T(d) : T(1);
  if (mean)
    for (auto& v : out) v *= scale;
  return tape.make_node(
      Array<T>(out_shape, std::move(out)), {x},
      [x, outer, inner, d, scale](Tape<T>& t, const std::vector<T>& g) {
        std::vector<T>& gx = t.grad_buffer(x);
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t k = 0; k < d; ++k)
            for (int64_t j = 0; j < inner; ++j)
              gx[size_t((o * d + k) * inner + j)] += g[size_t(o * inner + j)] * scale;
      },
      name);
}

}  // namespace detail

template <typename T>
Var<T> reduce_sum(Var<T> x, int axis) {
  return detail::reduce_axis(x, axis, false, "sum");
}

template <typename T>
Var<T> reduce_mean(Var<T> x, int axis) {
  return detail::reduce_axis(x, axis, true, "mean");
}

// ---------------------------------------------------------------------------
// Concatenation and slicing.

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: empty part list");
  Tape<T>& tape = *parts[0].tape;
  const Shape& s0 = tape.value(parts[0]).shape();
  if (axis < 0 || axis >= int(s0.size())) throw std::invalid_argument("concat: axis out of range");
  int64_t axis_total = 0;
  for (const Var<T>& p : parts) {
    const Shape& s = tape.value(p).shape();
    if (s.size() != s0.size()) throw std::invalid_argument("concat: rank mismatch");
    for (size_t i = 0; i < s.size(); ++i)
      if (int(i) != axis && s[i] != s0[i])
        throw std::invalid_argument("concat: extent mismatch at axis " + std::to_string(i));
    axis_total += s[size_t(axis)];
  }
  Shape out_shape = s0;
  out_shape[size_t(axis)] = axis_total;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s0[size_t(i)];
  for (size_t i = size_t(axis) + 1; i < s0.size(); ++i) inner *= s0[i];

  std::vector<T> out(size_t(numel(out_shape)));
  std::vector<int64_t> offsets;  // per-part start along the axis
  int64_t off = 0;
  for (const Var<T>& p : parts) {
    const Array<T>& pv = tape.value(p);
    int64_t d = pv.extent(axis);
    const T* src = pv.data();
    for (int64_t o = 0; o < outer; ++o)
      std::copy_n(src + o * d * inner, d * inner, out.data() + (o * axis_total + off) * inner);
    offsets.push_back(off);
    off += d;
  }

  std::vector<Var<T>> part_vars = parts;
  return tape.make_node(
      Array<T>(out_shape, std::move(out)), std::span<const Var<T>>(parts),
      [part_vars, offsets, outer, inner, axis_total, axis](Tape<T>& t, const std::vector<T>& g) {
        for (size_t k = 0; k < part_vars.size(); ++k) {
          if (!t.needs_grad(part_vars[k])) continue;
          int64_t d = t.value(part_vars[k]).extent(axis);
          std::vector<T>& gp = t.grad_buffer(part_vars[k]);
          for (int64_t o = 0; o < outer; ++o) {
            const T* src = g.data() + (o * axis_total + offsets[k]) * inner;
            T* dst = gp.data() + o * d * inner;
            for (int64_t i = 0; i < d * inner; ++i) dst[i] += src[i];
          }
        }
      },
      "concat");
}

// Contiguous slice along one axis.
template <typename T>
Var<T> narrow(Var<T> x, int axis, int64_t start, int64_t len) {
  Tape<T>& tape = *x.tape;
  const Array<T>& xv = tape.value(x);
  if (axis < 0 || axis >= xv.rank()) throw std::invalid_argument("narrow: axis out of range");
  int64_t d = xv.extent(axis);
  if (start < 0 || len <= 0 || start + len > d) throw std::invalid_argument("narrow: range out of bounds");
  const Shape& s = xv.shape();
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[size_t(i)];
  for (size_t i = size_t(axis) + 1; i < s.size(); ++i) inner *= s[i];
  Shape out_shape = s;
  out_shape[size_t(axis)] = len;
  std::vector<T> out(size_t(outer * len * inner));
  const T* xp = xv.data();
  for (int64_t o = 0; o < outer; ++o)
    std::copy_n(xp + (o * d + start) * inner, len * inner, out.data() + o * len * inner);
  return tape.make_node(
      Array<T>(std::move(out_shape), std::move(out)), {x},
      [x, outer, inner, d, start, len](Tape<T>& t, const std::vector<T>& g) {
        std::vector<T>& gx = t.grad_buffer(x);
        for (int64_t o = 0; o < outer; ++o) {
          const T* src = g.data() + o * len * inner;
          T* dst = gx.data() + (o * d + start) * inner;
          for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
      },
      "narrow");
}

// Column slice of a 2-D matrix.
template <typename T>
Var<T> columns(Var<T> x, int64_t c0, int64_t c1) {
  return narrow(x, 1, c0, c1 - c0);
}

// ---------------------------------------------------------------------------
// Matrix product [m x k] * [k x n]. Backward: dA = G * B^T, dB = A^T * G.

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Tape<T>& tape = *a.tape;
  const Array<T>& av = tape.value(a);
  const Array<T>& bv = tape.value(b);
  if (av.rank() != 2 || bv.rank() != 2 || av.extent(1) != bv.extent(0))
    throw std::invalid_argument("matmul: shape mismatch " + to_string(av.shape()) + " * " +
                                to_string(bv.shape()));
  int64_t m = av.extent(0), k = av.extent(1), n = bv.extent(1);
  std::vector<T> out(size_t(m * n));
  MatMap<T>(out.data(), m, n).noalias() =
      ConstMatMap<T>(av.data(), m, k) * ConstMatMap<T>(bv.data(), k, n);
  return tape.make_node(
      Array<T>({m, n}, std::move(out)), {a, b},
      [a, b, m, k, n](Tape<T>& t, const std::vector<T>& g) {
        ConstMatMap<T> G(g.data(), m, n);
        if (t.needs_grad(a)) {
          ConstMatMap<T> B(t.value(b).data(), k, n);
          MatMap<T>(t.grad_buffer(a).data(), m, k).noalias() += G * B.transpose();
        }
        if (t.needs_grad(b)) {
          ConstMatMap<T> A(t.value(a).data(), m, k);
          MatMap<T>(t.grad_buffer(b).data(), k, n).noalias() += A.transpose() * G;
        }
      },
      "matmul");
}

// ---------------------------------------------------------------------------
// 2-D convolution (cross-correlation) over a [c_in x h x w] input with a
// [c_out x c_in x k x k] kernel and optional [c_out] bias. Implemented as
// im2col + GEMM; backward rebuilds the patch matrix rather than caching it.

namespace detail {

template <typename T>
void im2col(const T* x, int64_t ci, int64_t h, int64_t w, int64_t k, int64_t stride, int64_t pad,
            int64_t ho, int64_t wo, T* cols /* [ho*wo x ci*k*k] */) {
  for (int64_t oy = 0; oy < ho; ++oy) {
    for (int64_t ox = 0; ox < wo; ++ox) {
      T* row = cols + (oy * wo + ox) * ci * k * k;
      for (int64_t c = 0; c < ci; ++c) {
        const T* plane = x + c * h * w;
        for (int64_t ky = 0; ky < k; ++ky) {
          int64_t iy = oy * stride - pad + ky;
          for (int64_t kx = 0; kx < k; ++kx) {
            int64_t ix = ox * stride - pad + kx;
            *row++ = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? plane[iy * w + ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_accum(const T* cols, int64_t ci, int64_t h, int64_t w, int64_t k, int64_t stride,
                  int64_t pad, int64_t ho, int64_t wo, T* gx) {
  for (int64_t oy = 0; oy < ho; ++oy) {
    for (int64_t ox = 0; ox < wo; ++ox) {
      const T* row = cols + (oy * wo + ox) * ci * k * k;
      for (int64_t c = 0; c < ci; ++c) {
        T* plane = gx + c * h * w;
        for (int64_t ky = 0; ky < k; ++ky) {
          int64_t iy = oy * stride - pad + ky;
          for (int64_t kx = 0; kx < k; ++kx) {
            int64_t ix = ox * stride - pad + kx;
            if (iy >= 0 && iy < h && ix >= 0 && ix < w) plane[iy * w + ix] += *row;
            ++row;
          }
        }
      }
    }
  }
}

}  // namespace detail

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias, int64_t stride, int64_t pad) {
  Tape<T>& tape = *x.tape;
  const Array<T>& xv = tape.value(x);
  const Array<T>& wv = tape.value(weight);
  if (xv.rank() != 3 || wv.rank() != 4) throw std::invalid_argument("conv2d: rank mismatch");
  int64_t ci = xv.extent(0), h = xv.extent(1), w = xv.extent(2);
  int64_t co = wv.extent(0), k = wv.extent(2);
  if (wv.extent(1) != ci) throw std::invalid_argument("conv2d: wrong channel count");
  if (wv.extent(3) != k || k % 2 == 0) throw std::invalid_argument("conv2d: kernel must be square and odd");
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be positive");
  if ((h + 2 * pad - k) % stride != 0 || (w + 2 * pad - k) % stride != 0)
    throw std::invalid_argument("conv2d: non-integral output extent");
  int64_t ho = (h + 2 * pad - k) / stride + 1;
  int64_t wo = (w + 2 * pad - k) / stride + 1;
  bool has_bias = bias.valid();
  if (has_bias && (tape.value(bias).rank() != 1 || tape.value(bias).extent(0) != co))
    throw std::invalid_argument("conv2d: bias shape mismatch");

  std::vector<T> cols(size_t(ho * wo * ci * k * k));
  detail::im2col(xv.data(), ci, h, w, k, stride, pad, ho, wo, cols.data());
  std::vector<T> out(size_t(co * ho * wo));
  // [co x cikk] * [cikk x ho*wo]
  MatMap<T>(out.data(), co, ho * wo).noalias() =
      ConstMatMap<T>(wv.data(), co, ci * k * k) *
      ConstMatMap<T>(cols.data(), ho * wo, ci * k * k).transpose();
  if (has_bias) {
    const T* bp = tape.value(bias).data();
    for (int64_t c = 0; c < co; ++c) {
      T* plane = out.data() + c * ho * wo;
      for (int64_t i = 0; i < ho * wo; ++i) plane[i] += bp[c];
    }
  }

  auto backward = [x, weight, bias, has_bias, ci, h, w, k, stride, pad, ho, wo,
                   co](Tape<T>& t, const std::vector<T>& g) {
    ConstMatMap<T> G(g.data(), co, ho * wo);
    bool need_x = t.needs_grad(x);
    bool need_w = t.needs_grad(weight);
    if (need_w || need_x) {
      if (need_w) {
        std::vector<T> cols(size_t(ho * wo * ci * k * k));
        detail::im2col(t.value(x).data(), ci, h, w, k, stride, pad, ho, wo, cols.data());
        MatMap<T>(t.grad_buffer(weight).data(), co, ci * k * k).noalias() +=
            G * ConstMatMap<T>(cols.data(), ho * wo, ci * k * k);
      }
      if (need_x) {
        std::vector<T> gcols(size_t(ho * wo * ci * k * k));
        MatMap<T>(gcols.data(), ho * wo, ci * k * k).noalias() =
            G.transpose() * ConstMatMap<T>(t.value(weight).data(), co, ci * k * k);
        detail::col2im_accum(gcols.data(), ci, h, w, k, stride, pad, ho, wo,
                             t.grad_buffer(x).data());
      }
    }
    if (has_bias && t.needs_grad(bias)) {
      std::vector<T>& gb = t.grad_buffer(bias);
      for (int64_t c = 0; c < co; ++c) {
        T acc = T(0);
        const T* plane = g.data() + c * ho * wo;
        for (int64_t i = 0; i < ho * wo; ++i) acc += plane[i];
        gb[size_t(c)] += acc;
      }
    }
  };
  if (has_bias)
    return tape.make_node(Array<T>({co, ho, wo}, std::move(out)), {x, weight, bias}, backward,
                          "conv2d");
  return tape.make_node(Array<T>({co, ho, wo}, std::move(out)), {x, weight}, backward, "conv2d");
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, int64_t stride, int64_t pad) {
  return conv2d(x, weight, Var<T>{}, stride, pad);
}

// ---------------------------------------------------------------------------
// Bilinear 2x upsampling of a [c x h x w] map, align-corners=false, border
// clamped.

namespace detail {

struct UpTap {
  int64_t i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

inline std::vector<UpTap> upsample_taps(int64_t in) {
  std::vector<UpTap> taps(size_t(2 * in));
  for (int64_t o = 0; o < 2 * in; ++o) {
    double u = (double(o) + 0.5) / 2.0 - 0.5;
    double fl = std::floor(u);
    int64_t i0 = int64_t(fl);
    double w1 = u - fl;
    int64_t i1 = i0 + 1;
    i0 = std::clamp<int64_t>(i0, 0, in - 1);
    i1 = std::clamp<int64_t>(i1, 0, in - 1);
    taps[size_t(o)] = {i0, i1, w1};
  }
  return taps;
}

}  // namespace detail

template <typename T>
Var<T> upsample2x(Var<T> x) {
  Tape<T>& tape = *x.tape;
  const Array<T>& xv = tape.value(x);
  if (xv.rank() != 3) throw std::invalid_argument("upsample2x: expected [c x h x w]");
  int64_t c = xv.extent(0), h = xv.extent(1), w = xv.extent(2);
  auto ty = detail::upsample_taps(h);
  auto tx = detail::upsample_taps(w);
  std::vector<T> out(size_t(c * 4 * h * w));
  const T* xp = xv.data();
  for (int64_t ch = 0; ch < c; ++ch) {
    const T* plane = xp + ch * h * w;
    T* oplane = out.data() + ch * 4 * h * w;
    for (int64_t oy = 0; oy < 2 * h; ++oy) {
      const auto& [y0, y1, wy] = ty[size_t(oy)];
      for (int64_t ox = 0; ox < 2 * w; ++ox) {
        const auto& [x0, x1, wx] = tx[size_t(ox)];
        double v = (1 - wy) * ((1 - wx) * plane[y0 * w + x0] + wx * plane[y0 * w + x1]) +
                   wy * ((1 - wx) * plane[y1 * w + x0] + wx * plane[y1 * w + x1]);
        oplane[oy * 2 * w + ox] = T(v);
      }
    }
  }
  return tape.make_node(
      Array<T>({c, 2 * h, 2 * w}, std::move(out)), {x},
      [x, c, h, w, ty, tx](Tape<T>& t, const std::vector<T>& g) {
        std::vector<T>& gx = t.grad_buffer(x);
        for (int64_t ch = 0; ch < c; ++ch) {
          T* gplane = gx.data() + ch * h * w;
          const T* goplane = g.data() + ch * 4 * h * w;
          for (int64_t oy = 0; oy < 2 * h; ++oy) {
            const auto& [y0, y1, wy] = ty[size_t(oy)];
            for (int64_t ox = 0; ox < 2 * w; ++ox) {
              const auto& [x0, x1, wx] = tx[size_t(ox)];
              T go = goplane[oy * 2 * w + ox];
              gplane[y0 * w + x0] += T((1 - wy) * (1 - wx)) * go;
              gplane[y0 * w + x1] += T((1 - wy) * wx) * go;
              gplane[y1 * w + x0] += T(wy * (1 - wx)) * go;
              gplane[y1 * w + x1] += T(wy * wx) * go;
            }
          }
        }
      },
      "upsample2x");
}

}  // namespace pixelvol::ndiff
