#pragma once

#include <cstdint>
#include <vector>

#include "pixelvol/geometry/camera.hpp"
#include "pixelvol/ndiff/tape.hpp"

namespace pixelvol::geometry {

namespace detail {

struct BilinearTaps {
  int64_t x0, x1, y0, y1;
  double wx, wy;  // weights of the x1/y1 texels
};

inline BilinearTaps bilinear_taps(double x, double y, int64_t w, int64_t h) {
  // Border clamp: coordinates outside [0, w-1] x [0, h-1] collapse onto the
  // edge texels.
  x = std::clamp(x, 0.0, double(w - 1));
  y = std::clamp(y, 0.0, double(h - 1));
  BilinearTaps t;
  t.x0 = int64_t(std::floor(x));
  t.y0 = int64_t(std::floor(y));
  t.x1 = std::min(t.x0 + 1, w - 1);
  t.y1 = std::min(t.y0 + 1, h - 1);
  t.wx = x - double(t.x0);
  t.wy = y - double(t.y0);
  return t;
}

}  // namespace detail

// Bilinear read of a [c x h x w] feature map at a fractional pixel location.
template <typename T>
std::vector<T> bilinear_sample(const ndiff::Array<T>& fm, const Vec2& px) {
  int64_t c = fm.extent(0), h = fm.extent(1), w = fm.extent(2);
  auto taps = detail::bilinear_taps(px.x(), px.y(), w, h);
  std::vector<T> out(static_cast<size_t>(c));
  const T* data = fm.data();
  for (int64_t ch = 0; ch < c; ++ch) {
    const T* plane = data + ch * h * w;
    double v = (1 - taps.wy) * ((1 - taps.wx) * plane[taps.y0 * w + taps.x0] +
                                taps.wx * plane[taps.y0 * w + taps.x1]) +
               taps.wy * ((1 - taps.wx) * plane[taps.y1 * w + taps.x0] +
                          taps.wx * plane[taps.y1 * w + taps.x1]);
    out[size_t(ch)] = T(v);
  }
  return out;
}

// Batched, differentiable-in-the-feature-map bilinear sampling: one row per
// query, zero rows where `valid` is false (the out-of-view policy). Backward
// scatters the four tap weights into the feature-map gradient.
template <typename T>
ndiff::Var<T> bilinear_sample_batch(ndiff::Var<T> fm, const std::vector<Vec2>& coords,
                                    const std::vector<uint8_t>& valid) {
  ndiff::Tape<T>& tape = *fm.tape;
  const ndiff::Array<T>& fmv = tape.value(fm);
  if (fmv.rank() != 3) throw std::invalid_argument("bilinear_sample: expected [c x h x w]");
  if (coords.size() != valid.size())
    throw std::invalid_argument("bilinear_sample: coords/valid size mismatch");
  int64_t c = fmv.extent(0), h = fmv.extent(1), w = fmv.extent(2);
  int64_t n = int64_t(coords.size());

  std::vector<detail::BilinearTaps> taps(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    if (valid[size_t(i)]) taps[size_t(i)] = detail::bilinear_taps(coords[size_t(i)].x(), coords[size_t(i)].y(), w, h);

  std::vector<T> out(size_t(n * c), T(0));
  const T* data = fmv.data();
  for (int64_t i = 0; i < n; ++i) {
    if (!valid[size_t(i)]) continue;
    const auto& tp = taps[size_t(i)];
    T* row = out.data() + i * c;
    for (int64_t ch = 0; ch < c; ++ch) {
      const T* plane = data + ch * h * w;
      double v = (1 - tp.wy) * ((1 - tp.wx) * plane[tp.y0 * w + tp.x0] +
                                tp.wx * plane[tp.y0 * w + tp.x1]) +
                 tp.wy * ((1 - tp.wx) * plane[tp.y1 * w + tp.x0] +
                          tp.wx * plane[tp.y1 * w + tp.x1]);
      row[ch] = T(v);
    }
  }
  std::vector<uint8_t> valid_copy = valid;
  return tape.make_node(
      ndiff::Array<T>({n, c}, std::move(out)), {fm},
      [fm, taps, valid_copy, n, c, h, w](ndiff::Tape<T>& t, const std::vector<T>& g) {
        if (!t.needs_grad(fm)) return;
        std::vector<T>& gf = t.grad_buffer(fm);
        for (int64_t i = 0; i < n; ++i) {
          if (!valid_copy[size_t(i)]) continue;
          const auto& tp = taps[size_t(i)];
          const T* grow = g.data() + i * c;
          for (int64_t ch = 0; ch < c; ++ch) {
            T* plane = gf.data() + ch * h * w;
            T go = grow[ch];
            plane[tp.y0 * w + tp.x0] += T((1 - tp.wy) * (1 - tp.wx)) * go;
            plane[tp.y0 * w + tp.x1] += T((1 - tp.wy) * tp.wx) * go;
            plane[tp.y1 * w + tp.x0] += T(tp.wy * (1 - tp.wx)) * go;
            plane[tp.y1 * w + tp.x1] += T(tp.wy * tp.wx) * go;
          }
        }
      },
      "bilinear_sample");
}

}  // namespace pixelvol::geometry
