#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "pixelvol/geometry/camera.hpp"
#include "pixelvol/ndiff/array.hpp"

namespace pixelvol::radiance {

// NeRF-style positional encoding: per coordinate x the pairs
// (sin(2^k pi x), cos(2^k pi x)) for k = 0..l-1, concatenated over the three
// coordinates; length 6*l, every entry in [-1, 1].
inline std::vector<double> positional_encoding(const geometry::Vec3& X, int l) {
  if (l < 1) throw std::invalid_argument("positional_encoding: need l >= 1");
  std::vector<double> out;
  out.reserve(size_t(6 * l));
  for (int c = 0; c < 3; ++c) {
    double base = std::numbers::pi * X[c];
    for (int k = 0; k < l; ++k) {
      double arg = std::ldexp(base, k);  // 2^k * pi * x
      out.push_back(std::sin(arg));
      out.push_back(std::cos(arg));
    }
  }
  return out;
}

template <typename T>
ndiff::Array<T> positional_encoding_rows(std::span<const geometry::Vec3> points, int l) {
  if (l < 1) throw std::invalid_argument("positional_encoding: need l >= 1");
  int64_t n = int64_t(points.size());
  int64_t width = 6 * l;
  std::vector<T> out(size_t(n * width));
  for (int64_t i = 0; i < n; ++i) {
    T* row = out.data() + i * width;
    for (int c = 0; c < 3; ++c) {
      double base = std::numbers::pi * points[size_t(i)][c];
      for (int k = 0; k < l; ++k) {
        double arg = std::ldexp(base, k);
        row[c * 2 * l + 2 * k] = T(std::sin(arg));
        row[c * 2 * l + 2 * k + 1] = T(std::cos(arg));
      }
    }
  }
  return ndiff::Array<T>({n, width}, std::move(out));
}

}  // namespace pixelvol::radiance
