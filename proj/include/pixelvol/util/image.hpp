#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace pixelvol::util {

// Interleaved row-major RGB float image with values nominally in [0, 1].
struct FloatImage {
  int width = 0, height = 0;
  std::vector<float> rgb;

  FloatImage() = default;
  FloatImage(int w, int h) : width(w), height(h), rgb(size_t(3) * w * h, 0.f) {}

  float* pixel(int x, int y) { return rgb.data() + 3 * (size_t(y) * width + x); }
  const float* pixel(int x, int y) const { return rgb.data() + 3 * (size_t(y) * width + x); }
};

// Linear clamp then round-half-up to 8 bits; the quantization used for all
// PNG output. Metrics are computed on the pre-quantization floats.
inline uint8_t quantize8(float v) {
  float c = std::clamp(v, 0.f, 1.f);
  return uint8_t(std::floor(c * 255.f + 0.5f));
}

inline FloatImage hcat(const std::vector<FloatImage>& parts) {
  int w = 0, h = parts.empty() ? 0 : parts[0].height;
  for (const auto& p : parts) w += p.width;
  FloatImage out(w, h);
  int x0 = 0;
  for (const auto& p : parts) {
    for (int y = 0; y < p.height; ++y)
      std::copy_n(p.pixel(0, y), size_t(3) * p.width, out.pixel(x0, y));
    x0 += p.width;
  }
  return out;
}

inline FloatImage abs_diff(const FloatImage& a, const FloatImage& b) {
  FloatImage out(a.width, a.height);
  for (size_t i = 0; i < out.rgb.size(); ++i) out.rgb[i] = std::abs(a.rgb[i] - b.rgb[i]);
  return out;
}

}  // namespace pixelvol::util
