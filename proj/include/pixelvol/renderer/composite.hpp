#pragma once

#include <cmath>
#include <vector>

#include "pixelvol/ndiff/ops.hpp"

namespace pixelvol::renderer {

// Optical depths are clamped here before the exponential so huge densities
// cannot underflow transmittance into gradient NaNs.
inline constexpr double kMaxOpticalDepth = 60.0;

// Discrete volume rendering over rays of equal sample count.
//
//   alpha_k = 1 - exp(-delta_k sigma_k)
//   T_k     = prod_{j<k} (1 - alpha_j)          (exclusive transmittance)
//   I_rgb   = sum_k T_k alpha_k c_k
//   I_alpha = sum_k T_k alpha_k = 1 - prod_k (1 - alpha_k)
//
// Inputs: rgb [N x 3], sigma [N x 1], spacings delta[N] with N = n_rays *
// samples, ray-major. Output: [n_rays x 4] rows (r, g, b, alpha),
// differentiable w.r.t. colors and densities. The backward uses suffix sums:
// with x_k = delta_k sigma_k,
//
//   dI/dc_k     = T_k alpha_k
//   dI_rgb/dx_k = T_{k+1} c_k - sum_{j>k} w_j c_j
//   dI_a/dx_k   = T_{k+1}     - sum_{j>k} w_j
//
// so a single reverse sweep per ray computes exact gradients without
// dividing by (1 - alpha), which is unstable for opaque samples.
template <typename T>
ndiff::Var<T> composite_rays(ndiff::Var<T> rgb, ndiff::Var<T> sigma,
                             const std::vector<T>& delta, int64_t n_rays) {
  ndiff::Tape<T>& tape = *rgb.tape;
  const ndiff::Array<T>& cv = tape.value(rgb);
  const ndiff::Array<T>& sv = tape.value(sigma);
  if (cv.rank() != 2 || cv.extent(1) != 3) throw std::invalid_argument("composite: rgb must be [N x 3]");
  if (sv.rank() != 2 || sv.extent(1) != 1) throw std::invalid_argument("composite: sigma must be [N x 1]");
  int64_t n = cv.extent(0);
  if (sv.extent(0) != n || int64_t(delta.size()) != n)
    throw std::invalid_argument("composite: per-sample list lengths differ");
  if (n_rays < 1 || n % n_rays != 0)
    throw std::invalid_argument("composite: sample count is not a multiple of the ray count");
  int64_t samples = n / n_rays;
  for (int64_t i = 0; i < n; ++i) {
    if (sv[i] < T(0)) throw std::invalid_argument("composite: negative density");
    if (delta[size_t(i)] < T(0)) throw std::invalid_argument("composite: negative spacing");
  }

  std::vector<T> out(size_t(n_rays) * 4, T(0));
  const T* c = cv.data();
  const T* sg = sv.data();
  for (int64_t r = 0; r < n_rays; ++r) {
    double trans = 1.0;
    double acc[4] = {0, 0, 0, 0};
    for (int64_t k = 0; k < samples; ++k) {
      int64_t i = r * samples + k;
      double x = std::min(double(delta[size_t(i)]) * double(sg[i]), kMaxOpticalDepth);
      double alpha = -std::expm1(-x);
      double wk = trans * alpha;
      for (int ch = 0; ch < 3; ++ch) acc[ch] += wk * double(c[i * 3 + ch]);
      acc[3] += wk;
      trans *= std::exp(-x);
    }
    for (int ch = 0; ch < 4; ++ch) out[size_t(r * 4 + ch)] = T(acc[ch]);
  }

  std::vector<T> delta_copy = delta;
  return tape.make_node(
      ndiff::Array<T>({n_rays, 4}, std::move(out)), {rgb, sigma},
      [rgb, sigma, delta_copy, n_rays, samples](ndiff::Tape<T>& t, const std::vector<T>& g) {
        const T* c = t.value(rgb).data();
        const T* sg = t.value(sigma).data();
        bool need_c = t.needs_grad(rgb);
        bool need_s = t.needs_grad(sigma);
        std::vector<T>* gc = need_c ? &t.grad_buffer(rgb) : nullptr;
        std::vector<T>* gs = need_s ? &t.grad_buffer(sigma) : nullptr;
        std::vector<double> trans(size_t(samples) + 1);
        std::vector<double> weight(size_t(samples));
        std::vector<uint8_t> open(size_t(samples));
        for (int64_t r = 0; r < n_rays; ++r) {
          trans[0] = 1.0;
          for (int64_t k = 0; k < samples; ++k) {
            int64_t i = r * samples + k;
            double x = double(delta_copy[size_t(i)]) * double(sg[i]);
            open[size_t(k)] = x < kMaxOpticalDepth;
            if (x > kMaxOpticalDepth) x = kMaxOpticalDepth;
            weight[size_t(k)] = trans[size_t(k)] * -std::expm1(-x);
            trans[size_t(k) + 1] = trans[size_t(k)] * std::exp(-x);
          }
          const T* grow = g.data() + r * 4;
          double suffix_c[3] = {0, 0, 0};  // sum_{j>k} w_j c_j
          double suffix_a = 0;             // sum_{j>k} w_j
          for (int64_t k = samples - 1; k >= 0; --k) {
            int64_t i = r * samples + k;
            double wk = weight[size_t(k)];
            double tk1 = trans[size_t(k) + 1];
            if (need_c)
              for (int ch = 0; ch < 3; ++ch)
                (*gc)[size_t(i * 3 + ch)] += T(wk * double(grow[ch]));
            if (need_s && open[size_t(k)]) {
              double dx = 0;
              for (int ch = 0; ch < 3; ++ch)
                dx += double(grow[ch]) * (tk1 * double(c[i * 3 + ch]) - suffix_c[ch]);
              dx += double(grow[3]) * (tk1 - suffix_a);
              (*gs)[size_t(i)] += T(dx * double(delta_copy[size_t(i)]));
            }
            for (int ch = 0; ch < 3; ++ch) suffix_c[ch] += wk * double(c[i * 3 + ch]);
            suffix_a += wk;
          }
        }
      },
      "composite");
}

}  // namespace pixelvol::renderer
