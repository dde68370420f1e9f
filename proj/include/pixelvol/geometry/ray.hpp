#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "pixelvol/geometry/camera.hpp"
#include "pixelvol/util/rng.hpp"

namespace pixelvol::geometry {

// The scene lives in the unit cube [-0.5, 0.5]^3 of the head frame; rays are
// marched between their entry and exit of a bounding sphere that encloses it,
// with fixed fallback bounds for rays that miss the sphere.
inline constexpr double kSceneBoundRadius = 0.87;  // about sqrt(3)/2
inline constexpr double kFallbackNear = 0.1;
inline constexpr double kFallbackFar = 2.5;
inline constexpr double kCubeHalf = 0.5;

// Entry/exit of the centered bounding sphere along a unit-direction ray.
inline void assign_near_far(Ray& ray, double radius = kSceneBoundRadius) {
  double b = ray.origin.dot(ray.dir);
  double c = ray.origin.squaredNorm() - radius * radius;
  double disc = b * b - c;
  if (disc > 0) {
    double s = std::sqrt(disc);
    double t0 = -b - s, t1 = -b + s;
    if (t1 > 1e-6) {
      ray.t_near = std::max(t0, 1e-6);
      ray.t_far = t1;
      return;
    }
  }
  ray.t_near = kFallbackNear;
  ray.t_far = kFallbackFar;
}

struct RaySamples {
  std::vector<Vec3> points;     // clamped to the unit cube
  std::vector<double> ts;       // parametric positions along the ray
  std::vector<double> deltas;   // spacing; the last bin closes the interval
};

// n_s sample positions over [t_near, t_far]: an endpoint-inclusive grid, or
// one stratified draw per bin when jittered. Sample points are clamped
// componentwise to the unit cube but deltas keep the true ray arclength,
// since opacity integration needs parametric spacing.
inline RaySamples sample_along_ray(const Ray& ray, int n_s, bool jitter, util::Rng* rng = nullptr) {
  if (n_s < 2) throw std::invalid_argument("sample_along_ray: need at least 2 samples");
  if (!(ray.t_near < ray.t_far)) throw std::invalid_argument("sample_along_ray: empty t range");
  RaySamples out;
  out.ts.resize(size_t(n_s));
  if (jitter) {
    if (!rng) throw std::invalid_argument("sample_along_ray: jitter requires an rng");
    double bin = (ray.t_far - ray.t_near) / n_s;
    for (int k = 0; k < n_s; ++k) out.ts[size_t(k)] = ray.t_near + (k + rng->uniform()) * bin;
  } else {
    double step = (ray.t_far - ray.t_near) / (n_s - 1);
    for (int k = 0; k < n_s; ++k) out.ts[size_t(k)] = ray.t_near + k * step;
    out.ts.back() = ray.t_far;
  }
  out.deltas.resize(size_t(n_s));
  for (int k = 0; k + 1 < n_s; ++k) out.deltas[size_t(k)] = out.ts[size_t(k + 1)] - out.ts[size_t(k)];
  out.deltas.back() = ray.t_far - out.ts.back();
  out.points.resize(size_t(n_s));
  for (int k = 0; k < n_s; ++k) {
    Vec3 p = ray.origin + out.ts[size_t(k)] * ray.dir;
    out.points[size_t(k)] = p.cwiseMax(-kCubeHalf).cwiseMin(kCubeHalf);
  }
  return out;
}

}  // namespace pixelvol::geometry
