#pragma once

#include <cmath>
#include <optional>

#include "pixelvol/geometry/camera.hpp"
#include "pixelvol/geometry/ray.hpp"
#include "pixelvol/util/image.hpp"
#include "pixelvol/util/rng.hpp"

namespace pixelvol::synthdata {

using geometry::Mat3;
using geometry::Ray;
using geometry::RigidTransform;
using geometry::Vec3;

// Procedural identity: an ellipsoid with a seed-derived trigonometric albedo
// field, a smooth expression bump on the +Z face, and a flat background. All
// geometry is defined in the canonical head frame; head_pose places it in the
// world.
struct SceneSpec {
  uint64_t seed = 0;
  Vec3 semi_axes = Vec3(0.3, 0.3, 0.3);   // each in (0.05, 0.4)
  double bump_height = 0.08;              // radial bump amplitude at e = 1
  double bump_sharpness = 12.0;           // falloff rate around the +Z pole
  double expression = 0.0;                // e in [0, 1]
  Vec3 background = Vec3(0.2, 0.2, 0.2);
  RigidTransform head_pose;

  // Low-frequency trigonometric albedo: per channel a few sine waves around a
  // mid-grey base.
  static constexpr int kAlbedoWaves = 3;
  Vec3 albedo_amp[kAlbedoWaves];
  Vec3 albedo_freq[kAlbedoWaves];
  Vec3 albedo_phase[kAlbedoWaves];
};

inline SceneSpec sample_identity(uint64_t seed) {
  util::Rng rng = util::Rng::seeded(seed, 0xa11ce);
  SceneSpec s;
  s.seed = seed;
  for (int i = 0; i < 3; ++i) s.semi_axes[i] = rng.uniform(0.18, 0.38);
  s.bump_height = rng.uniform(0.05, 0.09);
  s.bump_sharpness = rng.uniform(8.0, 16.0);
  for (int i = 0; i < 3; ++i) s.background[i] = rng.uniform(0.1, 0.35);
  for (int w = 0; w < SceneSpec::kAlbedoWaves; ++w) {
    for (int i = 0; i < 3; ++i) {
      s.albedo_amp[w][i] = rng.uniform(0.05, 0.15);
      s.albedo_freq[w][i] = rng.uniform(2.0, 8.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
      s.albedo_phase[w][i] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
  }
  return s;
}

namespace detail {

// Ellipsoidal radius: 1 on the base surface.
inline double ellipsoid_rho(const SceneSpec& s, const Vec3& x) {
  Vec3 scaled = x.cwiseQuotient(s.semi_axes);
  return scaled.norm();
}

// Bump profile over the +Z pole direction; smooth everywhere off the origin.
inline double bump_profile(const SceneSpec& s, const Vec3& x) {
  double r = x.norm();
  if (r < 1e-12) return 0.0;
  double uz = x.z() / r;
  return std::exp(s.bump_sharpness * (uz - 1.0));
}

// Implicit surface: F < 0 inside, F > 0 outside.
inline double surface_field(const SceneSpec& s, const Vec3& x) {
  return ellipsoid_rho(s, x) - 1.0 - s.expression * s.bump_height * bump_profile(s, x);
}

inline Vec3 surface_gradient(const SceneSpec& s, const Vec3& x) {
  double rho = ellipsoid_rho(s, x);
  Vec3 grad_rho = x.cwiseQuotient(s.semi_axes.cwiseProduct(s.semi_axes)) / std::max(rho, 1e-12);
  double amp = s.expression * s.bump_height;
  if (amp == 0.0) return grad_rho;
  double r = x.norm();
  if (r < 1e-12) return grad_rho;
  double uz = x.z() / r;
  double m = std::exp(s.bump_sharpness * (uz - 1.0));
  Vec3 grad_uz = Vec3::UnitZ() / r - x * (x.z() / (r * r * r));
  return grad_rho - amp * s.bump_sharpness * m * grad_uz;
}

// Entry point of a centered ellipsoid with the given semi-axes, or nothing.
inline std::optional<double> ellipsoid_entry(const Vec3& axes, const Ray& ray,
                                             double* exit_t = nullptr) {
  Vec3 o = ray.origin.cwiseQuotient(axes);
  Vec3 d = ray.dir.cwiseQuotient(axes);
  double a = d.squaredNorm();
  double b = o.dot(d);
  double c = o.squaredNorm() - 1.0;
  double disc = b * b - a * c;
  if (disc <= 0) return std::nullopt;
  double s = std::sqrt(disc);
  double t0 = (-b - s) / a;
  double t1 = (-b + s) / a;
  if (t1 <= 1e-9) return std::nullopt;
  if (exit_t) *exit_t = t1;
  return std::max(t0, 0.0);
}

}  // namespace detail

// First intersection of a head-frame ray with the deformed surface, if any.
// The undeformed case is the closed-form ellipsoid quadratic; with a bump the
// crossing is bracketed by marching from the outer bound and polished by
// bisection well below 1e-7 in t.
inline std::optional<double> intersect_surface(const SceneSpec& s, const Ray& ray) {
  double amp = s.expression * s.bump_height;
  if (amp <= 0.0) {
    double exit_t = 0.0;
    auto entry = detail::ellipsoid_entry(s.semi_axes, ray, &exit_t);
    if (!entry || *entry <= 0.0) return std::nullopt;  // miss or origin inside
    return entry;
  }
  // The deformed surface lies between the base ellipsoid and the outer
  // ellipsoid scaled by (1 + amp).
  Vec3 outer_axes = s.semi_axes * (1.0 + amp);
  double outer_exit = 0.0;
  auto outer_entry = detail::ellipsoid_entry(outer_axes, ray, &outer_exit);
  if (!outer_entry) return std::nullopt;
  double lo = *outer_entry, hi = outer_exit;
  constexpr int kMarchSteps = 96;
  double step = (hi - lo) / kMarchSteps;
  double t_prev = lo;
  double f_prev = detail::surface_field(s, ray.origin + t_prev * ray.dir);
  if (f_prev <= 0.0) return std::nullopt;  // started inside
  for (int i = 1; i <= kMarchSteps; ++i) {
    double t = lo + i * step;
    double f = detail::surface_field(s, ray.origin + t * ray.dir);
    if (f <= 0.0) {
      // bisection: bracket shrinks by 2^48, far below the 1e-7 target
      double a = t_prev, b = t;
      for (int it = 0; it < 48; ++it) {
        double mid = 0.5 * (a + b);
        if (detail::surface_field(s, ray.origin + mid * ray.dir) > 0.0)
          a = mid;
        else
          b = mid;
      }
      return 0.5 * (a + b);
    }
    t_prev = t;
    f_prev = f;
  }
  return std::nullopt;
}

inline Vec3 albedo(const SceneSpec& s, const Vec3& x) {
  Vec3 a(0.5, 0.5, 0.5);
  for (int w = 0; w < SceneSpec::kAlbedoWaves; ++w)
    for (int i = 0; i < 3; ++i)
      a[i] += s.albedo_amp[w][i] * std::sin(s.albedo_freq[w][i] * x[i % 3] +
                                            s.albedo_phase[w][i] + 2.1 * w + 0.7 * i);
  return a.cwiseMax(0.0).cwiseMin(1.0);
}

inline const Vec3 kLightDir = Vec3(0.35, 0.45, 0.82).normalized();  // head frame

// Lambertian shade with a fixed ambient floor; view independent.
inline Vec3 shade(const SceneSpec& s, const Vec3& x) {
  Vec3 n = detail::surface_gradient(s, x).normalized();
  double lambert = std::max(0.0, n.dot(kLightDir));
  return albedo(s, x) * (0.3 + 0.7 * lambert);
}

// Traces a ray given in the canonical head frame. Callers with a posed scene
// relativize their cameras by the head pose first; see render_image_analytic.
inline Vec3 trace_ray_analytic(const SceneSpec& s, const Ray& ray) {
  auto hit = intersect_surface(s, ray);
  if (!hit) return s.background;
  return shade(s, ray.origin + *hit * ray.dir);
}

// Analytic ground-truth render. The camera is always relativized by the scene
// head pose, so rendering a posed scene with camera C is bit-identical to
// rendering the canonical scene with relativize_extrinsics(C, head_pose).
using util::FloatImage;

inline FloatImage render_image_analytic(const SceneSpec& s, const geometry::Camera& cam) {
  geometry::Camera rel = geometry::relativize_extrinsics(cam, s.head_pose);
  FloatImage img;
  img.width = cam.width;
  img.height = cam.height;
  img.rgb.resize(size_t(3 * cam.width * cam.height));
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      Ray ray = geometry::generate_ray(geometry::Vec2(x, y), rel);
      Vec3 c = trace_ray_analytic(s, ray);
      float* px = img.pixel(x, y);
      for (int i = 0; i < 3; ++i) px[i] = float(std::clamp(c[i], 0.0, 1.0));
    }
  }
  return img;
}

}  // namespace pixelvol::synthdata
