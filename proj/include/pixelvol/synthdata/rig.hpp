#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "pixelvol/geometry/camera.hpp"

namespace pixelvol::synthdata {

namespace detail {

inline geometry::Camera look_at_camera(int id, const geometry::Vec3& pos, int width, int height) {
  geometry::Vec3 up(0, 1, 0);
  geometry::Vec3 z = (-pos).normalized();  // toward the origin
  if (z.cross(up).norm() < 1e-6) up = geometry::Vec3(0, 0, 1);
  geometry::Vec3 x = z.cross(up).normalized();
  geometry::Vec3 y = z.cross(x);
  geometry::Camera cam;
  cam.id = id;
  cam.width = width;
  cam.height = height;
  cam.R.row(0) = x.transpose();
  cam.R.row(1) = y.transpose();
  cam.R.row(2) = z.transpose();
  cam.t = -(cam.R * pos);
  double f = 1.1 * width;
  cam.K << f, 0, 0.5 * (width - 1), 0, f, 0.5 * (height - 1), 0, 0, 1;
  cam.validate();
  return cam;
}

}  // namespace detail

// Cameras looking at the origin: all on the equatorial ring for n <= 4,
// otherwise n-2 on the ring plus two elevated (azimuth 0 and 180 degrees).
// Camera 0 sits on +Z, facing the expression bump.
inline std::vector<geometry::Camera> camera_rig(int n_cams, double radius, int width,
                                                int height) {
  if (n_cams < 2) throw std::invalid_argument("camera_rig: need at least 2 cameras");
  if (radius < 1.0)
    throw std::invalid_argument("camera_rig: radius must place cameras outside the unit cube");
  int ring = n_cams <= 4 ? n_cams : n_cams - 2;
  std::vector<geometry::Camera> cams;
  for (int i = 0; i < ring; ++i) {
    double az = 2.0 * std::numbers::pi * i / ring;
    geometry::Vec3 pos = radius * geometry::Vec3(std::sin(az), 0.0, std::cos(az));
    cams.push_back(detail::look_at_camera(i, pos, width, height));
  }
  if (n_cams > 4) {
    double el = 38.0 * std::numbers::pi / 180.0;
    for (int k = 0; k < 2; ++k) {
      double az = k * std::numbers::pi;
      geometry::Vec3 pos = radius * geometry::Vec3(std::sin(az) * std::cos(el), std::sin(el),
                                                   std::cos(az) * std::cos(el));
      cams.push_back(detail::look_at_camera(ring + k, pos, width, height));
    }
  }
  return cams;
}

inline int ring_camera_count(int n_cams) { return n_cams <= 4 ? n_cams : n_cams - 2; }

// Equatorial orbit poses for novel-view sweeps, expressed in the head frame.
inline std::vector<geometry::Camera> orbit_cameras(int count, double radius, int width,
                                                   int height) {
  if (count < 1) throw std::invalid_argument("orbit_cameras: need at least 1 view");
  std::vector<geometry::Camera> cams;
  for (int i = 0; i < count; ++i) {
    double az = 2.0 * std::numbers::pi * i / count;
    geometry::Vec3 pos = radius * geometry::Vec3(std::sin(az), 0.0, std::cos(az));
    cams.push_back(detail::look_at_camera(1000 + i, pos, width, height));
  }
  return cams;
}

}  // namespace pixelvol::synthdata
