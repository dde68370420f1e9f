#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "pixelvol/util/fsio.hpp"

namespace pixelvol::geometry {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// x_world = R * x + t.
struct RigidTransform {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  RigidTransform inverse() const { return {R.transpose(), -(R.transpose() * t)}; }

  Vec3 apply(const Vec3& x) const { return R * x + t; }

  // this ∘ other: apply `other` first.
  RigidTransform compose(const RigidTransform& other) const {
    return {R * other.R, R * other.t + t};
  }

  bool is_rigid(double tol = 1e-9) const {
    return (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(R.determinant() - 1.0) <= 10 * tol;
  }
};

// Pinhole camera, world-to-camera extrinsics (x_cam = R x_world + t). Pixel
// (0,0) is the center of the top-left pixel.
struct Camera {
  int id = 0;
  int width = 0, height = 0;
  Mat3 K = Mat3::Identity();
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 center() const { return -(R.transpose() * t); }
  double fx() const { return K(0, 0); }
  double fy() const { return K(1, 1); }
  double cx() const { return K(0, 2); }
  double cy() const { return K(1, 2); }

  void validate() const {
    if (width <= 0 || height <= 0) throw std::invalid_argument("camera: non-positive image size");
    if (fx() <= 0 || fy() <= 0) throw std::invalid_argument("camera: focal length must be positive");
    if (cx() < 0 || cx() >= width || cy() < 0 || cy() >= height)
      throw std::invalid_argument("camera: principal point outside image");
    if ((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
        R.determinant() < 0)
      throw std::invalid_argument("camera: rotation is not orthonormal");
  }
};

// Expresses the camera in the head-centered frame: with the head-to-world
// pose H, a head-frame point x maps to pixel space through R*H plus the
// shifted translation. Composing the result with H recovers the original.
inline Camera relativize_extrinsics(const Camera& cam, const RigidTransform& head_pose) {
  if (!head_pose.is_rigid())
    throw std::invalid_argument("relativize_extrinsics: head pose is not rigid");
  Camera out = cam;
  out.R = cam.R * head_pose.R;
  out.t = cam.R * head_pose.t + cam.t;
  return out;
}

// Camera identity summarized as a unit quaternion (of the world-to-camera
// rotation, scalar part canonicalized non-negative) plus the camera center.
struct CameraEncoding {
  Eigen::Vector4d q;  // (w, x, y, z)
  Vec3 p;
};

inline CameraEncoding encode_camera(const Camera& cam) {
  Eigen::Quaterniond q(cam.R);
  q.normalize();
  if (q.w() < 0) q.coeffs() = -q.coeffs();
  CameraEncoding enc;
  enc.q = Eigen::Vector4d(q.w(), q.x(), q.y(), q.z());
  enc.p = cam.center();
  return enc;
}

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 dir = Vec3::UnitZ();  // unit length
  double t_near = 0.0, t_far = 1.0;
};

inline Ray generate_ray(const Vec2& pixel, const Camera& cam) {
  if (std::abs(cam.K.determinant()) < 1e-12)
    throw std::invalid_argument("generate_ray: degenerate intrinsics");
  Vec3 pix_h(pixel.x(), pixel.y(), 1.0);
  Vec3 dir_cam = cam.K.inverse() * pix_h;
  Vec3 dir_world = cam.R.transpose() * dir_cam;
  Ray ray;
  ray.origin = cam.center();
  ray.dir = dir_world.normalized();
  return ray;
}

struct Projection {
  Vec2 pixel = Vec2::Zero();
  double depth = 0.0;   // z in the camera frame
  bool in_image = false;  // depth > 0 and pixel inside [0,w) x [0,h)
};

inline Projection project(const Vec3& X, const Camera& cam) {
  Vec3 xc = cam.R * X + cam.t;
  Projection pr;
  pr.depth = xc.z();
  if (xc.z() <= 0) return pr;  // behind the camera; caller applies the out-of-view policy
  Vec3 h = cam.K * xc;
  pr.pixel = Vec2(h.x() / h.z(), h.y() / h.z());
  pr.in_image = pr.pixel.x() >= 0 && pr.pixel.x() < cam.width && pr.pixel.y() >= 0 &&
                pr.pixel.y() < cam.height;
  return pr;
}

// ---------------------------------------------------------------------------
// Rig file: JSON with per-camera {id, width, height, K, R, t} (matrices
// row-major) and an optional per-frame head_pose {R, t}.

struct Rig {
  std::vector<Camera> cameras;
  std::optional<RigidTransform> head_pose;
};

namespace detail {

inline nlohmann::json mat_json(const Mat3& m) {
  nlohmann::json a = nlohmann::json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a.push_back(m(r, c));
  return a;
}

inline nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

inline Mat3 mat_from_json(const nlohmann::json& a) {
  if (!a.is_array() || a.size() != 9) throw std::runtime_error("rig: expected 9-element matrix");
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = a[size_t(3 * r + c)].get<double>();
  return m;
}

inline Vec3 vec_from_json(const nlohmann::json& a) {
  if (!a.is_array() || a.size() != 3) throw std::runtime_error("rig: expected 3-element vector");
  return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
}

}  // namespace detail

inline nlohmann::json rig_to_json(const Rig& rig) {
  nlohmann::json j;
  j["cameras"] = nlohmann::json::array();
  for (const Camera& c : rig.cameras) {
    j["cameras"].push_back({{"id", c.id},
                            {"width", c.width},
                            {"height", c.height},
                            {"K", detail::mat_json(c.K)},
                            {"R", detail::mat_json(c.R)},
                            {"t", detail::vec_json(c.t)}});
  }
  if (rig.head_pose) {
    j["head_pose"] = {{"R", detail::mat_json(rig.head_pose->R)},
                      {"t", detail::vec_json(rig.head_pose->t)}};
  }
  return j;
}

inline Rig rig_from_json(const nlohmann::json& j) {
  Rig rig;
  for (const auto& cj : j.at("cameras")) {
    Camera c;
    c.id = cj.at("id").get<int>();
    c.width = cj.at("width").get<int>();
    c.height = cj.at("height").get<int>();
    c.K = detail::mat_from_json(cj.at("K"));
    c.R = detail::mat_from_json(cj.at("R"));
    c.t = detail::vec_from_json(cj.at("t"));
    c.validate();
    rig.cameras.push_back(c);
  }
  if (j.contains("head_pose")) {
    RigidTransform h;
    h.R = detail::mat_from_json(j.at("head_pose").at("R"));
    h.t = detail::vec_from_json(j.at("head_pose").at("t"));
    rig.head_pose = h;
  }
  return rig;
}

inline void save_rig(const std::string& path, const Rig& rig) {
  util::atomic_write(path, rig_to_json(rig).dump(2) + "\n");
}

inline Rig load_rig(const std::string& path) {
  return rig_from_json(nlohmann::json::parse(util::read_file(path)));
}

}  // namespace pixelvol::geometry
