#include <catch2/catch_amalgamated.hpp>

#include "pixelvol/geometry/bilinear.hpp"
#include "pixelvol/geometry/camera.hpp"
#include "pixelvol/geometry/ray.hpp"
#include "pixelvol/ndiff/finite_diff.hpp"
#include "pixelvol/ndiff/ops.hpp"
#include "pixelvol/synthdata/rig.hpp"

using namespace pixelvol;
using namespace pixelvol::geometry;

namespace {

Camera test_camera(double fx = 100, double fy = 100, double cx = 50, double cy = 50, int w = 100,
                   int h = 100) {
  Camera c;
  c.width = w;
  c.height = h;
  c.K << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return c;
}

RigidTransform random_pose(util::Rng& rng, double max_angle = 3.0, double max_t = 1.0) {
  Vec3 axis(rng.normal(), rng.normal(), rng.normal());
  axis.normalize();
  RigidTransform h;
  h.R = Eigen::AngleAxisd(rng.uniform(0, max_angle), axis).toRotationMatrix();
  h.t = Vec3(rng.uniform(-max_t, max_t), rng.uniform(-max_t, max_t), rng.uniform(-max_t, max_t));
  return h;
}

Camera random_camera(util::Rng& rng) {
  Camera c = test_camera(rng.uniform(60, 140), rng.uniform(60, 140), rng.uniform(30, 70),
                         rng.uniform(30, 70));
  RigidTransform p = random_pose(rng);
  c.R = p.R;
  c.t = p.t;
  return c;
}

}  // namespace

TEST_CASE("relativize_extrinsics") {
  util::Rng rng(17);
  Camera cam = random_camera(rng);

  SECTION("identity head pose leaves the camera unchanged") {
    Camera rel = relativize_extrinsics(cam, RigidTransform::identity());
    CHECK((rel.R - cam.R).cwiseAbs().maxCoeff() == 0.0);
    CHECK((rel.t - cam.t).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("relativizing by the camera's own pose lands at the canonical origin frame") {
    RigidTransform own{cam.R.transpose(), cam.center()};  // camera-to-world
    Camera rel = relativize_extrinsics(cam, own);
    CHECK((rel.R - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(rel.t.cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("round trip recovers the original within 1e-9") {
    for (int i = 0; i < 20; ++i) {
      Camera c = random_camera(rng);
      RigidTransform h = random_pose(rng);
      Camera rel = relativize_extrinsics(c, h);
      Camera back = relativize_extrinsics(rel, h.inverse());
      CHECK((back.R - c.R).cwiseAbs().maxCoeff() < 1e-9);
      CHECK((back.t - c.t).cwiseAbs().maxCoeff() < 1e-9);
    }
  }

  SECTION("non-rigid pose is rejected") {
    RigidTransform bad;
    bad.R(0, 0) = 2.0;
    CHECK_THROWS_AS(relativize_extrinsics(cam, bad), std::invalid_argument);
  }
}

TEST_CASE("generate_ray") {
  Camera cam = test_camera();

  SECTION("principal point maps to the optical axis") {
    Ray r = generate_ray(Vec2(50, 50), cam);
    CHECK((r.dir - Vec3(0, 0, 1)).norm() < 1e-12);
    CHECK(r.origin.norm() == 0.0);
  }

  SECTION("hand-evaluated off-axis direction") {
    Ray r = generate_ray(Vec2(150, 50), cam);
    Vec3 expected = Vec3(1, 0, 1).normalized();
    CHECK((r.dir - expected).norm() < 1e-12);
  }

  SECTION("projection inverts ray generation for any s > 0") {
    util::Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
      Camera c = random_camera(rng);
      Vec2 px(rng.uniform(0, c.width - 1), rng.uniform(0, c.height - 1));
      Ray r = generate_ray(px, c);
      double s = rng.uniform(0.1, 10.0);
      Projection pr = project(Vec3(r.origin + s * r.dir), c);
      CHECK(pr.depth > 0);
      CHECK((pr.pixel - px).norm() < 1e-6);
    }
  }

  SECTION("unit direction and local pixel linearity at the image center") {
    util::Rng rng(5);
    for (int i = 0; i < 100; ++i) {
      Camera c = random_camera(rng);
      Vec2 px(c.cx(), c.cy());
      Ray r0 = generate_ray(px, c);
      CHECK(std::abs(r0.dir.norm() - 1.0) < 1e-9);
      Ray r1 = generate_ray(px + Vec2(1, 0), c);
      Projection p0 = project(Vec3(r0.origin + 2.0 * r0.dir), c);
      Projection p1 = project(Vec3(r1.origin + 2.0 * r1.dir), c);
      CHECK(std::abs((p1.pixel - p0.pixel).x() - 1.0) < 1e-3);
      CHECK(std::abs((p1.pixel - p0.pixel).y()) < 1e-3);
    }
  }

  SECTION("degenerate intrinsics are rejected") {
    Camera bad = cam;
    bad.K(0, 0) = 0.0;
    CHECK_THROWS_AS(generate_ray(Vec2(1, 1), bad), std::invalid_argument);
  }
}

TEST_CASE("project") {
  Camera cam = test_camera();

  SECTION("optical axis point lands on the principal point") {
    Projection pr = project(Vec3(0, 0, 1), cam);
    CHECK(pr.in_image);
    CHECK((pr.pixel - Vec2(50, 50)).norm() < 1e-12);
  }

  SECTION("hand-evaluated pinhole") {
    Projection pr = project(Vec3(0.1, 0, 1), cam);
    CHECK(pr.pixel.x() == Catch::Approx(60.0).margin(1e-9));
    CHECK(pr.pixel.y() == Catch::Approx(50.0).margin(1e-9));
  }

  SECTION("behind-camera points are flagged, not thrown") {
    Projection pr = project(Vec3(0, 0, -1), cam);
    CHECK(!pr.in_image);
    CHECK(pr.depth < 0);
  }

  SECTION("out-of-bounds pixels are flagged") {
    Projection pr = project(Vec3(10, 0, 1), cam);  // u = 100*10 + 50, far right
    CHECK(pr.depth > 0);
    CHECK(!pr.in_image);
  }
}

TEST_CASE("camera encoding") {
  util::Rng rng(29);
  for (int i = 0; i < 50; ++i) {
    Camera c = random_camera(rng);
    CameraEncoding enc = encode_camera(c);
    CHECK(std::abs(enc.q.norm() - 1.0) < 1e-9);
    CHECK(enc.q[0] >= 0.0);
    CHECK((enc.p - c.center()).norm() == 0.0);
    // quaternion reproduces the rotation
    Eigen::Quaterniond q(enc.q[0], enc.q[1], enc.q[2], enc.q[3]);
    CHECK((q.toRotationMatrix() - c.R).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("sample_along_ray") {
  Ray ray;
  ray.origin = Vec3(0, 0, -2);
  ray.dir = Vec3(0, 0, 1);
  ray.t_near = 0.0;
  ray.t_far = 1.0;

  SECTION("two unjittered samples hit the endpoints") {
    auto s = sample_along_ray(ray, 2, false);
    CHECK(s.ts == std::vector<double>{0.0, 1.0});
    CHECK(s.deltas[0] == 1.0);
    CHECK(s.deltas[1] == 0.0);  // closing bin
  }

  SECTION("spacings partition the interval") {
    util::Rng rng(7);
    for (bool jitter : {false, true}) {
      Ray r = ray;
      r.t_near = 0.3;
      r.t_far = 2.1;
      auto s = sample_along_ray(r, 33, jitter, &rng);
      double sum = 0;
      for (double d : s.deltas) {
        CHECK(d >= 0.0);
        sum += d;
      }
      // the spacings telescope to the far bound from the first sample;
      // without jitter that first sample is exactly t_near
      CHECK(sum == Catch::Approx(r.t_far - s.ts[0]).margin(1e-9));
      if (!jitter) CHECK(sum == Catch::Approx(r.t_far - r.t_near).margin(1e-9));
    }
  }

  SECTION("jittered draws are stratified with per-bin means at bin centers") {
    util::Rng rng(11);
    const int n_s = 8, draws = 10000;
    std::vector<double> mean(n_s, 0.0);
    for (int d = 0; d < draws; ++d) {
      auto s = sample_along_ray(ray, n_s, true, &rng);
      for (int k = 0; k < n_s; ++k) {
        double bin = 1.0 / n_s;
        CHECK(s.ts[size_t(k)] >= k * bin);
        CHECK(s.ts[size_t(k)] < (k + 1) * bin + 1e-12);
        mean[size_t(k)] += s.ts[size_t(k)];
      }
    }
    // mean of U[a,b] has std (b-a)/sqrt(12); 3 sigma over `draws`
    double bin = 1.0 / n_s;
    double tol = 3.0 * bin / std::sqrt(12.0 * draws);
    for (int k = 0; k < n_s; ++k)
      CHECK(mean[size_t(k)] / draws == Catch::Approx((k + 0.5) * bin).margin(tol));
  }

  SECTION("points are clamped to the unit cube") {
    Ray r = ray;
    r.t_near = 0.0;
    r.t_far = 4.0;
    auto s = sample_along_ray(r, 16, false);
    for (const Vec3& p : s.points) {
      CHECK(p.cwiseAbs().maxCoeff() <= 0.5);
    }
    // deltas keep the parametric spacing, not the clamped geometry
    CHECK(s.deltas[0] == Catch::Approx(4.0 / 15).margin(1e-12));
  }

  SECTION("fewer than two samples is an error") {
    CHECK_THROWS_AS(sample_along_ray(ray, 1, false), std::invalid_argument);
  }
}

TEST_CASE("ray near/far from the bounding sphere") {
  Ray ray;
  ray.origin = Vec3(0, 0, -2);
  ray.dir = Vec3(0, 0, 1);
  assign_near_far(ray);
  CHECK(ray.t_near == Catch::Approx(2.0 - kSceneBoundRadius).margin(1e-12));
  CHECK(ray.t_far == Catch::Approx(2.0 + kSceneBoundRadius).margin(1e-12));

  Ray miss;
  miss.origin = Vec3(0, 5, -2);
  miss.dir = Vec3(0, 0, 1);
  assign_near_far(miss);
  CHECK(miss.t_near == kFallbackNear);
  CHECK(miss.t_far == kFallbackFar);
}

TEST_CASE("bilinear_sample") {
  using ndiff::Array;
  // 2-channel 3x3 map with distinct values
  std::vector<double> vals(18);
  for (size_t i = 0; i < vals.size(); ++i) vals[i] = double(i) * 0.5;
  Array<double> fm({2, 3, 3}, vals);

  SECTION("texel centers return that texel") {
    auto v = bilinear_sample(fm, Vec2(2, 1));
    CHECK(v[0] == vals[1 * 3 + 2]);
    CHECK(v[1] == vals[9 + 1 * 3 + 2]);
  }

  SECTION("midpoints average the two neighbors") {
    auto v = bilinear_sample(fm, Vec2(0.5, 0));
    CHECK(v[0] == Catch::Approx(0.5 * (vals[0] + vals[1])).margin(1e-12));
  }

  SECTION("coordinates outside the map clamp to the border") {
    auto v = bilinear_sample(fm, Vec2(-3.0, 10.0));
    CHECK(v[0] == vals[2 * 3 + 0]);
  }

  SECTION("gradient w.r.t. the feature map matches finite differences") {
    util::Rng rng(13);
    std::vector<Vec2> coords;
    std::vector<uint8_t> valid;
    for (int i = 0; i < 7; ++i) {
      coords.emplace_back(rng.uniform(-0.5, 2.5), rng.uniform(-0.5, 2.5));
      valid.push_back(1);
    }
    coords.emplace_back(1.0, 1.0);
    valid.push_back(0);  // out-of-view row stays zero

    ndiff::Tape<double> tape;
    auto v = tape.leaf(fm.with_requires_grad(true));
    auto sampled = bilinear_sample_batch(v, coords, valid);
    // invalid rows are exactly zero
    const auto& sv = tape.value(sampled);
    for (int64_t ch = 0; ch < 2; ++ch) CHECK(sv[(7) * 2 + ch] == 0.0);
    tape.backward(ndiff::reduce_sum(ndiff::square(sampled)));
    auto analytic = tape.grad(v).to_vector();

    auto numeric = ndiff::numeric_gradient(
        [&](const Array<double>& pert) {
          ndiff::Tape<double> t2;
          auto p = t2.leaf(pert);
          auto s = bilinear_sample_batch(p, coords, valid);
          return t2.value(ndiff::reduce_sum(ndiff::square(s)))[0];
        },
        fm, 1e-6);
    CHECK(ndiff::max_relative_error(analytic, numeric) < 1e-6);
  }
}

TEST_CASE("rig file round trip") {
  util::Rng rng(31);
  Rig rig;
  for (int i = 0; i < 3; ++i) {
    Camera c = random_camera(rng);
    c.id = i;
    rig.cameras.push_back(c);
  }
  rig.head_pose = random_pose(rng);
  auto j = rig_to_json(rig);
  Rig back = rig_from_json(j);
  REQUIRE(back.cameras.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK((back.cameras[i].K - rig.cameras[i].K).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.cameras[i].R - rig.cameras[i].R).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.cameras[i].t - rig.cameras[i].t).cwiseAbs().maxCoeff() == 0.0);
  }
  REQUIRE(back.head_pose.has_value());
  CHECK((back.head_pose->R - rig.head_pose->R).cwiseAbs().maxCoeff() == 0.0);
}
