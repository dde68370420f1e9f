#pragma once

#include <optional>
#include <vector>

#include "pixelvol/encoders/aggregate.hpp"
#include "pixelvol/encoders/feature_net.hpp"
#include "pixelvol/geometry/bilinear.hpp"
#include "pixelvol/geometry/ray.hpp"
#include "pixelvol/radiance/field_net.hpp"
#include "pixelvol/radiance/photometrics.hpp"
#include "pixelvol/radiance/positional_encoding.hpp"
#include "pixelvol/renderer/composite.hpp"
#include "pixelvol/util/image.hpp"
#include "pixelvol/util/parallel.hpp"

namespace pixelvol::renderer {

using geometry::Ray;
using geometry::Vec2;
using geometry::Vec3;
using ndiff::Array;
using ndiff::ParamBinder;
using ndiff::ParamStore;
using ndiff::Var;
using radiance::PixelLoc;

// A posed conditioning image; the camera must already be head-pose relative.
template <typename T>
struct CondView {
  geometry::Camera cam;
  Array<T> image;  // [3 x h x w]
};

// A conditioning view's feature map bound on a specific tape.
template <typename T>
struct BoundView {
  int cam_id = -1;
  geometry::Camera cam;
  Var<T> fm;  // [d-1 x h x w]
  geometry::CameraEncoding enc;
};

// Runs the feature extractor over each conditioning view on the binder's
// tape; the result is sorted by camera id so every later reduction is
// order-canonical.
template <typename T>
std::vector<BoundView<T>> extract_view_features(ParamBinder<T>& bind, const ModelConfig& cfg,
                                                const std::vector<CondView<T>>& views) {
  std::vector<BoundView<T>> out;
  for (const auto& v : views) {
    BoundView<T> b;
    b.cam_id = v.cam.id;
    b.cam = v.cam;
    b.fm = encoders::feature_net_forward(bind, cfg, bind.tape().constant(v.image));
    b.enc = geometry::encode_camera(v.cam);
    out.push_back(std::move(b));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.cam_id < b.cam_id; });
  return out;
}

// Rebinds precomputed feature-map values (e.g. extracted on a separate tape)
// as leaves of this tape. With requires_grad the chunk's backward produces
// d loss / d feature-map seeds for the extractor tape.
template <typename T>
std::vector<BoundView<T>> bind_view_features(ndiff::Tape<T>& tape,
                                             const std::vector<CondView<T>>& views,
                                             const std::vector<Array<T>>& fm_values,
                                             bool requires_grad) {
  if (views.size() != fm_values.size())
    throw std::invalid_argument("bind_view_features: view/feature count mismatch");
  std::vector<BoundView<T>> out;
  for (size_t i = 0; i < views.size(); ++i) {
    BoundView<T> b;
    b.cam_id = views[i].cam.id;
    b.cam = views[i].cam;
    b.fm = tape.leaf(fm_values[i].with_requires_grad(requires_grad));
    b.enc = geometry::encode_camera(views[i].cam);
    out.push_back(std::move(b));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.cam_id < b.cam_id; });
  return out;
}

// Pixel-aligned per-view feature rows for a batch of sample points: project,
// bilinear-sample, and append the visibility flag column. Points behind the
// camera or outside the image get a zero feature and flag 0.
template <typename T>
encoders::ViewFeatureRows<T> sample_view_rows(ndiff::Tape<T>& tape, const BoundView<T>& view,
                                              std::span<const Vec3> points) {
  int64_t n = int64_t(points.size());
  std::vector<Vec2> coords(size_t(n), Vec2::Zero());
  std::vector<uint8_t> valid(size_t(n), 0);
  std::vector<T> flags(size_t(n), T(0));
  for (int64_t i = 0; i < n; ++i) {
    geometry::Projection pr = geometry::project(points[size_t(i)], view.cam);
    if (pr.in_image) {
      coords[size_t(i)] = pr.pixel;
      valid[size_t(i)] = 1;
      flags[size_t(i)] = T(1);
    }
  }
  Var<T> feat = geometry::bilinear_sample_batch(view.fm, coords, valid);
  Var<T> flag_col = tape.constant(Array<T>({n, 1}, std::move(flags)));
  encoders::ViewFeatureRows<T> rows;
  rows.view_id = view.cam_id;
  rows.rows = ndiff::concat<T>({feat, flag_col}, 1);
  rows.enc = view.enc;
  return rows;
}

struct SampleOptions {
  int n_s = 128;
  bool jitter = false;
  util::Rng* rng = nullptr;  // required when jittering
};

template <typename T>
struct RayBatchRender {
  Var<T> pixels;      // [R x 3] after background compositing and color correction
  Var<T> volume_rgb;  // [R x 3]
  Var<T> alpha;       // [R x 1]
};

// The full per-ray model: march, encode, sample conditioning features,
// aggregate, evaluate the field, composite, then background and color
// correction. `photometric_cam` selects the per-camera background residual
// and gain/bias; novel views pass nullopt and get the base background with
// identity correction.
template <typename T>
RayBatchRender<T> render_ray_batch(ParamBinder<T>& bind, const ModelConfig& cfg,
                                   std::span<const Ray> rays, std::span<const PixelLoc> pixels,
                                   std::optional<int> photometric_cam,
                                   const std::vector<BoundView<T>>& views, int code_identity,
                                   const Vec3& background, const SampleOptions& opt) {
  ndiff::Tape<T>& tape = bind.tape();
  int64_t n_rays = int64_t(rays.size());
  if (n_rays == 0) throw std::invalid_argument("render: empty ray batch");
  if (pixels.size() != rays.size())
    throw std::invalid_argument("render: pixel/ray count mismatch");
  if (cfg.kind == ModelKind::PixelAligned && views.empty())
    throw std::invalid_argument("render: need at least one conditioning view");

  const int n_s = opt.n_s;
  std::vector<Vec3> points(size_t(n_rays * n_s));
  std::vector<T> deltas(size_t(n_rays * n_s));
  std::vector<Vec3> dirs(size_t(n_rays));
  for (int64_t r = 0; r < n_rays; ++r) {
    auto s = geometry::sample_along_ray(rays[size_t(r)], n_s, opt.jitter, opt.rng);
    for (int k = 0; k < n_s; ++k) {
      points[size_t(r * n_s + k)] = s.points[size_t(k)];
      deltas[size_t(r * n_s + k)] = T(s.deltas[size_t(k)]);
    }
    dirs[size_t(r)] = rays[size_t(r)].dir;
  }

  Var<T> pe = tape.constant(radiance::positional_encoding_rows<T>(points, cfg.pe_frequencies));

  Var<T> fx;
  if (cfg.kind == ModelKind::GlobalCode) {
    if (code_identity < 0 || code_identity >= cfg.n_identities)
      throw std::invalid_argument("render: code identity out of range");
    Var<T> code = bind("gcode.id" + std::to_string(code_identity));  // [code_width]
    Var<T> zeros = tape.constant(Array<T>::zeros({n_rays * n_s, int64_t(cfg.code_width)}));
    fx = ndiff::add(zeros, code);
  } else {
    std::vector<encoders::ViewFeatureRows<T>> per_view;
    for (const auto& v : views) per_view.push_back(sample_view_rows(tape, v, points));
    fx = encoders::aggregate(bind, cfg, per_view);
  }

  std::optional<Var<T>> dir_pe;
  if (cfg.view_dir_color) {
    std::vector<Vec3> dir_rows(size_t(n_rays * n_s));
    for (int64_t r = 0; r < n_rays; ++r)
      for (int k = 0; k < n_s; ++k) dir_rows[size_t(r * n_s + k)] = dirs[size_t(r)];
    dir_pe = tape.constant(radiance::positional_encoding_rows<T>(dir_rows, cfg.pe_frequencies));
  }

  auto field = radiance::field_net_forward(bind, cfg, pe, fx, dir_pe);
  Var<T> composited = composite_rays(field.rgb, field.sigma, deltas, n_rays);
  Var<T> volume_rgb = ndiff::columns(composited, 0, 3);
  Var<T> alpha = ndiff::columns(composited, 3, 4);

  std::vector<PixelLoc> px(pixels.begin(), pixels.end());
  Var<T> bg = radiance::background_rows(bind, photometric_cam, px, background);
  Var<T> one_minus_alpha = ndiff::scale_add(alpha, T(-1), T(1));
  Var<T> oma3 = ndiff::concat<T>({one_minus_alpha, one_minus_alpha, one_minus_alpha}, 1);
  Var<T> composed = ndiff::add(volume_rgb, ndiff::mul(bg, oma3));
  Var<T> corrected = radiance::color_correct_rows(bind, photometric_cam, composed);

  return RayBatchRender<T>{corrected, volume_rgb, alpha};
}

template <typename T>
struct ImageRender {
  util::FloatImage color;      // clamped for encoding
  std::vector<float> raw_rgb;  // pre-clamp values, interleaved
  std::vector<float> alpha;
};

// Renders a full image in chunks (forward only). The target camera must be
// head-pose relative; `photometric_cam` applies that camera's background
// residual and color correction.
template <typename T>
ImageRender<T> render_image(const ParamStore<T>& store, const ModelConfig& cfg,
                            const geometry::Camera& target, std::optional<int> photometric_cam,
                            const std::vector<CondView<T>>& cond_views, int code_identity,
                            const Vec3& background, int n_s, int chunk_samples = 4096) {
  // Feature maps once per view on a scratch tape.
  std::vector<Array<T>> fm_values;
  {
    ndiff::Tape<T> feat_tape;
    ParamBinder<T> bind(feat_tape, store);
    if (cfg.kind == ModelKind::PixelAligned)
      for (const auto& v : cond_views)
        fm_values.push_back(
            feat_tape.value(encoders::feature_net_forward(bind, cfg, feat_tape.constant(v.image))));
  }

  int64_t n_pixels = int64_t(target.width) * target.height;
  std::vector<Ray> rays(size_t(n_pixels));
  std::vector<PixelLoc> pixels(size_t(n_pixels));
  for (int y = 0; y < target.height; ++y) {
    for (int x = 0; x < target.width; ++x) {
      int64_t i = int64_t(y) * target.width + x;
      rays[size_t(i)] = geometry::generate_ray(Vec2(x, y), target);
      geometry::assign_near_far(rays[size_t(i)]);
      pixels[size_t(i)] = PixelLoc{x, y};
    }
  }

  ImageRender<T> out;
  out.color = util::FloatImage(target.width, target.height);
  out.raw_rgb.assign(size_t(n_pixels) * 3, 0.f);
  out.alpha.assign(size_t(n_pixels), 0.f);

  int64_t rays_per_chunk = std::max<int64_t>(1, chunk_samples / n_s);
  int64_t n_chunks = (n_pixels + rays_per_chunk - 1) / rays_per_chunk;
  util::parallel_tasks(int(n_chunks), [&](int chunk) {
    int64_t begin = chunk * rays_per_chunk;
    int64_t count = std::min(rays_per_chunk, n_pixels - begin);
    ndiff::Tape<T> tape;
    ParamBinder<T> bind(tape, store);
    auto views = bind_view_features(tape, cond_views, fm_values, false);
    SampleOptions opt;
    opt.n_s = n_s;
    auto render = render_ray_batch(bind, cfg,
                                   std::span<const Ray>(rays.data() + begin, size_t(count)),
                                   std::span<const PixelLoc>(pixels.data() + begin, size_t(count)),
                                   photometric_cam, views, code_identity, background, opt);
    const Array<T>& px = tape.value(render.pixels);
    const Array<T>& al = tape.value(render.alpha);
    for (int64_t r = 0; r < count; ++r) {
      for (int c = 0; c < 3; ++c) {
        float v = float(px[r * 3 + c]);
        out.raw_rgb[size_t((begin + r) * 3 + c)] = v;
        out.color.rgb[size_t((begin + r) * 3 + c)] = std::clamp(v, 0.f, 1.f);
      }
      out.alpha[size_t(begin + r)] = float(al[r]);
    }
  });
  return out;
}

}  // namespace pixelvol::renderer
