#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pixelvol/model_config.hpp"
#include "pixelvol/ndiff/nn.hpp"

namespace pixelvol::radiance {

// Per-camera photometric state: a gain/bias color correction and a learned
// background residual image. Camera 0 is the reference: its gain and bias are
// pinned (non-trainable) to remove the global brightness gauge; its
// background residual trains freely.

struct PixelLoc {
  int x = 0, y = 0;
};

inline std::string gain_name(int cam) { return "photom.cam" + std::to_string(cam) + ".gain"; }
inline std::string bias_name(int cam) { return "photom.cam" + std::to_string(cam) + ".bias"; }
inline std::string bg_name(int cam) { return "nbg.cam" + std::to_string(cam); }

template <typename T>
void init_photometrics(ndiff::ParamStore<T>& store, const ModelConfig& cfg) {
  for (int cam = 0; cam < cfg.n_cameras; ++cam) {
    bool trainable = cam != 0;
    store.add(gain_name(cam), ndiff::Array<T>::full({3}, T(1)), trainable);
    store.add(bias_name(cam), ndiff::Array<T>::zeros({3}), trainable);
    store.add(bg_name(cam), ndiff::Array<T>::zeros({3, cfg.image_size, cfg.image_size}), true);
  }
}

template <typename T>
void check_camera_known(const ndiff::ParamStore<T>& store, int cam_id) {
  if (!store.has(gain_name(cam_id)))
    throw std::invalid_argument("unknown camera id " + std::to_string(cam_id));
}

// Differentiable gather of per-pixel rows from a [3 x h x w] image.
template <typename T>
ndiff::Var<T> gather_pixels(ndiff::Var<T> img, const std::vector<PixelLoc>& pixels) {
  ndiff::Tape<T>& tape = *img.tape;
  const ndiff::Array<T>& iv = tape.value(img);
  if (iv.rank() != 3 || iv.extent(0) != 3)
    throw std::invalid_argument("gather_pixels: expected [3 x h x w]");
  int64_t h = iv.extent(1), w = iv.extent(2);
  int64_t n = int64_t(pixels.size());
  for (const PixelLoc& p : pixels)
    if (p.x < 0 || p.x >= w || p.y < 0 || p.y >= h)
      throw std::invalid_argument("gather_pixels: pixel out of range");
  std::vector<T> out(size_t(n) * 3);
  const T* data = iv.data();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < 3; ++c)
      out[size_t(i * 3 + c)] = data[c * h * w + pixels[size_t(i)].y * w + pixels[size_t(i)].x];
  std::vector<PixelLoc> px = pixels;
  return tape.make_node(
      ndiff::Array<T>({n, 3}, std::move(out)), {img},
      [img, px, h, w, n](ndiff::Tape<T>& t, const std::vector<T>& g) {
        if (!t.needs_grad(img)) return;
        std::vector<T>& gi = t.grad_buffer(img);
        for (int64_t i = 0; i < n; ++i)
          for (int64_t c = 0; c < 3; ++c)
            gi[size_t(c * h * w + px[size_t(i)].y * w + px[size_t(i)].x)] += g[size_t(i * 3 + c)];
      },
      "gather_pixels");
}

// Full background image for a camera: base plus learned residual, clamped to
// [0, 1].
template <typename T>
ndiff::Var<T> background_image(ndiff::ParamBinder<T>& bind, int cam_id,
                               const ndiff::Array<T>& base) {
  check_camera_known(bind.store(), cam_id);
  ndiff::Var<T> resid = bind(bg_name(cam_id));
  if (bind.tape().value(resid).shape() != base.shape())
    throw std::invalid_argument("background_image: base shape mismatch");
  return ndiff::clamp(ndiff::add(bind.tape().constant(base), resid), T(0), T(1));
}

// Per-ray background rows: constant base color plus the residual sampled at
// the ray pixels. For novel cameras (nullopt) the base alone is used.
template <typename T>
ndiff::Var<T> background_rows(ndiff::ParamBinder<T>& bind, std::optional<int> cam_id,
                              const std::vector<PixelLoc>& pixels, const geometry::Vec3& base) {
  ndiff::Tape<T>& tape = bind.tape();
  int64_t n = int64_t(pixels.size());
  std::vector<T> base_rows(size_t(n) * 3);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < 3; ++c) base_rows[size_t(i * 3 + c)] = T(base[c]);
  ndiff::Var<T> rows = tape.constant(ndiff::Array<T>({n, 3}, std::move(base_rows)));
  if (!cam_id) return ndiff::clamp(rows, T(0), T(1));
  check_camera_known(bind.store(), *cam_id);
  ndiff::Var<T> resid = gather_pixels(bind(bg_name(*cam_id)), pixels);
  return ndiff::clamp(ndiff::add(rows, resid), T(0), T(1));
}

// I' = gain ⊙ I + bias rowwise; identity for novel cameras.
template <typename T>
ndiff::Var<T> color_correct_rows(ndiff::ParamBinder<T>& bind, std::optional<int> cam_id,
                                 ndiff::Var<T> rows) {
  if (!cam_id) return rows;
  check_camera_known(bind.store(), *cam_id);
  return ndiff::add(ndiff::mul(rows, bind(gain_name(*cam_id))), bind(bias_name(*cam_id)));
}

}  // namespace pixelvol::radiance
