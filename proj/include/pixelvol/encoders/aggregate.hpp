#pragma once

#include <algorithm>
#include <vector>

#include "pixelvol/geometry/camera.hpp"
#include "pixelvol/model_config.hpp"
#include "pixelvol/ndiff/nn.hpp"

namespace pixelvol::encoders {

// Per-view feature rows for one batch of sample points: [N x d] where the
// last column is the visibility flag.
template <typename T>
struct ViewFeatureRows {
  int view_id = -1;
  ndiff::Var<T> rows;
  geometry::CameraEncoding enc;
};

template <typename T>
void init_camera_summarizer(ndiff::ParamStore<T>& store, const ModelConfig& cfg,
                            util::Rng& rng) {
  ndiff::add_linear(store, "ncf.l0", cfg.feature_width + 7, cfg.ncf_width, rng);
  ndiff::add_linear(store, "ncf.l1", cfg.ncf_width, cfg.ncf_width, rng);
  ndiff::add_linear(store, "ncf.out", cfg.ncf_width, cfg.summary_width, rng);
}

// N_cf: rows [N x d] plus the broadcast camera encoding (unit quaternion and
// camera center) -> [N x d'].
template <typename T>
ndiff::Var<T> camera_summarize(ndiff::ParamBinder<T>& bind, const ModelConfig& cfg,
                               ndiff::Var<T> rows, const geometry::CameraEncoding& enc) {
  ndiff::Tape<T>& tape = bind.tape();
  const ndiff::Array<T>& rv = tape.value(rows);
  if (rv.rank() != 2 || rv.extent(1) != cfg.feature_width)
    throw std::invalid_argument("camera_summarize: feature rows must be [N x d]");
  if (std::abs(enc.q.norm() - 1.0) > 1e-6)
    throw std::invalid_argument("camera_summarize: quaternion must be unit length");
  int64_t n = rv.extent(0);
  std::vector<T> cam_tile(size_t(n) * 7);
  for (int64_t i = 0; i < n; ++i) {
    T* row = cam_tile.data() + i * 7;
    for (int k = 0; k < 4; ++k) row[k] = T(enc.q[k]);
    for (int k = 0; k < 3; ++k) row[4 + k] = T(enc.p[k]);
  }
  ndiff::Var<T> cam_rows = tape.constant(ndiff::Array<T>({n, 7}, std::move(cam_tile)));
  ndiff::Var<T> x = ndiff::concat<T>({rows, cam_rows}, 1);
  x = ndiff::relu(ndiff::linear(bind, "ncf.l0", x));
  x = ndiff::relu(ndiff::linear(bind, "ncf.l1", x));
  return ndiff::linear(bind, "ncf.out", x);
}

namespace detail {

template <typename T>
std::vector<ViewFeatureRows<T>> sorted_by_view(std::vector<ViewFeatureRows<T>> views) {
  std::sort(views.begin(), views.end(),
            [](const auto& a, const auto& b) { return a.view_id < b.view_id; });
  return views;
}

}  // namespace detail

// Order-sensitive concatenation along the feature axis; callers pass views in
// rig order.
template <typename T>
ndiff::Var<T> aggregate_concat(const std::vector<ViewFeatureRows<T>>& views) {
  if (views.empty()) throw std::invalid_argument("aggregate_concat: no views");
  std::vector<ndiff::Var<T>> parts;
  for (const auto& v : views) parts.push_back(v.rows);
  return ndiff::concat(parts, 1);
}

// Permutation-invariant mean; views are summed in canonical (view id) order
// so the invariance is bit-exact, not just mathematical.
template <typename T>
ndiff::Var<T> aggregate_mean(const std::vector<ViewFeatureRows<T>>& views) {
  if (views.empty()) throw std::invalid_argument("aggregate_mean: no views");
  auto sorted = detail::sorted_by_view(views);
  ndiff::Var<T> acc = sorted[0].rows;
  for (size_t i = 1; i < sorted.size(); ++i) acc = ndiff::add(acc, sorted[i].rows);
  return ndiff::scale_add(acc, T(1) / T(sorted.size()));
}

// Camera-summarized mean: each view passes through N_cf with its camera
// encoding, then the summaries are averaged in canonical order.
template <typename T>
ndiff::Var<T> aggregate_camera_summarized(ndiff::ParamBinder<T>& bind, const ModelConfig& cfg,
                                          const std::vector<ViewFeatureRows<T>>& views) {
  if (views.empty()) throw std::invalid_argument("aggregate_camera_summarized: no views");
  auto sorted = detail::sorted_by_view(views);
  ndiff::Var<T> acc;
  for (size_t i = 0; i < sorted.size(); ++i) {
    ndiff::Var<T> s = camera_summarize(bind, cfg, sorted[i].rows, sorted[i].enc);
    acc = i == 0 ? s : ndiff::add(acc, s);
  }
  return ndiff::scale_add(acc, T(1) / T(sorted.size()));
}

template <typename T>
ndiff::Var<T> aggregate(ndiff::ParamBinder<T>& bind, const ModelConfig& cfg,
                        const std::vector<ViewFeatureRows<T>>& views) {
  switch (cfg.aggregation) {
    case Aggregation::Concat:
      if (int(views.size()) != cfg.fixed_views)
        throw std::invalid_argument("concat aggregation requires exactly " +
                                    std::to_string(cfg.fixed_views) + " views, got " +
                                    std::to_string(views.size()));
      return aggregate_concat(detail::sorted_by_view(views));
    case Aggregation::Mean:
      return aggregate_mean(views);
    case Aggregation::CameraSummarized:
      return aggregate_camera_summarized(bind, cfg, views);
  }
  throw std::logic_error("unreachable");
}

}  // namespace pixelvol::encoders
