#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "pixelvol/io/png.hpp"
#include "pixelvol/synthdata/rig.hpp"
#include "pixelvol/synthdata/scene.hpp"
#include "pixelvol/util/parallel.hpp"

namespace pixelvol::synthdata {

struct DatasetConfig {
  int train_identities = 20;
  int heldout_identities = 5;
  std::vector<double> expressions = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<int> heldout_expressions = {4};  // indices into `expressions`
  int cameras = 12;
  double rig_radius = 1.6;
  int image_size = 64;
  std::vector<int> heldout_views = {2, 7};
  uint64_t seed = 1;
  bool pose_jitter = true;
  double pose_rot_max_deg = 10.0;
  double pose_trans_max = 0.03;

  int total_identities() const { return train_identities + heldout_identities; }

  void validate() const {
    if (train_identities < 1 || heldout_identities < 0)
      throw std::invalid_argument("dataset: bad identity counts");
    if (expressions.empty()) throw std::invalid_argument("dataset: no expressions");
    for (int e : heldout_expressions)
      if (e < 0 || e >= int(expressions.size()))
        throw std::invalid_argument("dataset: held-out expression index out of range");
    for (int v : heldout_views)
      if (v < 0 || v >= cameras) throw std::invalid_argument("dataset: held-out view out of range");
    if (int(heldout_views.size()) >= cameras)
      throw std::invalid_argument("dataset: no training views left");
    if (image_size < 8 || image_size % 8 != 0)
      throw std::invalid_argument("dataset: image size must be a positive multiple of 8");
  }
};

inline void to_json(nlohmann::json& j, const DatasetConfig& c) {
  j = {{"train_identities", c.train_identities},
       {"heldout_identities", c.heldout_identities},
       {"expressions", c.expressions},
       {"heldout_expressions", c.heldout_expressions},
       {"cameras", c.cameras},
       {"rig_radius", c.rig_radius},
       {"image_size", c.image_size},
       {"heldout_views", c.heldout_views},
       {"seed", c.seed},
       {"pose_jitter", c.pose_jitter},
       {"pose_rot_max_deg", c.pose_rot_max_deg},
       {"pose_trans_max", c.pose_trans_max}};
}

inline void from_json(const nlohmann::json& j, DatasetConfig& c) {
  j.at("train_identities").get_to(c.train_identities);
  j.at("heldout_identities").get_to(c.heldout_identities);
  j.at("expressions").get_to(c.expressions);
  j.at("heldout_expressions").get_to(c.heldout_expressions);
  j.at("cameras").get_to(c.cameras);
  j.at("rig_radius").get_to(c.rig_radius);
  j.at("image_size").get_to(c.image_size);
  j.at("heldout_views").get_to(c.heldout_views);
  j.at("seed").get_to(c.seed);
  j.at("pose_jitter").get_to(c.pose_jitter);
  j.at("pose_rot_max_deg").get_to(c.pose_rot_max_deg);
  j.at("pose_trans_max").get_to(c.pose_trans_max);
}

inline uint64_t identity_seed(uint64_t dataset_seed, int identity) {
  return util::Rng::seeded(dataset_seed, 0x1d0000 + uint64_t(identity)).next_u64();
}

// Small random rigid pose for one frame.
inline RigidTransform sample_head_pose(const DatasetConfig& cfg, int identity, int expr) {
  if (!cfg.pose_jitter) return RigidTransform::identity();
  util::Rng rng = util::Rng::seeded(cfg.seed, 0x90d0 + uint64_t(identity) * 1000 + uint64_t(expr));
  geometry::Vec3 axis(rng.normal(), rng.normal(), rng.normal());
  if (axis.norm() < 1e-9) axis = geometry::Vec3::UnitY();
  axis.normalize();
  double angle = rng.uniform(0.0, cfg.pose_rot_max_deg * std::numbers::pi / 180.0);
  RigidTransform h;
  h.R = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
  for (int i = 0; i < 3; ++i) h.t[i] = rng.uniform(-cfg.pose_trans_max, cfg.pose_trans_max);
  return h;
}

inline std::string image_rel_path(int identity, int expr, int cam) {
  return "id" + std::to_string(identity) + "/e" + std::to_string(expr) + "/cam" +
         std::to_string(cam) + ".png";
}

// On-disk dataset handle. Images load lazily and stay cached; everything else
// comes from rig.json and manifest.json.
class Dataset {
 public:
  DatasetConfig cfg;
  std::filesystem::path root;
  std::vector<geometry::Camera> rig;
  std::vector<uint64_t> identity_seeds;
  std::vector<std::vector<RigidTransform>> head_poses;  // [identity][expr]

  std::vector<int> train_identity_ids, heldout_identity_ids;
  std::vector<int> train_expressions, heldout_expressions;
  std::vector<int> train_views, heldout_views;

  const geometry::Camera& camera(int cam_id) const {
    for (const auto& c : rig)
      if (c.id == cam_id) return c;
    throw std::invalid_argument("unknown camera id " + std::to_string(cam_id));
  }

  SceneSpec frame_scene(int identity, int expr) const {
    SceneSpec s = sample_identity(identity_seeds[size_t(identity)]);
    s.expression = cfg.expressions[size_t(expr)];
    s.head_pose = head_poses[size_t(identity)][size_t(expr)];
    return s;
  }

  const util::FloatImage& image(int identity, int expr, int cam) const {
    auto key = std::make_tuple(identity, expr, cam);
    std::lock_guard<std::mutex> lock(cache_->mu);
    auto it = cache_->images.find(key);
    if (it != cache_->images.end()) return it->second;
    util::FloatImage img = io::read_png((root / image_rel_path(identity, expr, cam)).string());
    if (img.width != cfg.image_size || img.height != cfg.image_size)
      throw std::runtime_error("dataset image has unexpected size");
    return cache_->images.emplace(key, std::move(img)).first->second;
  }

 private:
  struct Cache {
    std::mutex mu;
    std::map<std::tuple<int, int, int>, util::FloatImage> images;
  };
  std::shared_ptr<Cache> cache_ = std::make_shared<Cache>();
};

namespace detail {

inline nlohmann::json pose_json(const RigidTransform& h) {
  return {{"R", geometry::detail::mat_json(h.R)}, {"t", geometry::detail::vec_json(h.t)}};
}

inline RigidTransform pose_from_json(const nlohmann::json& j) {
  RigidTransform h;
  h.R = geometry::detail::mat_from_json(j.at("R"));
  h.t = geometry::detail::vec_from_json(j.at("t"));
  return h;
}

inline void check_disjoint(const std::vector<int>& a, const std::vector<int>& b,
                           const char* what) {
  for (int x : a)
    for (int y : b)
      if (x == y) throw std::runtime_error(std::string("dataset: ") + what + " splits overlap");
}

}  // namespace detail

// Renders the full (identity x expression x camera) grid and writes PNGs, the
// rig, and finally the manifest as the commit point. Re-running with the same
// config produces byte-identical files.
inline void build_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  util::ensure_dir(out_dir);

  std::vector<geometry::Camera> rig =
      camera_rig(cfg.cameras, cfg.rig_radius, cfg.image_size, cfg.image_size);

  int n_ids = cfg.total_identities();
  int n_expr = int(cfg.expressions.size());
  std::vector<uint64_t> seeds(static_cast<size_t>(n_ids));
  for (int i = 0; i < n_ids; ++i) seeds[size_t(i)] = identity_seed(cfg.seed, i);
  std::vector<std::vector<RigidTransform>> poses(static_cast<size_t>(n_ids));
  for (int i = 0; i < n_ids; ++i)
    for (int e = 0; e < n_expr; ++e) poses[size_t(i)].push_back(sample_head_pose(cfg, i, e));

  struct Job {
    int id, expr, cam;
  };
  std::vector<Job> jobs;
  for (int i = 0; i < n_ids; ++i)
    for (int e = 0; e < n_expr; ++e)
      for (int c = 0; c < cfg.cameras; ++c) jobs.push_back({i, e, c});

  util::parallel_tasks(int(jobs.size()), [&](int j) {
    const Job& job = jobs[size_t(j)];
    SceneSpec scene = sample_identity(seeds[size_t(job.id)]);
    scene.expression = cfg.expressions[size_t(job.expr)];
    scene.head_pose = poses[size_t(job.id)][size_t(job.expr)];
    util::FloatImage img = render_image_analytic(scene, rig[size_t(job.cam)]);
    io::write_png((out_dir / image_rel_path(job.id, job.expr, job.cam)).string(), img);
  });

  save_rig((out_dir / "rig.json").string(), geometry::Rig{rig, std::nullopt});

  nlohmann::json manifest;
  manifest["config"] = cfg;
  manifest["identity_seeds"] = seeds;
  nlohmann::json pj = nlohmann::json::array();
  for (const auto& per_id : poses) {
    nlohmann::json row = nlohmann::json::array();
    for (const auto& h : per_id) row.push_back(detail::pose_json(h));
    pj.push_back(row);
  }
  manifest["head_poses"] = pj;

  nlohmann::json splits;
  std::vector<int> train_ids(size_t(cfg.train_identities));
  std::iota(train_ids.begin(), train_ids.end(), 0);
  std::vector<int> held_ids(size_t(cfg.heldout_identities));
  std::iota(held_ids.begin(), held_ids.end(), cfg.train_identities);
  splits["train_identities"] = train_ids;
  splits["heldout_identities"] = held_ids;
  std::vector<int> train_expr, held_expr = cfg.heldout_expressions;
  for (int e = 0; e < n_expr; ++e)
    if (std::find(held_expr.begin(), held_expr.end(), e) == held_expr.end())
      train_expr.push_back(e);
  splits["train_expressions"] = train_expr;
  splits["heldout_expressions"] = held_expr;
  std::vector<int> train_views, held_views = cfg.heldout_views;
  for (int c = 0; c < cfg.cameras; ++c)
    if (std::find(held_views.begin(), held_views.end(), c) == held_views.end())
      train_views.push_back(c);
  splits["train_views"] = train_views;
  splits["heldout_views"] = held_views;
  manifest["splits"] = splits;

  util::atomic_write(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.root = dir;
  nlohmann::json manifest = nlohmann::json::parse(util::read_file(dir / "manifest.json"));
  ds.cfg = manifest.at("config").get<DatasetConfig>();
  ds.rig = geometry::load_rig((dir / "rig.json").string()).cameras;
  manifest.at("identity_seeds").get_to(ds.identity_seeds);
  for (const auto& row : manifest.at("head_poses")) {
    std::vector<RigidTransform> per_id;
    for (const auto& pj : row) per_id.push_back(detail::pose_from_json(pj));
    ds.head_poses.push_back(std::move(per_id));
  }
  const auto& splits = manifest.at("splits");
  splits.at("train_identities").get_to(ds.train_identity_ids);
  splits.at("heldout_identities").get_to(ds.heldout_identity_ids);
  splits.at("train_expressions").get_to(ds.train_expressions);
  splits.at("heldout_expressions").get_to(ds.heldout_expressions);
  splits.at("train_views").get_to(ds.train_views);
  splits.at("heldout_views").get_to(ds.heldout_views);
  detail::check_disjoint(ds.train_identity_ids, ds.heldout_identity_ids, "identity");
  detail::check_disjoint(ds.train_expressions, ds.heldout_expressions, "expression");
  detail::check_disjoint(ds.train_views, ds.heldout_views, "view");
  if (ds.rig.size() != size_t(ds.cfg.cameras)) throw std::runtime_error("dataset: rig size mismatch");
  if (ds.head_poses.size() != size_t(ds.cfg.total_identities()))
    throw std::runtime_error("dataset: head pose table size mismatch");
  return ds;
}

}  // namespace pixelvol::synthdata
