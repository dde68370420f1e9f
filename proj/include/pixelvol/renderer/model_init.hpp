#pragma once

#include "pixelvol/encoders/aggregate.hpp"
#include "pixelvol/encoders/feature_net.hpp"
#include "pixelvol/model_config.hpp"
#include "pixelvol/ndiff/checkpoint.hpp"
#include "pixelvol/radiance/field_net.hpp"
#include "pixelvol/radiance/photometrics.hpp"

namespace pixelvol::renderer {

// Builds the full parameter set for a model configuration. Initialization is
// deterministic in the rng seed.
template <typename T>
ndiff::ParamStore<T> init_model(const ModelConfig& cfg, util::Rng& rng) {
  cfg.validate();
  ndiff::ParamStore<T> store;
  if (cfg.kind == ModelKind::PixelAligned) {
    encoders::init_feature_net(store, cfg, rng);
    if (cfg.aggregation == Aggregation::CameraSummarized)
      encoders::init_camera_summarizer(store, cfg, rng);
  } else {
    for (int i = 0; i < cfg.n_identities; ++i)
      store.add("gcode.id" + std::to_string(i),
                ndiff::Array<T>::normal({int64_t(cfg.code_width)}, rng, 0.0, 0.1));
  }
  radiance::init_field_net(store, cfg, rng);
  radiance::init_photometrics(store, cfg);
  return store;
}

inline constexpr const char* kConfigBlobName = "meta.config";

template <typename T>
ndiff::Checkpoint model_checkpoint(const ModelConfig& cfg, const ndiff::ParamStore<T>& store) {
  ndiff::Checkpoint ckpt;
  ckpt.tensors.push_back(ndiff::make_text_blob(kConfigBlobName, nlohmann::json(cfg).dump()));
  ndiff::append_params(ckpt, store);
  return ckpt;
}

inline ModelConfig config_from_checkpoint(const ndiff::Checkpoint& ckpt) {
  const ndiff::TensorBlob* blob = ckpt.find(kConfigBlobName);
  if (!blob) throw std::runtime_error("checkpoint has no model configuration");
  return nlohmann::json::parse(ndiff::blob_text(*blob)).get<ModelConfig>();
}

inline std::string checkpoint_dtype(const ndiff::Checkpoint& ckpt) {
  const ndiff::TensorBlob* b = ckpt.find("nrad.l0.w");
  if (!b) throw std::runtime_error("checkpoint has no field network weights");
  return b->dtype;
}

// Rebuilds the parameter store (structure from the embedded config, values
// from the tensors).
template <typename T>
ndiff::ParamStore<T> model_from_checkpoint(const ndiff::Checkpoint& ckpt, const ModelConfig& cfg) {
  util::Rng rng(0);  // values are overwritten
  ndiff::ParamStore<T> store = init_model<T>(cfg, rng);
  ndiff::load_params(ckpt, store);
  return store;
}

}  // namespace pixelvol::renderer
