#pragma once

#include <stdexcept>
#include <string>

#include "json.hpp"

namespace pixelvol {

enum class ModelKind { PixelAligned, GlobalCode };

// How per-view features are fused into the field conditioning vector.
enum class Aggregation { Concat, Mean, CameraSummarized };

inline std::string to_string(Aggregation a) {
  switch (a) {
    case Aggregation::Concat: return "concat";
    case Aggregation::Mean: return "mean";
    case Aggregation::CameraSummarized: return "camsum";
  }
  return "?";
}

inline Aggregation parse_aggregation(const std::string& s) {
  if (s == "concat") return Aggregation::Concat;
  if (s == "mean") return Aggregation::Mean;
  if (s == "camsum") return Aggregation::CameraSummarized;
  throw std::invalid_argument("unknown aggregation '" + s + "' (expected concat|mean|camsum)");
}

inline std::string to_string(ModelKind k) {
  return k == ModelKind::PixelAligned ? "pixel-aligned" : "global-code";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "pixel-aligned") return ModelKind::PixelAligned;
  if (s == "global-code") return ModelKind::GlobalCode;
  throw std::invalid_argument("unknown model kind '" + s + "'");
}

// Architecture knobs. Serialized into checkpoints so a saved model is
// self-describing.
struct ModelConfig {
  ModelKind kind = ModelKind::PixelAligned;
  Aggregation aggregation = Aggregation::Concat;

  int pe_frequencies = 6;   // l; encoding length is 6*l
  int feature_width = 16;   // per-view feature width d, visibility flag included
  int summary_width = 16;   // d' out of the camera summarizer
  int fixed_views = 2;      // required view count in concat mode
  int code_width = 64;      // global-code baseline

  int mlp_width = 128;
  int mlp_hidden = 6;
  int skip_layer = 3;       // conditioning re-entered at this hidden layer (1-based)
  bool view_dir_color = false;

  int ncf_width = 64;       // camera summarizer hidden width
  bool feature_net_skip = false;

  // Filled from the dataset at model-init time.
  int image_size = 64;
  int n_cameras = 12;
  int n_identities = 20;    // global-code table size

  int pe_width() const { return 6 * pe_frequencies; }
  int feature_map_channels() const { return feature_width - 1; }  // flag appended at sampling

  int conditioning_width() const {
    if (kind == ModelKind::GlobalCode) return code_width;
    switch (aggregation) {
      case Aggregation::Concat: return fixed_views * feature_width;
      case Aggregation::Mean: return feature_width;
      case Aggregation::CameraSummarized: return summary_width;
    }
    return 0;
  }

  void validate() const {
    if (pe_frequencies < 1) throw std::invalid_argument("model: need at least one frequency");
    if (feature_width < 2) throw std::invalid_argument("model: feature width too small");
    if (mlp_hidden < 2 || skip_layer < 2 || skip_layer > mlp_hidden)
      throw std::invalid_argument("model: bad MLP layout");
    if (fixed_views < 1) throw std::invalid_argument("model: need at least one conditioning view");
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"kind", to_string(c.kind)},
       {"aggregation", to_string(c.aggregation)},
       {"pe_frequencies", c.pe_frequencies},
       {"feature_width", c.feature_width},
       {"summary_width", c.summary_width},
       {"fixed_views", c.fixed_views},
       {"code_width", c.code_width},
       {"mlp_width", c.mlp_width},
       {"mlp_hidden", c.mlp_hidden},
       {"skip_layer", c.skip_layer},
       {"view_dir_color", c.view_dir_color},
       {"ncf_width", c.ncf_width},
       {"feature_net_skip", c.feature_net_skip},
       {"image_size", c.image_size},
       {"n_cameras", c.n_cameras},
       {"n_identities", c.n_identities}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.kind = parse_model_kind(j.at("kind").get<std::string>());
  c.aggregation = parse_aggregation(j.at("aggregation").get<std::string>());
  j.at("pe_frequencies").get_to(c.pe_frequencies);
  j.at("feature_width").get_to(c.feature_width);
  j.at("summary_width").get_to(c.summary_width);
  j.at("fixed_views").get_to(c.fixed_views);
  j.at("code_width").get_to(c.code_width);
  j.at("mlp_width").get_to(c.mlp_width);
  j.at("mlp_hidden").get_to(c.mlp_hidden);
  j.at("skip_layer").get_to(c.skip_layer);
  j.at("view_dir_color").get_to(c.view_dir_color);
  j.at("ncf_width").get_to(c.ncf_width);
  j.at("feature_net_skip").get_to(c.feature_net_skip);
  j.at("image_size").get_to(c.image_size);
  j.at("n_cameras").get_to(c.n_cameras);
  j.at("n_identities").get_to(c.n_identities);
}

}  // namespace pixelvol
