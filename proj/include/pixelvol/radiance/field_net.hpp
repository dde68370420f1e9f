#pragma once

#include <optional>

#include "pixelvol/model_config.hpp"
#include "pixelvol/ndiff/nn.hpp"

namespace pixelvol::radiance {

using ndiff::ParamBinder;
using ndiff::ParamStore;
using ndiff::Var;

// Radiance field MLP: input [phi(X), f_X], hidden stack of cfg.mlp_hidden
// layers of cfg.mlp_width with the conditioning vector re-concatenated at the
// skip layer, then a sigmoid RGB head and a softplus density head. With
// view-dir color enabled the RGB head additionally sees the encoded ray
// direction through a small branch.
template <typename T>
void init_field_net(ParamStore<T>& store, const ModelConfig& cfg, util::Rng& rng) {
  int64_t in = cfg.pe_width() + cfg.conditioning_width();
  int64_t w = cfg.mlp_width;
  for (int layer = 1; layer <= cfg.mlp_hidden; ++layer) {
    int64_t lin = layer == 1 ? in : (layer == cfg.skip_layer ? w + cfg.conditioning_width() : w);
    ndiff::add_linear(store, "nrad.l" + std::to_string(layer - 1), lin, w, rng);
  }
  if (cfg.view_dir_color) {
    ndiff::add_linear(store, "nrad.vdir0", w + cfg.pe_width(), 64, rng);
    ndiff::add_linear(store, "nrad.rgb", 64, 3, rng);
  } else {
    ndiff::add_linear(store, "nrad.rgb", w, 3, rng);
  }
  ndiff::add_linear(store, "nrad.sigma", w, 1, rng);
}

template <typename T>
struct FieldOutput {
  Var<T> rgb;    // [N x 3] in (0, 1)
  Var<T> sigma;  // [N x 1], non-negative
};

// pe: [N x 6l] constant rows; fx: [N x F] conditioning; dir_pe: encoded ray
// directions, required iff view-dir color is on.
template <typename T>
FieldOutput<T> field_net_forward(ParamBinder<T>& bind, const ModelConfig& cfg, Var<T> pe,
                                 Var<T> fx, std::optional<Var<T>> dir_pe = std::nullopt) {
  ndiff::Tape<T>& tape = bind.tape();
  if (tape.value(pe).extent(1) != cfg.pe_width() ||
      tape.value(fx).extent(1) != cfg.conditioning_width() ||
      tape.value(pe).extent(0) != tape.value(fx).extent(0))
    throw std::invalid_argument("field_net: conditioning dimensions do not match the config");

  Var<T> h = ndiff::concat<T>({pe, fx}, 1);
  for (int layer = 1; layer <= cfg.mlp_hidden; ++layer) {
    if (layer == cfg.skip_layer) h = ndiff::concat<T>({h, fx}, 1);
    h = ndiff::relu(ndiff::linear(bind, "nrad.l" + std::to_string(layer - 1), h));
  }
  FieldOutput<T> out;
  if (cfg.view_dir_color) {
    if (!dir_pe) throw std::invalid_argument("field_net: view-dir color needs encoded directions");
    Var<T> hv = ndiff::relu(ndiff::linear(bind, "nrad.vdir0", ndiff::concat<T>({h, *dir_pe}, 1)));
    out.rgb = ndiff::sigmoid(ndiff::linear(bind, "nrad.rgb", hv));
  } else {
    out.rgb = ndiff::sigmoid(ndiff::linear(bind, "nrad.rgb", h));
  }
  out.sigma = ndiff::softplus(ndiff::linear(bind, "nrad.sigma", h));
  return out;
}

}  // namespace pixelvol::radiance
