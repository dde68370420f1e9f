#pragma once

#include "pixelvol/model_config.hpp"
#include "pixelvol/ndiff/nn.hpp"

namespace pixelvol::encoders {

using ndiff::ParamBinder;
using ndiff::ParamStore;
using ndiff::Var;

// Shallow convolutional encoder-decoder producing a pixel-aligned feature map
// at full input resolution: three stride-2 3x3 convolutions (3->16->32->64)
// and three [2x upsample + 3x3 conv] stages back up (64->32->16->channels).
// The final conv is linear so features are unconstrained. Total encoder
// stride is 8, so inputs must be multiples of 8. An optional interior skip
// (encoder level 2 into the matching decoder stage) is off by default.

inline constexpr int kFeatEncChannels[3] = {16, 32, 64};
inline constexpr int kFeatDecChannels[2] = {32, 16};

template <typename T>
void init_feature_net(ParamStore<T>& store, const ModelConfig& cfg, util::Rng& rng) {
  auto add_conv = [&](const std::string& name, int64_t co, int64_t ci, int64_t k) {
    store.add("nfeat." + name + ".w", ndiff::kaiming_uniform<T>({co, ci, k, k}, ci * k * k, rng));
    store.add("nfeat." + name + ".b", ndiff::Array<T>::zeros({co}));
  };
  add_conv("enc0", kFeatEncChannels[0], 3, 3);
  add_conv("enc1", kFeatEncChannels[1], kFeatEncChannels[0], 3);
  add_conv("enc2", kFeatEncChannels[2], kFeatEncChannels[1], 3);
  int64_t dec0_in = kFeatEncChannels[2];
  int64_t dec1_in = cfg.feature_net_skip ? kFeatDecChannels[0] + kFeatEncChannels[1]
                                         : kFeatDecChannels[0];
  add_conv("dec0", kFeatDecChannels[0], dec0_in, 3);
  add_conv("dec1", kFeatDecChannels[1], dec1_in, 3);
  add_conv("dec2", cfg.feature_map_channels(), kFeatDecChannels[1], 3);
}

template <typename T>
Var<T> conv_layer(ParamBinder<T>& bind, const std::string& name, Var<T> x, int64_t stride) {
  return ndiff::conv2d(x, bind("nfeat." + name + ".w"), bind("nfeat." + name + ".b"), stride, 1);
}

// image: [3 x h x w] with values in [0, 1].
template <typename T>
Var<T> feature_net_forward(ParamBinder<T>& bind, const ModelConfig& cfg, Var<T> image) {
  const ndiff::Array<T>& img = bind.tape().value(image);
  if (img.rank() != 3 || img.extent(0) != 3)
    throw std::invalid_argument("feature_net: expected a [3 x h x w] image");
  if (img.extent(1) % 8 != 0 || img.extent(2) % 8 != 0)
    throw std::invalid_argument("feature_net: image extents must be multiples of 8");
  for (T v : img.values())
    if (v < T(0) || v > T(1))
      throw std::invalid_argument("feature_net: image values must lie in [0, 1]");

  Var<T> e0 = ndiff::relu(conv_layer(bind, "enc0", image, 2));
  Var<T> e1 = ndiff::relu(conv_layer(bind, "enc1", e0, 2));
  Var<T> e2 = ndiff::relu(conv_layer(bind, "enc2", e1, 2));

  Var<T> d0 = ndiff::relu(conv_layer(bind, "dec0", ndiff::upsample2x(e2), 1));
  Var<T> d0_cat = cfg.feature_net_skip ? ndiff::concat<T>({d0, e1}, 0) : d0;  // both at h/4
  Var<T> d1 = ndiff::relu(conv_layer(bind, "dec1", ndiff::upsample2x(d0_cat), 1));
  return conv_layer(bind, "dec2", ndiff::upsample2x(d1), 1);
}

}  // namespace pixelvol::encoders
