// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

#include "epn/blocks.hpp"

namespace epn {

void BlockConfig::validate() const {
  if (channels <= 0) throw ConfigError("block: channels must be positive");
  if (expand_factor < 1) throw ConfigError("block: expand factor must be >= 1");
  if (shuffle_groups <= 0 || expanded() % shuffle_groups != 0) {
    throw ConfigError("block: shuffle groups " + std::to_string(shuffle_groups) +
                      " must divide expanded channels " + std::to_string(expanded()));
  }
  if (se_reduction <= 0 || expanded() % se_reduction != 0) {
    throw ConfigError("block: SE reduction " + std::to_string(se_reduction) +
                      " must divide expanded channels " + std::to_string(expanded()));
  }
}

// ------------------------------------------------------------------ CIMB

template <typename T>
Cimb<T>::Cimb(const BlockConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  const int c = cfg.channels;
  const int e = cfg.expanded();
  norm1 = LayerNorm2d<T>(c);
  expand1 = Conv2d<T>({c, e, 1, 1, 1});
  depthwise1 = Conv2d<T>({e, e, 3, 1, e});
  se = SqueezeExcite<T>(e, cfg.se_reduction);
  project1 = Conv2d<T>({e, c, 1, 1, 1});
  norm2 = LayerNorm2d<T>(c);
  expand2 = Conv2d<T>({c, e, 1, 1, 1});
  project2 = Conv2d<T>({e, c, 1, 1, 1});
}

template <typename T>
void Cimb<T>::reset_parameters(Rng& rng) {
  norm1.reset_parameters();
  expand1.reset_parameters(rng);
  depthwise1.reset_parameters(rng);
  se.reset_parameters(rng);
  project1.reset_parameters(rng);
  norm2.reset_parameters();
  expand2.reset_parameters(rng);
  project2.reset_parameters(rng);
}

template <typename T>
std::int64_t Cimb<T>::macs(int h, int w) const {
  return expand1.macs(h, w) + depthwise1.macs(h, w) + se.macs() + project1.macs(h, w) +
         expand2.macs(h, w) + project2.macs(h, w);
}

template <typename T>
Tensor<T> Cimb<T>::forward(const Tensor<T>& x) const {
  Cache cache;
  return forward(x, cache);
}

template <typename T>
Tensor<T> Cimb<T>::forward(const Tensor<T>& x, Cache& k) const {
  if (x.channels() != cfg_.channels) {
    throw DimensionError("CIMB: expected " + std::to_string(cfg_.channels) + " channels, got " +
                         std::to_string(x.channels()));
  }
  const int g = cfg_.shuffle_groups;
  const Activation act = cfg_.cimb_activation;

  k.x = x;
  k.norm1 = cfg_.use_layer_norm ? norm1.forward(x) : x;
  k.expand1 = expand1.forward(k.norm1);
  k.depthwise1 = depthwise1.forward(k.expand1);
  Tensor<T> a = activate(k.depthwise1, act);
  k.gated_in = cfg_.use_shuffle ? channel_shuffle(a, g) : std::move(a);
  k.project1_in = se.forward(k.gated_in, k.se);
  k.y = add(project1.forward(k.project1_in), x);

  k.norm2 = cfg_.use_layer_norm ? norm2.forward(k.y) : k.y;
  k.expand2 = expand2.forward(k.norm2);
  Tensor<T> b = activate(k.expand2, act);
  k.project2_in = cfg_.use_shuffle ? channel_shuffle(b, g) : std::move(b);
  return add(project2.forward(k.project2_in), k.y);
}

template <typename T>
Tensor<T> Cimb<T>::backward(const Cache& k, const Tensor<T>& dout) {
  const int g = cfg_.shuffle_groups;
  const Activation act = cfg_.cimb_activation;

  // stage B
  Tensor<T> d = project2.backward(k.project2_in, dout);
  if (cfg_.use_shuffle) d = channel_shuffle_backward(d, g);
  d = activate_backward(k.expand2, d, act);
  d = expand2.backward(k.norm2, d);
  if (cfg_.use_layer_norm) d = norm2.backward(k.y, d);
  Tensor<T> dy = add(std::move(d), dout);

  // stage A
  d = project1.backward(k.project1_in, dy);
  d = se.backward(k.gated_in, k.se, d);
  if (cfg_.use_shuffle) d = channel_shuffle_backward(d, g);
  d = activate_backward(k.depthwise1, d, act);
  d = depthwise1.backward(k.expand1, d);
  d = expand1.backward(k.norm1, d);
  if (cfg_.use_layer_norm) d = norm1.backward(k.x, d);
  return add(std::move(d), dy);
}

// ------------------------------------------------------------------- EAM

template <typename T>
Eam<T>::Eam(const BlockConfig& cfg, int image_channels) : cfg_(cfg), image_channels_(image_channels) {
  const int c = cfg.channels;
  if (c <= 0 || image_channels <= 0) throw ConfigError("EAM: channels must be positive");
  attn1 = Conv2d<T>({cfg.eam_from_features ? c : image_channels, c, 1, 1, 1});
  attn2 = Conv2d<T>({c, c, 1, 1, 1});
  fuse = Conv2d<T>({c + image_channels, c, 3, 1, 1});
}

template <typename T>
void Eam<T>::reset_parameters(Rng& rng) {
  attn1.reset_parameters(rng);
  attn2.reset_parameters(rng);
  fuse.reset_parameters(rng);
}

template <typename T>
std::int64_t Eam<T>::macs(int h, int w) const {
  return attn1.macs(h, w) + attn2.macs(h, w) + fuse.macs(h, w);
}

template <typename T>
void Eam<T>::check(const Tensor<T>& f_in, const Tensor<T>& i_down) const {
  if (f_in.channels() != cfg_.channels || i_down.channels() != image_channels_) {
    throw DimensionError("EAM: channel mismatch (" + f_in.shape_string() + ", " +
                         i_down.shape_string() + ")");
  }
  if (!f_in.same_spatial(i_down)) {
    throw DimensionError("EAM: image " + i_down.shape_string() + " does not match features " +
                         f_in.shape_string());
  }
}

template <typename T>
Tensor<T> Eam<T>::forward(const Tensor<T>& f_in, const Tensor<T>& i_down) const {
  Cache cache;
  return forward(f_in, i_down, cache);
}

template <typename T>
Tensor<T> Eam<T>::forward(const Tensor<T>& f_in, const Tensor<T>& i_down, Cache& k) const {
  check(f_in, i_down);
  k.f_in = f_in;
  k.i_down = i_down;
  k.hidden_pre = attn1.forward(cfg_.eam_from_features ? f_in : i_down);
  k.attention = attn2.forward(activate(k.hidden_pre, cfg_.eam_activation));
  Tensor<T> scaled = k.attention;
  for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= f_in[i];
  k.fusion = concat_channels(i_down, scaled);
  return fuse.forward(k.fusion);
}

template <typename T>
Tensor<T> Eam<T>::backward(const Cache& k, const Tensor<T>& dout) {
  const Tensor<T> dfusion = fuse.backward(k.fusion, dout);
  const Tensor<T> dscaled = slice_channels(dfusion, image_channels_, cfg_.channels);
  Tensor<T> dattention(dscaled.channels(), dscaled.height(), dscaled.width());
  Tensor<T> df_in = dattention;
  for (std::size_t i = 0; i < dscaled.size(); ++i) {
    dattention[i] = dscaled[i] * k.f_in[i];
    df_in[i] = dscaled[i] * k.attention[i];
  }
  const Tensor<T> hidden = activate(k.hidden_pre, cfg_.eam_activation);
  Tensor<T> d = attn2.backward(hidden, dattention);
  d = activate_backward(k.hidden_pre, d, cfg_.eam_activation);
  if (cfg_.eam_from_features) {
    add_inplace(df_in, attn1.backward(k.f_in, d));
  } else {
    attn1.backward(k.i_down, d);
  }
  return df_in;
}

// ----------------------------------------------------------- SE-ResBlock

template <typename T>
SeResBlock<T>::SeResBlock(int channels, int reduction)
    : conv1({channels, channels, 3, 1, 1}),
      conv2({channels, channels, 3, 1, 1}),
      se(channels, reduction) {}

template <typename T>
void SeResBlock<T>::reset_parameters(Rng& rng) {
  conv1.reset_parameters(rng);
  conv2.reset_parameters(rng);
  se.reset_parameters(rng);
}

template <typename T>
std::int64_t SeResBlock<T>::macs(int h, int w) const {
  return conv1.macs(h, w) + conv2.macs(h, w) + se.macs();
}

template <typename T>
Tensor<T> SeResBlock<T>::forward(const Tensor<T>& x) const {
  Cache cache;
  return forward(x, cache);
}

template <typename T>
Tensor<T> SeResBlock<T>::forward(const Tensor<T>& x, Cache& k) const {
  k.x = x;
  k.conv1_out = conv1.forward(x);
  k.relu_out = activate(k.conv1_out, Activation::kRelu);
  k.conv2_out = conv2.forward(k.relu_out);
  return add(se.forward(k.conv2_out, k.se), x);
}

template <typename T>
Tensor<T> SeResBlock<T>::backward(const Cache& k, const Tensor<T>& dout) {
  Tensor<T> d = se.backward(k.conv2_out, k.se, dout);
  d = conv2.backward(k.relu_out, d);
  d = activate_backward(k.conv1_out, d, Activation::kRelu);
  d = conv1.backward(k.x, d);
  return add(std::move(d), dout);
}

// ------------------------------------------------------ down/up-sampling

template <typename T>
Downsample<T>::Downsample(int channels) : conv({channels, 2 * channels, 3, 2, 1}) {}

template <typename T>
Tensor<T> Downsample<T>::forward(const Tensor<T>& x) const {
  if (x.height() % 2 != 0 || x.width() % 2 != 0) {
    throw DimensionError("downsample: odd spatial size " + x.shape_string());
  }
  return conv.forward(x);
}

template <typename T>
Tensor<T> Downsample<T>::backward(const Tensor<T>& x, const Tensor<T>& dout) {
  return conv.backward(x, dout);
}

template <typename T>
Upsample<T>::Upsample(int channels) {
  if (channels < 2 || channels % 2 != 0) throw ConfigError("upsample: channels must be even");
  conv = Conv2d<T>({channels, channels / 2, 3, 1, 1});
}

template <typename T>
Tensor<T> Upsample<T>::forward(const Tensor<T>& x) const {
  return conv.forward(upsample_nearest2(x));
}

template <typename T>
Tensor<T> Upsample<T>::backward(const Tensor<T>& x, const Tensor<T>& dout) {
  return upsample_nearest2_backward(conv.backward(upsample_nearest2(x), dout));
}

template class Cimb<float>;
template class Cimb<double>;
template class Eam<float>;
template class Eam<double>;
template class SeResBlock<float>;
template class SeResBlock<double>;
template class Downsample<float>;
template class Downsample<double>;
template class Upsample<float>;
template class Upsample<double>;

}  // namespace epn
