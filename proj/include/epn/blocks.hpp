// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "epn/layers.hpp"

namespace epn {

struct BlockConfig {
  int channels = 16;
  int expand_factor = 2;
  int shuffle_groups = 8;
  int se_reduction = 4;
  bool use_layer_norm = true;
  bool use_shuffle = true;
  Activation cimb_activation = Activation::kGelu;
  Activation eam_activation = Activation::kElu;
  // Derive the external attention map from the incoming features instead of the image.
  bool eam_from_features = false;

  int expanded() const { return channels * expand_factor; }
  // Throws ConfigError when the divisibility constraints fail.
  void validate() const;
};

// Channel Information Mining Block: two pre-normalized residual stages over
// channel-expanded features.
//   A: y   = x + P1(SE(Shuffle(act(DW3x3(E1(LN1(x)))))))
//   B: out = y + P2(Shuffle(act(E2(LN2(y)))))
template <typename T>
class Cimb {
 public:
  struct Cache {
    Tensor<T> x, norm1, expand1, depthwise1, gated_in, project1_in;
    typename SqueezeExcite<T>::Cache se;
    Tensor<T> y, norm2, expand2, project2_in;
  };

  Cimb() = default;
  explicit Cimb(const BlockConfig& cfg);

  Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> forward(const Tensor<T>& x, Cache& cache) const;
  Tensor<T> backward(const Cache& cache, const Tensor<T>& dout);

  void reset_parameters(Rng& rng);
  std::int64_t macs(int h, int w) const;
  const BlockConfig& config() const { return cfg_; }

  template <typename F>
  void visit(const std::string& p, F&& f) {
    visit_impl(*this, p, f);
  }
  template <typename F>
  void visit(const std::string& p, F&& f) const {
    visit_impl(*this, p, f);
  }

  LayerNorm2d<T> norm1;
  Conv2d<T> expand1;
  Conv2d<T> depthwise1;
  SqueezeExcite<T> se;
  Conv2d<T> project1;
  LayerNorm2d<T> norm2;
  Conv2d<T> expand2;
  Conv2d<T> project2;

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& self, const std::string& p, F& f) {
    if (self.cfg_.use_layer_norm) self.norm1.visit(p + ".norm1", f);
    self.expand1.visit(p + ".expand1", f);
    self.depthwise1.visit(p + ".dwconv1", f);
    self.se.visit(p + ".se", f);
    self.project1.visit(p + ".project1", f);
    if (self.cfg_.use_layer_norm) self.norm2.visit(p + ".norm2", f);
    self.expand2.visit(p + ".expand2", f);
    self.project2.visit(p + ".project2", f);
  }

  BlockConfig cfg_;
};

// External Attention Module:
//   M = Conv1x1(act(Conv1x1(I_down)))      (C channels, used without squashing)
//   out = Conv3x3(concat(I_down, M * F_in)) (C + 3 -> C)
template <typename T>
class Eam {
 public:
  struct Cache {
    Tensor<T> f_in, i_down, hidden_pre, attention, fusion;
  };

  Eam() = default;
  Eam(const BlockConfig& cfg, int image_channels = 3);

  Tensor<T> forward(const Tensor<T>& f_in, const Tensor<T>& i_down) const;
  Tensor<T> forward(const Tensor<T>& f_in, const Tensor<T>& i_down, Cache& cache) const;
  // Returns the gradient with respect to f_in; the image branch is treated as constant.
  Tensor<T> backward(const Cache& cache, const Tensor<T>& dout);

  void reset_parameters(Rng& rng);
  std::int64_t macs(int h, int w) const;

  template <typename F>
  void visit(const std::string& p, F&& f) {
    attn1.visit(p + ".attn1", f);
    attn2.visit(p + ".attn2", f);
    fuse.visit(p + ".fuse", f);
  }
  template <typename F>
  void visit(const std::string& p, F&& f) const {
    attn1.visit(p + ".attn1", f);
    attn2.visit(p + ".attn2", f);
    fuse.visit(p + ".fuse", f);
  }

  Conv2d<T> attn1;
  Conv2d<T> attn2;
  Conv2d<T> fuse;

 private:
  void check(const Tensor<T>& f_in, const Tensor<T>& i_down) const;

  BlockConfig cfg_;
  int image_channels_ = 3;
};

// Residual block with squeeze-excitation: out = x + SE(Conv3x3(ReLU(Conv3x3(x)))).
template <typename T>
class SeResBlock {
 public:
  struct Cache {
    Tensor<T> x, conv1_out, relu_out, conv2_out;
    typename SqueezeExcite<T>::Cache se;
  };

  SeResBlock() = default;
  SeResBlock(int channels, int reduction);

  Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> forward(const Tensor<T>& x, Cache& cache) const;
  Tensor<T> backward(const Cache& cache, const Tensor<T>& dout);

  void reset_parameters(Rng& rng);
  std::int64_t macs(int h, int w) const;

  template <typename F>
  void visit(const std::string& p, F&& f) {
    conv1.visit(p + ".conv1", f);
    conv2.visit(p + ".conv2", f);
    se.visit(p + ".se", f);
  }
  template <typename F>
  void visit(const std::string& p, F&& f) const {
    conv1.visit(p + ".conv1", f);
    conv2.visit(p + ".conv2", f);
    se.visit(p + ".se", f);
  }

  Conv2d<T> conv1;
  Conv2d<T> conv2;
  SqueezeExcite<T> se;
};

// Strided 3x3 convolution, c -> 2c at half resolution.
template <typename T>
class Downsample {
 public:
  Downsample() = default;
  explicit Downsample(int channels);

  Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dout);
  void reset_parameters(Rng& rng) { conv.reset_parameters(rng); }
  std::int64_t macs(int h, int w) const { return conv.macs(h, w); }

  template <typename F>
  void visit(const std::string& p, F&& f) {
    conv.visit(p + ".conv", f);
  }
  template <typename F>
  void visit(const std::string& p, F&& f) const {
    conv.visit(p + ".conv", f);
  }

  Conv2d<T> conv;
};

// Nearest-neighbour 2x followed by a 3x3 convolution, c -> c/2.
template <typename T>
class Upsample {
 public:
  Upsample() = default;
  explicit Upsample(int channels);

  Tensor<T> forward(const Tensor<T>& x) const;
  // x is the low-resolution input given to forward.
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dout);
  void reset_parameters(Rng& rng) { conv.reset_parameters(rng); }
  std::int64_t macs(int h, int w) const { return conv.macs(2 * h, 2 * w); }

  template <typename F>
  void visit(const std::string& p, F&& f) {
    conv.visit(p + ".conv", f);
  }
  template <typename F>
  void visit(const std::string& p, F&& f) const {
    conv.visit(p + ".conv", f);
  }

  Conv2d<T> conv;
};

}  // namespace epn
