// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

// Differentiable primitives. Every layer exposes a const forward, and a
// backward that takes the forward input (callers keep it), accumulates
// parameter gradients, and returns the gradient with respect to the input.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "epn/tensor.hpp"

namespace epn {

using Rng = std::mt19937_64;

template <typename T>
struct Param {
  std::vector<int> shape;
  AlignedVector<T> value;
  AlignedVector<T> grad;

  Param() = default;
  explicit Param(std::vector<int> s);

  std::size_t numel() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T{0}); }
  void fill_uniform(T bound, Rng& rng);
  void fill(T v) { std::fill(value.begin(), value.end(), v); }
};

struct ConvSpec {
  int in = 0;
  int out = 0;
  int kernel = 1;
  int stride = 1;
  int groups = 1;  // 1 or `in` (depthwise, requires in == out)
};

// Zero-padded ("same") convolution with bias.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  explicit Conv2d(ConvSpec spec);

  const ConvSpec& spec() const { return spec_; }
  int out_height(int h) const { return (h + 2 * pad() - spec_.kernel) / spec_.stride + 1; }
  int out_width(int w) const { return (w + 2 * pad() - spec_.kernel) / spec_.stride + 1; }

  Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy);

  void reset_parameters(Rng& rng);
  std::int64_t macs(int in_h, int in_w) const;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }

  Param<T> weight;
  Param<T> bias;

 private:
  int pad() const { return spec_.kernel / 2; }
  void check_input(const Tensor<T>& x) const;
  Tensor<T> forward_dense(const Tensor<T>& x) const;
  Tensor<T> forward_depthwise(const Tensor<T>& x) const;
  Tensor<T> backward_dense(const Tensor<T>& x, const Tensor<T>& dy);
  Tensor<T> backward_depthwise(const Tensor<T>& x, const Tensor<T>& dy);

  ConvSpec spec_;
};

// Per-pixel normalization across channels with a per-channel affine map.
template <typename T>
class LayerNorm2d {
 public:
  static constexpr double kEps = 1e-6;

  LayerNorm2d() = default;
  explicit LayerNorm2d(int channels);

  Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy);
  void reset_parameters();

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }

  Param<T> weight;
  Param<T> bias;
};

enum class Activation { kGelu, kRelu, kElu, kSigmoid, kIdentity };

const char* activation_name(Activation a);

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation a);
// dy * act'(x), given the activation input x.
template <typename T>
Tensor<T> activate_backward(const Tensor<T>& x, const Tensor<T>& dy, Activation a);

// Group transpose of channels: view as (groups, C / groups), transpose, flatten.
template <typename T>
Tensor<T> channel_shuffle(const Tensor<T>& x, int groups);
template <typename T>
Tensor<T> channel_shuffle_backward(const Tensor<T>& dy, int groups);

template <typename T>
Tensor<T> avg_pool2(const Tensor<T>& x);
template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& x);
template <typename T>
Tensor<T> upsample_nearest2_backward(const Tensor<T>& dy);

// Squeeze-excitation gate: global average pool, 1x1 reduce, ReLU, 1x1 expand,
// sigmoid, channel-wise scaling of the input.
template <typename T>
class SqueezeExcite {
 public:
  struct Cache {
    Tensor<T> pooled;
    Tensor<T> hidden_pre;
    Tensor<T> hidden;
    Tensor<T> gate;
  };

  SqueezeExcite() = default;
  SqueezeExcite(int channels, int reduction);

  Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> forward(const Tensor<T>& x, Cache& cache) const;
  Tensor<T> backward(const Tensor<T>& x, const Cache& cache, const Tensor<T>& dy);
  void reset_parameters(Rng& rng);
  std::int64_t macs() const;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    reduce.visit(prefix + ".reduce", f);
    expand.visit(prefix + ".expand", f);
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    reduce.visit(prefix + ".reduce", f);
    expand.visit(prefix + ".expand", f);
  }

  Conv2d<T> reduce;
  Conv2d<T> expand;
};

}  // namespace epn
