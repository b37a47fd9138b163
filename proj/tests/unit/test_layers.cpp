// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "epn/errors.hpp"
#include "epn/layers.hpp"
#include "support.hpp"

using namespace epn;
using namespace epn::testing;

TEST_SUITE("nn_blocks") {

TEST_CASE("dense and depthwise convolutions match the direct loop") {
  std::mt19937_64 rng(3);
  struct Case {
    ConvSpec spec;
    int h, w;
  };
  const std::vector<Case> cases{{{3, 5, 3, 1, 1}, 7, 9},  {{4, 6, 1, 1, 1}, 5, 4},
                                {{4, 8, 3, 2, 1}, 8, 6},  {{6, 6, 3, 1, 6}, 5, 7},
                                {{5, 5, 3, 2, 5}, 6, 6},  {{2, 3, 3, 2, 1}, 7, 5}};
  for (const auto& c : cases) {
    Conv2d<double> conv(c.spec);
    Rng prng(11);
    conv.reset_parameters(prng);
    const auto x = random_tensor(c.spec.in, c.h, c.w, rng);
    const auto got = conv.forward(x);
    const auto want = naive_conv(x, conv.weight, conv.bias, c.spec.out, c.spec.kernel, c.spec.stride, c.spec.groups);
    REQUIRE(got.same_shape(want));
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("convolution gradients match central differences") {
  for (ConvSpec spec : {ConvSpec{3, 4, 3, 1, 1}, ConvSpec{4, 4, 3, 1, 4}, ConvSpec{3, 6, 3, 2, 1},
                        ConvSpec{5, 3, 1, 1, 1}}) {
    Conv2d<double> conv(spec);
    Rng prng(5);
    conv.reset_parameters(prng);
    std::mt19937_64 rng(9);
    auto x = random_tensor(spec.in, 6, 6, rng);
    GradCheck gc;
    gc.forward = [&] { return conv.forward(x); };
    gc.backward = [&](const Tensor<double>& dy) { return conv.backward(x, dy); };
    gc.params = collect_params(conv, "conv");
    gc.input = &x;
    CHECK(max_rel_error(gc.run()) < 1e-7);
  }
}

TEST_CASE("conv rejects wrong channel count and unsupported grouping") {
  Conv2d<float> conv({3, 4, 3, 1, 1});
  CHECK_THROWS_AS(conv.forward(Tensor<float>(2, 4, 4)), DimensionError);
  CHECK_THROWS_AS(Conv2d<float>({4, 8, 3, 1, 2}), ConfigError);
}

TEST_CASE("channel shuffle is a group transpose and its backward is the inverse") {
  const int c = 12, g = 3;
  Tensor<double> x(c, 2, 2);
  for (int ch = 0; ch < c; ++ch) {
    for (auto& v : x.plane(ch)) v = ch;
  }
  const auto y = channel_shuffle(x, g);
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < c / g; ++j) CHECK(y.at(j * g + i, 1, 0) == i * (c / g) + j);
  }
  CHECK(channel_shuffle_backward(y, g) == x);
  std::mt19937_64 rng(1);
  const auto r = random_tensor(16, 3, 3, rng);
  CHECK(channel_shuffle_backward(channel_shuffle(r, 8), 8) == r);
  CHECK(channel_shuffle(r, 1) == r);
  CHECK_THROWS_AS(channel_shuffle(r, 3), ConfigError);
}

TEST_CASE("layer norm normalizes each pixel across channels") {
  std::mt19937_64 rng(4);
  const auto x = random_tensor(6, 3, 4, rng, -3.0, 5.0);
  LayerNorm2d<double> ln(6);
  const auto y = ln.forward(x);
  for (int yy = 0; yy < 3; ++yy) {
    for (int xx = 0; xx < 4; ++xx) {
      double mean = 0.0, var = 0.0;
      for (int c = 0; c < 6; ++c) mean += x.at(c, yy, xx) / 6.0;
      for (int c = 0; c < 6; ++c) var += (x.at(c, yy, xx) - mean) * (x.at(c, yy, xx) - mean) / 6.0;
      for (int c = 0; c < 6; ++c) {
        CHECK(y.at(c, yy, xx) == doctest::Approx((x.at(c, yy, xx) - mean) / std::sqrt(var + 1e-6)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("layer norm, activations and SE gradients") {
  std::mt19937_64 rng(8);
  SUBCASE("layer norm") {
    LayerNorm2d<double> ln(5);
    Rng prng(2);
    ln.weight.fill_uniform(1.0, prng);
    ln.bias.fill_uniform(1.0, prng);
    auto x = random_tensor(5, 3, 3, rng);
    GradCheck gc;
    gc.forward = [&] { return ln.forward(x); };
    gc.backward = [&](const Tensor<double>& dy) { return ln.backward(x, dy); };
    gc.params = collect_params(ln, "ln");
    gc.input = &x;
    CHECK(max_rel_error(gc.run()) < 1e-7);
  }
  SUBCASE("activations") {
    for (Activation a : {Activation::kGelu, Activation::kElu, Activation::kSigmoid, Activation::kRelu, Activation::kIdentity}) {
      auto x = random_tensor(2, 3, 3, rng, -2.0, 2.0);
      GradCheck gc;
      gc.forward = [&] { return activate(x, a); };
      gc.backward = [&](const Tensor<double>& dy) { return activate_backward(x, dy, a); };
      gc.input = &x;
      CHECK_MESSAGE(max_rel_error(gc.run()) < 1e-7, activation_name(a));
    }
  }
  SUBCASE("squeeze-excite") {
    SqueezeExcite<double> se(8, 4);
    Rng prng(3);
    se.reset_parameters(prng);
    auto x = random_tensor(8, 4, 4, rng);
    GradCheck gc;
    gc.forward = [&] { return se.forward(x); };
    gc.backward = [&](const Tensor<double>& dy) {
      typename SqueezeExcite<double>::Cache cache;
      se.forward(x, cache);
      return se.backward(x, cache, dy);
    };
    gc.params = collect_params(se, "se");
    gc.input = &x;
    CHECK(max_rel_error(gc.run()) < 1e-7);
  }
}

TEST_CASE("activation values") {
  Tensor<double> x(1, 1, 3);
  x[0] = -1.0;
  x[1] = 0.0;
  x[2] = 2.0;
  const auto gelu = activate(x, Activation::kGelu);
  CHECK(gelu[0] == doctest::Approx(-1.0 * 0.5 * (1.0 + std::erf(-1.0 / std::sqrt(2.0)))).epsilon(1e-14));
  CHECK(gelu[1] == 0.0);
  const auto elu = activate(x, Activation::kElu);
  CHECK(elu[0] == doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-14));
  CHECK(elu[2] == 2.0);
  const auto relu = activate(x, Activation::kRelu);
  CHECK(relu[0] == 0.0);
  CHECK(relu[2] == 2.0);
}

TEST_CASE("pooling and nearest upsampling") {
  std::mt19937_64 rng(6);
  auto x = random_tensor(2, 4, 6, rng);
  const auto p = avg_pool2(x);
  CHECK(p.height() == 2);
  CHECK(p.width() == 3);
  CHECK(p.at(1, 1, 2) == doctest::Approx((x.at(1, 2, 4) + x.at(1, 2, 5) + x.at(1, 3, 4) + x.at(1, 3, 5)) / 4));
  const auto u = upsample_nearest2(p);
  CHECK(u.at(1, 3, 5) == p.at(1, 1, 2));
  CHECK(avg_pool2(u) == p);
  auto small = random_tensor(3, 2, 3, rng);
  GradCheck gc;
  gc.forward = [&] { return upsample_nearest2(small); };
  gc.backward = [&](const Tensor<double>& dy) { return upsample_nearest2_backward(dy); };
  gc.input = &small;
  CHECK(max_rel_error(gc.run()) < 1e-8);
}

TEST_CASE("tensor dihedral transforms") {
  std::mt19937_64 rng(2);
  const auto x = random_tensor(2, 3, 5, rng);
  CHECK(rotate90(rotate90(rotate90(rotate90(x, 1), 1), 1), 1) == x);
  CHECK(rotate90(x, 1).height() == 5);
  CHECK(rotate90(x, 1).at(1, 0, 0) == x.at(1, 0, 4));
  CHECK(rotate90(x, 1).at(1, 4, 0) == x.at(1, 0, 0));
  CHECK(flip_horizontal(flip_horizontal(x)) == x);
  CHECK(dihedral(x, 2, false) == rotate90(rotate90(x, 1), 1));
}

}  // TEST_SUITE
