// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "epn/errors.hpp"
#include "epn/losses_metrics.hpp"
#include "support.hpp"

using namespace epn;
using namespace epn::testing;

TEST_SUITE("losses_metrics") {

TEST_CASE("charbonnier of identical tensors is epsilon") {
  std::mt19937_64 rng(1);
  const auto x = random_tensor(3, 8, 8, rng);
  CHECK(charbonnier(x, x) == doctest::Approx(1e-3).epsilon(1e-12));
  LossConfig per_image{1e-3, Reduction::kPerImageNorm};
  CHECK(charbonnier(x, x, per_image) == doctest::Approx(1e-3).epsilon(1e-12));
}

TEST_CASE("charbonnier matches the scalar loop and its gradient") {
  std::mt19937_64 rng(2);
  auto a = random_tensor(3, 5, 7, rng);
  const auto b = random_tensor(3, 5, 7, rng);
  double want = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) want += std::sqrt((a[i] - b[i]) * (a[i] - b[i]) + 1e-6);
  want /= static_cast<double>(a.size());
  Tensor<double> grad;
  CHECK(charbonnier(a, b, {}, &grad) == doctest::Approx(want).epsilon(1e-12));
  for (Reduction r : {Reduction::kPerPixelMean, Reduction::kPerImageNorm}) {
    const LossConfig cfg{1e-3, r};
    GradCheck gc;
    gc.forward = [&] {
      Tensor<double> s(1, 1, 1);
      s[0] = charbonnier(a, b, cfg);
      return s;
    };
    gc.backward = [&](const Tensor<double>& dy) {
      Tensor<double> g;
      charbonnier(a, b, cfg, &g);
      for (auto& v : g.values()) v *= dy[0];
      return g;
    };
    gc.input = &a;
    gc.eps = 1e-7;  // the loss bends on the scale of its epsilon
    CHECK(max_rel_error(gc.run()) < 1e-6);
  }
  CHECK_THROWS_AS(charbonnier(a, Tensor<double>(3, 5, 6)), DimensionError);
  CHECK_THROWS_AS(charbonnier(a, b, {0.0}), DomainError);
}

TEST_CASE("psnr values") {
  Tensor<double> a(3, 4, 4, 0.5), b(3, 4, 4, 0.6);
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(std::isinf(psnr(a, a)));
  std::mt19937_64 rng(3);
  const auto x = random_tensor(3, 9, 9, rng, 0.0, 1.0);
  const auto y = random_tensor(3, 9, 9, rng, 0.0, 1.0);
  double mse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) mse += (x[i] - y[i]) * (x[i] - y[i]);
  mse /= static_cast<double>(x.size());
  CHECK(psnr(x, y) == doctest::Approx(-10.0 * std::log10(mse)).epsilon(1e-12));
  CHECK(psnr(x, y, 255.0) == doctest::Approx(10.0 * std::log10(255.0 * 255.0 / mse)).epsilon(1e-12));
}

TEST_CASE("ssim matches the direct windowed loop") {
  std::mt19937_64 rng(4);
  const auto a = random_tensor(3, 16, 19, rng, 0.0, 1.0);
  auto b = a;
  for (auto& v : b.values()) v = std::clamp(v + 0.1 * (static_cast<double>(rng() % 1000) / 1000.0 - 0.5), 0.0, 1.0);
  CHECK(ssim(a, a) == 1.0);
  CHECK(ssim(a, b) == doctest::Approx(reference_ssim(a, b)).epsilon(1e-10));
  CHECK(ssim(a, b) < 1.0);
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-14));
  CHECK_THROWS_AS(ssim(Tensor<double>(3, 8, 8), Tensor<double>(3, 8, 8)), DimensionError);
}

}  // TEST_SUITE
