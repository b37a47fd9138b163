// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "epn/errors.hpp"
#include "epn/image_io.hpp"
#include "epn/snow_model.hpp"
#include "support.hpp"

using namespace epn;
using namespace epn::testing;

namespace {

SnowParams random_params(int h, int w, std::mt19937_64& rng) {
  SnowParams p;
  p.z_mask = random_tensor(1, h, w, rng, 0.0, 1.0);
  p.r_mask = random_tensor(1, h, w, rng, 0.0, 1.0);
  for (auto& v : p.r_mask.values()) v = v < 0.5 ? 0.0 : 1.0;
  p.c_map = random_tensor(3, h, w, rng, 0.0, 1.0);
  p.a_map = random_tensor(3, h, w, rng, 0.0, 1.0);
  p.t_map = random_tensor(1, h, w, rng, 0.05, 1.0);
  return p;
}

}  // namespace

TEST_SUITE("snow_model") {

TEST_CASE("synthesis matches the per-pixel imaging model") {
  std::mt19937_64 rng(17);
  const auto j = random_tensor(3, 5, 6, rng, 0.0, 1.0);
  const auto p = random_params(5, 6, rng);
  const auto out = synthesize_snow(j, p);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 5; ++y) {
      for (int x = 0; x < 6; ++x) {
        const double z = p.z_mask.at(0, y, x), r = p.r_mask.at(0, y, x), t = p.t_map.at(0, y, x);
        const double k = j.at(c, y, x) * (1 - z * r) + p.c_map.at(c, y, x) * z * r;
        const double want = k * t + p.a_map.at(c, y, x) * (1 - t);
        CHECK(out.at(c, y, x) == doctest::Approx(want).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("hand-computed pixel") {
  SnowParams p;
  p.z_mask = Tensor<double>(1, 1, 1, 0.5);
  p.r_mask = Tensor<double>(1, 1, 1, 1.0);
  p.c_map = Tensor<double>(3, 1, 1, 0.9);
  p.a_map = Tensor<double>(3, 1, 1, 0.8);
  p.t_map = Tensor<double>(1, 1, 1, 0.5);
  // K = 0.2 * 0.5 + 0.9 * 0.5 = 0.55; I = 0.55 * 0.5 + 0.8 * 0.5 = 0.675
  const auto out = synthesize_snow(Tensor<double>(3, 1, 1, 0.2), p);
  CHECK(out[0] == doctest::Approx(0.675).epsilon(1e-15));
}

TEST_CASE("limits: no snow and full transmission is the identity; zero transmission is airlight") {
  std::mt19937_64 rng(3);
  const auto j = random_tensor(3, 8, 8, rng, 0.0, 1.0);
  auto p = random_params(8, 8, rng);
  p.z_mask.fill(0.0);
  p.t_map.fill(1.0);
  CHECK(synthesize_snow(j, p) == j);
  p = random_params(8, 8, rng);
  p.t_map.fill(0.0);
  CHECK_THROWS_AS(synthesize_snow(j, p), DomainError);
  CHECK(synthesize_snow(j, p, {true}) == p.a_map);
}

TEST_CASE("parameter validation") {
  std::mt19937_64 rng(5);
  const auto j = random_tensor(3, 4, 4, rng, 0.0, 1.0);
  auto p = random_params(4, 4, rng);
  p.r_mask[3] = 0.5;
  CHECK_THROWS_AS(synthesize_snow(j, p), DomainError);
  p = random_params(4, 4, rng);
  p.t_map[0] = 1.5;
  CHECK_THROWS_AS(synthesize_snow(j, p), DomainError);
  p = random_params(4, 4, rng);
  p.c_map = Tensor<double>(1, 4, 4, 0.5);
  CHECK_THROWS_AS(synthesize_snow(j, p), DimensionError);
  p = random_params(5, 4, rng);
  CHECK_THROWS_AS(synthesize_snow(j, p), DimensionError);
}

TEST_CASE("pixelwise model commutes with flips and rotations") {
  std::mt19937_64 rng(8);
  const auto j = random_tensor(3, 6, 9, rng, 0.0, 1.0);
  const auto p = random_params(6, 9, rng);
  const auto out = synthesize_snow(j, p);
  for (int turns = 0; turns < 4; ++turns) {
    for (bool flip : {false, true}) {
      CHECK(synthesize_snow(dihedral(j, turns, flip), transform_params(p, turns, flip)) ==
            dihedral(out, turns, flip));
    }
  }
}

TEST_CASE("generated parameters satisfy their invariants and are seeded") {
  SynthConfig cfg;
  const auto a = generate_snow_params(cfg, 48, 40);
  CHECK_NOTHROW(a.validate());
  CHECK(a.height() == 48);
  CHECK(a.width() == 40);
  CHECK(generate_snow_params(cfg, 48, 40) == a);
  cfg.rng_seed = 8;
  CHECK_FALSE(generate_snow_params(cfg, 48, 40) == a);
  double snow = 0.0;
  for (double v : a.r_mask.values()) snow += v;
  CHECK(snow > 0.0);
  for (std::size_t i = 0; i < a.z_mask.size(); ++i) CHECK((a.r_mask[i] == 1.0) == (a.z_mask[i] > 0.0));
  cfg.streak_count_range = {5, 2};
  CHECK_THROWS_AS(generate_snow_params(cfg, 8, 8), ConfigError);
}

TEST_CASE("procedural scenes are deterministic images") {
  const auto s = procedural_scene(3, 32, 48);
  CHECK(s.channels() == 3);
  CHECK(s == procedural_scene(3, 32, 48));
  CHECK_FALSE(s == procedural_scene(4, 32, 48));
  for (double v : s.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("pair dataset files and stored maps") {
  const auto dir = scratch_dir("snow_pairs");
  SynthConfig cfg;
  std::vector<ImageTensor> cleans{procedural_scene(1, 24, 32), procedural_scene(2, 24, 32)};
  CHECK(make_pair_dataset(cfg, cleans, dir) == 2);
  CHECK(pair_id(7) == "00007");
  for (int i = 0; i < 2; ++i) {
    const std::string id = pair_id(i);
    REQUIRE(std::filesystem::exists(dir / (id + "_snow.png")));
    REQUIRE(std::filesystem::exists(dir / (id + "_gt.png")));
    const auto params = load_snow_params(dir / (id + "_params.txt"));
    CHECK_NOTHROW(params.validate());
    // The snowy PNG is the quantized model applied to the quantized clean PNG.
    const auto gt = read_png<double>(dir / (id + "_gt.png"));
    const auto snow = read_png<double>(dir / (id + "_snow.png"));
    const auto want = quantize8(clamp01(synthesize_snow(gt, params)));
    for (std::size_t k = 0; k < snow.size(); ++k) CHECK(snow[k] == doctest::Approx(want[k]).epsilon(1e-12));
  }
}

}  // TEST_SUITE
