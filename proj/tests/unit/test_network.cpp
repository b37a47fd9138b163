// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>
#include <set>

#include "epn/errors.hpp"
#include "epn/network.hpp"
#include "support.hpp"

using namespace epn;
using namespace epn::testing;

namespace {

ModelConfig micro_config() {
  ModelConfig cfg;
  cfg.channels = {4, 8, 16, 32, 64, 128};
  cfg.hor_depth = 1;
  return cfg;
}

template <typename T>
void randomize_head(Model<T>& m, std::uint64_t seed) {
  Rng rng(seed);
  m.head().weight.fill_uniform(T(0.1), rng);
  m.head().bias.fill_uniform(T(0.1), rng);
}

}  // namespace

TEST_SUITE("network") {

TEST_CASE("config validation") {
  ModelConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.channels = {16, 32, 64, 128, 256};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.channels = {16, 32, 64, 128, 256, 500};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = ModelConfig{};
  cfg.hor_depth = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.hor_depth = 3;  // any non-negative depth is accepted
  CHECK_NOTHROW(cfg.validate());
  cfg = ModelConfig{};
  cfg.shuffle_groups = 7;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("untrained model is the identity and preserves shape") {
  Model<float> m(micro_config(), 3);
  std::mt19937_64 rng(1);
  const auto x = random_tensor<float>(3, 64, 96, rng, 0.0, 1.0);
  CHECK(m.forward(x) == x);
  Model<float>::Cache cache;
  CHECK(m.forward(x, cache) == x);
  CHECK_THROWS_AS(m.forward(Tensor<float>(3, 48, 64)), DimensionError);
  CHECK_THROWS_AS(m.forward(Tensor<float>(1, 64, 64)), DimensionError);
}

TEST_CASE("cached and uncached forward agree; forward is deterministic") {
  Model<float> m(micro_config(), 4);
  randomize_head(m, 5);
  std::mt19937_64 rng(2);
  const auto x = random_tensor<float>(3, 32, 64, rng, 0.0, 1.0);
  Model<float>::Cache cache;
  const auto a = m.forward(x);
  CHECK(a == m.forward(x, cache));
  CHECK(a == m.forward(x));
  CHECK_FALSE(a == x);
}

TEST_CASE("every ablation variant builds and runs") {
  for (int v = 0; v < 7; ++v) {
    ModelConfig cfg = micro_config();
    auto& a = cfg.ablations;
    bool* flags[] = {&a.cimb_to_se_resblock, &a.wo_eam, &a.wo_ln, &a.gelu_to_relu,
                     &a.wo_shuffle, &a.eam_from_fin, &a.eam_elu_to_relu};
    *flags[v] = true;
    Model<float> m(cfg, 1);
    randomize_head(m, 2);
    const auto y = m.forward(Tensor<float>(3, 32, 32, 0.5f));
    CHECK(y.channels() == 3);
    CHECK(y.height() == 32);
  }
}

TEST_CASE("parameter names are unique and grouped by component") {
  ModelConfig cfg = micro_config();
  cfg.hor_depth = 2;
  Model<float> m(cfg, 1);
  std::set<std::string> names;
  std::int64_t total = 0;
  m.visit_params([&](const std::string& n, const Param<float>& p) {
    CHECK(names.insert(n).second);
    total += static_cast<std::int64_t>(p.numel());
  });
  CHECK(total == m.num_params());
  CHECK(names.count("stem.weight") == 1);
  CHECK(names.count("head.bias") == 1);
  CHECK(names.count("encoder.0.cimb.expand1.weight") == 1);
  CHECK(names.count("encoder.5.eam.fuse.weight") == 1);
  CHECK(names.count("rebuild.1.cimb.project2.bias") == 1);
  CHECK(names.count("decoder.0.up.conv.weight") == 1);
  CHECK(names.count("encoder.5.down.conv.weight") == 0);
}

TEST_CASE("full network gradient on a micro configuration") {
  ModelConfig cfg = micro_config();
  Model<double> m(cfg, 7);
  randomize_head(m, 8);
  std::mt19937_64 rng(3);
  auto x = random_tensor(3, 32, 32, rng, 0.0, 1.0);
  Model<double>::Cache cache;
  GradCheck gc;
  gc.forward = [&] { return m.forward(x); };
  gc.backward = [&](const Tensor<double>& dy) {
    m.forward(x, cache);
    m.backward(cache, dy);
    return Tensor<double>();
  };
  m.visit_params([&gc](const std::string& n, Param<double>& p) { gc.params.push_back({n, &p}); });
  gc.max_per_tensor = 4;
  // A small step keeps probes clear of ReLU kinks. Deep squeeze-excitation
  // weights then have gradients near the rounding noise of the objective, so
  // the bound applies to the whole probed gradient vector.
  gc.eps = 1e-6;
  const auto reports = gc.run();
  REQUIRE(reports.back().name == "all");
  CHECK(reports.back().rel_error < 1e-5);
}

TEST_CASE("bundle and assign round-trip; shape mismatches are rejected") {
  Model<float> a(micro_config(), 1);
  Model<float> b(micro_config(), 2);
  randomize_head(a, 3);
  b.assign(a.bundle());
  const Tensor<float> x(3, 32, 32, 0.25f);
  CHECK(a.forward(x) == b.forward(x));

  ParamBundle bad = a.bundle();
  bad.entries()[0].shape[0] += 1;
  CHECK_THROWS_AS(b.assign(bad), CheckpointError);
  ParamBundle missing = a.bundle();
  missing.entries().pop_back();
  CHECK_THROWS_AS(b.assign(missing), CheckpointError);
}

TEST_CASE("checkpoint save/load is bit-exact and validates its input") {
  const auto dir = scratch_dir("network_ckpt");
  ModelConfig cfg = micro_config();
  cfg.ablations.wo_shuffle = true;
  Model<float> m(cfg, 11);
  randomize_head(m, 12);
  save_checkpoint(m, dir / "m.ckpt");
  const Model<float> back = load_checkpoint<float>(dir / "m.ckpt");
  CHECK(back.config() == cfg);
  std::mt19937_64 rng(4);
  const auto x = random_tensor<float>(3, 64, 32, rng, 0.0, 1.0);
  CHECK(back.forward(x) == m.forward(x));

  std::ifstream in(dir / "m.ckpt", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  {
    std::ofstream t(dir / "trunc.ckpt", std::ios::binary);
    t << bytes.substr(0, bytes.size() - 10);
  }
  CHECK_THROWS_AS(load_checkpoint<float>(dir / "trunc.ckpt"), CheckpointError);
  {
    std::ofstream t(dir / "junk.ckpt", std::ios::binary);
    t << "not a checkpoint";
  }
  CHECK_THROWS_AS(load_checkpoint<float>(dir / "junk.ckpt"), CheckpointError);
  {
    std::string v = bytes;
    const auto pos = v.find("\"format_version\": 1");
    REQUIRE(pos != std::string::npos);
    v.replace(pos, 19, "\"format_version\": 9");
    std::ofstream t(dir / "ver.ckpt", std::ios::binary);
    t << v;
  }
  CHECK_THROWS_AS(load_checkpoint<float>(dir / "ver.ckpt"), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint<float>(dir / "absent.ckpt"), IoError);
}

TEST_CASE("reflect padding and cropping") {
  Tensor<double> x(1, 1, 3);
  x[0] = 1;
  x[1] = 2;
  x[2] = 3;
  const auto p = reflect_pad(x, 2, 5);
  CHECK(p.height() == 3);
  CHECK(p.width() == 8);
  const double row[] = {1, 2, 3, 2, 1, 2, 3, 2};
  for (int i = 0; i < 8; ++i) {
    CHECK(p.at(0, 0, i) == row[i]);
    CHECK(p.at(0, 2, i) == row[i]);
  }
  CHECK(crop(p, 0, 0, 1, 3) == x);
  CHECK_THROWS_AS(crop(p, 1, 0, 3, 3), DimensionError);
}

TEST_CASE("padded forward accepts arbitrary sizes") {
  Model<float> m(micro_config(), 1);
  randomize_head(m, 1);
  const Tensor<float> x(3, 37, 50, 0.3f);
  const auto y = forward_padded(m, x);
  CHECK(y.height() == 37);
  CHECK(y.width() == 50);
}

TEST_CASE("tile starts cover the extent with the requested overlap") {
  CHECK(tile_starts(100, 128, 16) == std::vector<int>{0});
  for (int extent : {129, 300, 512, 1000, 2160}) {
    const auto s = tile_starts(extent, 128, 32);
    CHECK(s.front() == 0);
    CHECK(s.back() + 128 == extent);
    for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i] - s[i - 1] <= 96);
  }
  CHECK_THROWS_AS(tile_starts(100, 32, 32), ConfigError);
}

TEST_CASE("tiled inference") {
  Model<float> m(micro_config(), 1);
  randomize_head(m, 1);
  std::mt19937_64 rng(9);
  const auto x = random_tensor<float>(3, 96, 160, rng, 0.0, 1.0);
  // A single tile covering the image reproduces the padded forward exactly.
  CHECK(forward_tiled(m, x, {256, 32, 1}) == forward_padded(m, x));
  const auto t1 = forward_tiled(m, x, {64, 16, 1});
  const auto t3 = forward_tiled(m, x, {64, 16, 3});
  CHECK(t1 == t3);
  CHECK(t1.height() == 96);
  CHECK(t1.width() == 160);
  // An untrained model is the identity, so blending must reproduce the input.
  Model<float> id(micro_config(), 2);
  const auto ti = forward_tiled(id, x, {64, 16, 2});
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(ti[i] == doctest::Approx(x[i]).epsilon(1e-6));
}

}  // TEST_SUITE
