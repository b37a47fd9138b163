// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>
#include <set>

#include "epn/data_pipeline.hpp"
#include "epn/errors.hpp"
#include "epn/image_io.hpp"
#include "epn/snow_model.hpp"
#include "support.hpp"

using namespace epn;
using namespace epn::testing;

namespace {

std::filesystem::path make_pairs(const std::string& name, int n, int h, int w) {
  const auto dir = scratch_dir(name);
  std::vector<ImageTensor> cleans;
  for (int i = 0; i < n; ++i) cleans.push_back(procedural_scene(100 + i, h, w));
  make_pair_dataset(SynthConfig{}, cleans, dir);
  return dir;
}

bool same_sample(const PairSample& a, const PairSample& b) {
  return a.snowy == b.snowy && a.clean == b.clean && a.source_id == b.source_id;
}

}  // namespace

TEST_SUITE("data_pipeline") {

TEST_CASE("pair discovery, ordering and orphan reporting") {
  const auto dir = make_pairs("pairs_index", 3, 16, 16);
  auto index = load_pairs(dir);
  REQUIRE(index.size() == 3);
  CHECK(index.entry(0).id == "00000");
  CHECK(index.entry(2).id == "00002");
  CHECK(index.orphans().empty());
  CHECK_NOTHROW(index.require_complete());

  std::filesystem::copy_file(dir / "00001_snow.png", dir / "extra_snow.png");
  index = load_pairs(dir);
  CHECK(index.size() == 3);
  REQUIRE(index.orphans().size() == 1);
  CHECK(index.validation_report().find("extra_snow.png") != std::string::npos);
  CHECK_THROWS_AS(index.require_complete(), IoError);
  CHECK_THROWS_AS(load_pairs(dir / "missing"), IoError);
}

TEST_CASE("loading decodes both images of a pair") {
  const auto dir = make_pairs("pairs_load", 1, 12, 20);
  const auto index = load_pairs(dir);
  const PairSample s = index.load(0);
  CHECK(s.source_id == "00000");
  CHECK(s.snowy.height() == 12);
  CHECK(s.clean.width() == 20);
  CHECK(s.clean == read_png<float>(dir / "00000_gt.png"));
}

TEST_CASE("corrupt images raise I/O errors naming the file") {
  const auto dir = scratch_dir("pairs_corrupt");
  std::ofstream(dir / "a_snow.png") << "garbage";
  std::ofstream(dir / "a_gt.png") << "garbage";
  const auto index = load_pairs(dir);
  try {
    index.load(0);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(e.path().find("a_") != std::string::npos);
  }
}

TEST_CASE("patches crop both images at the same window") {
  std::mt19937_64 rng(1);
  PairSample s{random_tensor<float>(3, 20, 30, rng), Tensor<float>(), "x"};
  s.clean = s.snowy;
  SampleRng r(4);
  for (int i = 0; i < 10; ++i) {
    const PairSample p = random_patch(s, 8, r);
    CHECK(p.snowy.height() == 8);
    CHECK(p.snowy.width() == 8);
    CHECK(p.snowy == p.clean);
  }
  // Images smaller than the patch are mirror-padded up to it.
  PairSample tiny{Tensor<float>(3, 5, 5, 0.5f), Tensor<float>(3, 5, 5, 0.5f), "t"};
  const PairSample p = random_patch(tiny, 8, r);
  CHECK(p.snowy.height() == 8);
  CHECK(p.snowy == Tensor<float>(3, 8, 8, 0.5f));
}

TEST_CASE("augmentation variants are the eight dihedral transforms applied to both images") {
  std::mt19937_64 rng(2);
  PairSample s{random_tensor<float>(3, 6, 6, rng), random_tensor<float>(3, 6, 6, rng), "x"};
  std::vector<Tensor<float>> seen;
  for (int v = 0; v < 8; ++v) {
    const PairSample a = apply_variant(s, v);
    CHECK(a.snowy == dihedral(s.snowy, v % 4, v >= 4));
    CHECK(a.clean == dihedral(s.clean, v % 4, v >= 4));
    for (const auto& t : seen) CHECK_FALSE(t == a.snowy);
    seen.push_back(a.snowy);
  }
  SampleRng r(9);
  std::set<AlignedVector<float>> drawn;
  for (int i = 0; i < 200; ++i) drawn.insert(augment(s, r).snowy.values());
  CHECK(drawn.size() == 8);
}

TEST_CASE("batches are a pure function of seed and index, for any producer count") {
  const auto dir = make_pairs("pairs_batches", 5, 16, 16);
  const auto index = load_pairs(dir);
  LoaderOptions opt;
  opt.batch_size = 3;
  opt.patch_size = 8;
  opt.seed = 42;
  std::vector<std::vector<PairSample>> single, multi;
  {
    BatchLoader loader(index, opt, 2, 8);
    for (int b = 2; b < 8; ++b) single.push_back(loader.next());
  }
  opt.producers = 3;
  {
    BatchLoader loader(index, opt, 2, 8);
    for (int b = 2; b < 8; ++b) multi.push_back(loader.next());
  }
  for (std::size_t b = 0; b < single.size(); ++b) {
    const auto direct = BatchLoader::make_batch(index, opt, static_cast<std::int64_t>(b) + 2);
    for (std::size_t i = 0; i < single[b].size(); ++i) {
      CHECK(same_sample(single[b][i], multi[b][i]));
      CHECK(same_sample(single[b][i], direct[i]));
    }
  }
  LoaderOptions other = opt;
  other.seed = 43;
  CHECK_FALSE(same_sample(BatchLoader::make_batch(index, other, 2)[0], single[0][0]));
}

TEST_CASE("sequential sampling walks the index in order") {
  const auto dir = make_pairs("pairs_seq", 4, 16, 16);
  const auto index = load_pairs(dir);
  LoaderOptions opt;
  opt.batch_size = 3;
  opt.patch_size = 0;
  opt.augment = false;
  opt.random_sampling = false;
  const auto b1 = BatchLoader::make_batch(index, opt, 1);
  CHECK(b1[0].source_id == "00003");
  CHECK(b1[1].source_id == "00000");
  CHECK(b1[2].source_id == "00001");
  CHECK(b1[0].snowy == index.load(3).snowy);
}

}  // TEST_SUITE
