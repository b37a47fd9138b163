// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>
#include <regex>
#include <sstream>

#include "epn/bench_analysis.hpp"
#include "epn/cli.hpp"
#include "epn/config.hpp"
#include "epn/errors.hpp"
#include "epn/image_io.hpp"
#include "epn/network.hpp"
#include "epn/training.hpp"
#include "support.hpp"

using namespace epn;
using namespace epn::testing;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

const std::vector<std::string> kMicro{"channels=4,8,16,32,64,128", "hor_depth=1"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("key-value text parsing") {
  const auto kv = parse_key_values("# comment\n\n a = 1 \nb=two words\n");
  CHECK(kv.size() == 2);
  CHECK(kv.at("a") == "1");
  CHECK(kv.at("b") == "two words");
  CHECK_THROWS_AS(parse_key_values("novalue\n"), ConfigError);
  CHECK(parse_override("x=3") == std::pair<std::string, std::string>{"x", "3"});
  CHECK_THROWS_AS(parse_override("x"), ConfigError);
  for (double v : {0.1, 4e-4, 1.0 / 3.0, 6e-4}) CHECK(std::stod(format_double(v)) == v);
}

TEST_CASE("binding keys to configuration structs") {
  ModelConfig m;
  TrainConfig t;
  KeySet keys = bind_keys(m);
  const KeySet tk = bind_keys(t);
  keys.insert(keys.end(), tk.begin(), tk.end());
  apply_key_values(keys, {{"hor_depth", "6"}, {"wo_ln", "true"}, {"max_lr", "1e-3"}, {"channels", "8,16,32,64,128,256"}});
  CHECK(m.hor_depth == 6);
  CHECK(m.ablations.wo_ln);
  CHECK(t.max_lr == 1e-3);
  CHECK(m.channels == std::vector<int>{8, 16, 32, 64, 128, 256});
  try {
    apply_key_values(keys, {{"hor_dept", "6"}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("hor_depth") != std::string::npos);
  }
  CHECK_THROWS_AS(apply_key_values(keys, {{"hor_depth", "six"}}), ConfigError);
  CHECK_THROWS_AS(apply_key_values(keys, {{"wo_ln", "maybe"}}), ConfigError);

  // Written configs read back to the same values.
  const auto dir = scratch_dir("cfg_roundtrip");
  write_key_values(collect_key_values(keys), dir / "all.cfg");
  ModelConfig m2;
  TrainConfig t2;
  KeySet keys2 = bind_keys(m2);
  const KeySet tk2 = bind_keys(t2);
  keys2.insert(keys2.end(), tk2.begin(), tk2.end());
  apply_key_values(keys2, read_key_values(dir / "all.cfg"));
  CHECK(m2 == m);
  CHECK(t2.max_lr == t.max_lr);
  CHECK(t2.base_lr == t.base_lr);
}

TEST_CASE("help lists every key with its default") {
  const Run r = cli({"train", "--help"});
  CHECK(r.code == kExitOk);
  TrainConfig t;
  for (const auto& k : bind_keys(t)) CHECK_MESSAGE(r.out.find(k.name + " = " + k.get()) != std::string::npos, k.name);
  ModelConfig m;
  for (const auto& k : bind_keys(m)) CHECK_MESSAGE(r.out.find(k.name + " = " + k.get()) != std::string::npos, k.name);
}

TEST_CASE("exit codes separate validation from runtime failures") {
  CHECK(cli({}).code == kExitValidation);
  CHECK(cli({"frobnicate"}).code == kExitValidation);
  CHECK(cli({"analyze", "bogus=1"}).code == kExitValidation);
  CHECK(cli({"analyze", "hor_depth=-2"}).code == kExitValidation);
  CHECK(cli({"analyze", "--res", "12by4"}).code == kExitValidation);
  CHECK(cli({"eval", "--ckpt", "/nonexistent/x.ckpt", "--data", "/nonexistent"}).code == kExitRuntime);
  const Run r = cli({"analyze", "-c", "/nonexistent/file.cfg"});
  CHECK(r.code == kExitRuntime);
  CHECK(r.err.find("error:") == 0);
}

TEST_CASE("analyze reports the component counts") {
  const Run r = cli({"analyze", "--res", "256x256", "--res", "1280x736"});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("64578039") != std::string::npos);
  CHECK(r.out.find("gmacs@256x256 8.07") != std::string::npos);
  CHECK(r.out.find("gmacs@1280x736") != std::string::npos);
  const Run tiny = cli({"analyze", "-c", "tiny"});
  CHECK(tiny.out.find("4298973") != std::string::npos);
  const Run sweep = cli({"analyze", "hor_depth=0"});
  CHECK(sweep.out.find(std::to_string(64578039 - 20 * 2638080)) != std::string::npos);
}

TEST_CASE("synth, train, eval and desnow end to end") {
  const auto dir = scratch_dir("cli_e2e");
  const std::string data = (dir / "data").string();
  Run r = cli({"synth", "--out", data, "--count", "2", "--height", "32", "--width", "32"});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out == "pairs=2 dir=" + data + "\n");

  const std::string run_dir = (dir / "run").string();
  r = cli(with({"train", "--data", data, "--out", run_dir, "batch_size=1", "total_steps=2", "patch_size=0"}, kMicro));
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  const std::string ckpt = run_dir + "/final.ckpt";
  CHECK(std::filesystem::exists(ckpt));
  CHECK(std::filesystem::exists(run_dir + "/final.state"));
  CHECK(std::filesystem::exists(run_dir + "/train_log.csv"));

  r = cli({"eval", "--ckpt", ckpt, "--data", data});
  REQUIRE(r.code == kExitOk);
  const std::regex line(R"((\d{5}|mean) psnr=(\d+\.\d{4}|inf) ssim=\d\.\d{4})");
  std::istringstream lines(r.out);
  std::string l;
  int n = 0;
  while (std::getline(lines, l)) {
    CHECK_MESSAGE(std::regex_match(l, line), l);
    ++n;
  }
  CHECK(n == 3);

  const std::string restored = (dir / "restored.png").string();
  r = cli({"desnow", "--ckpt", ckpt, "--in", data + "/00000_snow.png", "--out", restored, "--tile", "64", "--overlap", "16"});
  REQUIRE(r.code == kExitOk);
  const auto img = read_png<float>(restored);
  CHECK(img.height() == 32);
  CHECK(img.width() == 32);

  // Resuming with a different architecture is rejected as a runtime failure.
  r = cli({"train", "--data", data, "--out", run_dir, "--resume", ckpt, "total_steps=3", "channels=4,8,16,32,64,128"});
  CHECK(r.code == kExitRuntime);
}

TEST_CASE("bench writes the comparison table") {
  const auto dir = scratch_dir("cli_bench");
  const std::string csv = (dir / "b.csv").string();
  const Run r = cli(with({"bench", "--res", "64x32", "--res", "4096x2160", "--memory-budget-mb", "64", "--csv", csv}, kMicro));
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  const auto rows = parse_comparison_table(csv);
  REQUIRE(rows.size() == 2);
  CHECK_FALSE(rows[0].oom);
  CHECK(rows[1].oom);
  CHECK(r.out.find("OOM") != std::string::npos);
}

}  // TEST_SUITE
