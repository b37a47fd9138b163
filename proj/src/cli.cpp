// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

#include "epn/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "epn/bench_analysis.hpp"
#include "epn/errors.hpp"
#include "epn/image_io.hpp"
#include "epn/network.hpp"
#include "epn/snow_model.hpp"
#include "epn/training.hpp"

namespace epn {

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  bool verbose = false;
};

void add_common(CLI::App& sub, Common& c, bool with_keys) {
  sub.add_option("-c,--config", c.config,
                 with_keys ? "key = value file, or a preset: default | tiny" : "unused");
  if (with_keys) sub.add_option("overrides", c.overrides, "key=value overrides (win over --config)");
  sub.add_flag("-v,--verbose", c.verbose, "progress on stderr");
}

std::string key_listing(const std::string& title, const KeySet& keys) {
  std::size_t w = 0;
  for (const auto& k : keys) w = std::max(w, k.name.size() + k.get().size() + 3);
  std::ostringstream s;
  s << "\n" << title << " (key = default):\n";
  for (const auto& k : keys) {
    const std::string lhs = k.name + " = " + k.get();
    s << "  " << lhs << std::string(w - lhs.size() + 2, ' ') << k.help << "\n";
  }
  return s.str();
}

std::string model_help() {
  ModelConfig m;
  return key_listing("Model keys", bind_keys(m));
}

std::string train_help() {
  TrainConfig t;
  return key_listing("Training keys", bind_keys(t));
}

std::string synth_help() {
  SynthConfig s;
  return key_listing("Synthesis keys", bind_keys(s));
}

// Resolves --config (preset or file) plus overrides into a single key-value map.
KeyValues gather(const Common& c, ModelConfig* model) {
  KeyValues kv;
  if (c.config == "tiny") {
    if (!model) throw ConfigError("preset 'tiny' only applies to model keys");
    *model = tiny_model_config();
  } else if (!c.config.empty() && c.config != "default") {
    kv = read_key_values(c.config);
  }
  for (const auto& o : c.overrides) {
    auto [k, v] = parse_override(o);
    kv[k] = v;
  }
  return kv;
}

// Every key must belong to one of the key sets.
void apply_all(KeyValues kv, const std::vector<KeySet>& sets) {
  KeySet all;
  for (const auto& s : sets) all.insert(all.end(), s.begin(), s.end());
  apply_key_values(all, kv);
}

std::pair<int, int> parse_resolution(const std::string& s) {
  int w = 0, h = 0;
  char x = 0;
  std::istringstream in(s);
  if (!(in >> w >> x >> h) || x != 'x' || !in.eof() || w <= 0 || h <= 0) {
    throw ConfigError("resolution '" + s + "' is not of the form <W>x<H>");
  }
  return {w, h};
}

std::string metric(double v) {
  if (std::isinf(v)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Single-image snow removal: data synthesis, training, evaluation, inference, analysis"};
  app.require_subcommand(1);

  // synth
  Common synth_c;
  std::string synth_out, synth_clean;
  int synth_count = 8, synth_h = 64, synth_w = 64;
  auto* synth = app.add_subcommand("synth", "Synthesize snowy/clean training pairs");
  add_common(*synth, synth_c, true);
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--clean", synth_clean, "directory of clean PNGs (default: procedural scenes)");
  synth->add_option("--count", synth_count, "procedural scenes to generate")->capture_default_str();
  synth->add_option("--height", synth_h, "procedural scene height")->capture_default_str();
  synth->add_option("--width", synth_w, "procedural scene width")->capture_default_str();
  synth->footer(synth_help());

  // train
  Common train_c;
  std::string train_data, train_out, train_resume;
  long long train_max_steps = 0;
  double train_stop_psnr = 0.0;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a pair directory");
  add_common(*train_cmd, train_c, true);
  train_cmd->add_option("--data", train_data, "pair directory")->required();
  train_cmd->add_option("--out", train_out, "output directory")->required();
  train_cmd->add_option("--resume", train_resume, "checkpoint to resume from");
  train_cmd->add_option("--max-steps", train_max_steps, "stop after this many steps in this run");
  train_cmd->add_option("--stop-above-psnr", train_stop_psnr,
                        "stop once a periodic evaluation exceeds this PSNR (needs eval_every)");
  train_cmd->footer(model_help() + train_help());

  // eval
  Common eval_c;
  std::string eval_ckpt, eval_data;
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a pair directory");
  add_common(*eval, eval_c, false);
  eval->add_option("--ckpt", eval_ckpt, "checkpoint")->required();
  eval->add_option("--data", eval_data, "pair directory")->required();
  eval->footer("\nNo config keys: the model is defined by the checkpoint.\n");

  // desnow
  Common desnow_c;
  std::string desnow_ckpt, desnow_in, desnow_out;
  int desnow_tile = 0, desnow_overlap = 64;
  auto* desnow = app.add_subcommand("desnow", "Restore one image");
  add_common(*desnow, desnow_c, false);
  desnow->add_option("--ckpt", desnow_ckpt, "checkpoint")->required();
  desnow->add_option("--in", desnow_in, "input PNG")->required();
  desnow->add_option("--out", desnow_out, "output PNG")->required();
  desnow->add_option("--tile", desnow_tile, "tile size (0 = whole image)")->capture_default_str();
  desnow->add_option("--overlap", desnow_overlap, "tile overlap")->capture_default_str();
  desnow->footer("\nNo config keys: the model is defined by the checkpoint.\n");

  // analyze
  Common analyze_c;
  std::vector<std::string> analyze_res{"256x256"};
  auto* analyze = app.add_subcommand("analyze", "Parameter and MAC counts");
  add_common(*analyze, analyze_c, true);
  analyze->add_option("--res", analyze_res, "resolution <W>x<H> for MAC counts (repeatable)")
      ->expected(1)
      ->allow_extra_args(false)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
      ->capture_default_str();
  analyze->footer(model_help());

  // bench
  Common bench_c;
  std::string bench_ckpt, bench_csv;
  std::vector<std::string> bench_res{"256x256"};
  int bench_reps = 10, bench_warmup = 3, bench_tile = 0, bench_overlap = 64;
  long long bench_budget_mb = 0;
  unsigned long long bench_seed = 0;
  auto* bench = app.add_subcommand("bench", "Time inference");
  add_common(*bench, bench_c, true);
  bench->add_option("--ckpt", bench_ckpt, "checkpoint (default: freshly initialized model)");
  bench->add_option("--res", bench_res, "resolution <W>x<H> (repeatable)")
      ->expected(1)
      ->allow_extra_args(false)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
      ->capture_default_str();
  bench->add_option("--reps", bench_reps, "timed runs")->capture_default_str();
  bench->add_option("--warmup", bench_warmup, "untimed runs")->capture_default_str();
  bench->add_option("--tile", bench_tile, "tile size (0 = whole image)")->capture_default_str();
  bench->add_option("--overlap", bench_overlap, "tile overlap")->capture_default_str();
  bench->add_option("--memory-budget-mb", bench_budget_mb, "OOM threshold (0 = available memory)");
  bench->add_option("--seed", bench_seed, "initialization seed")->capture_default_str();
  bench->add_option("--csv", bench_csv, "write the comparison table here");
  bench->footer(model_help() + "\nThread count: EPN_NUM_THREADS (default 1).\n");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*synth) {
      SynthConfig cfg;
      apply_all(gather(synth_c, nullptr), {bind_keys(cfg)});
      cfg.validate();
      std::vector<ImageTensor> cleans;
      if (!synth_clean.empty()) {
        std::vector<std::filesystem::path> files;
        for (const auto& e : std::filesystem::directory_iterator(synth_clean)) {
          if (e.path().extension() == ".png") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) cleans.push_back(read_png<double>(f));
      } else {
        if (synth_count <= 0) throw ConfigError("--count must be positive");
        for (int i = 0; i < synth_count; ++i) {
          cleans.push_back(procedural_scene(cfg.rng_seed * 1000003ULL + static_cast<unsigned>(i), synth_h, synth_w));
        }
      }
      const int n = make_pair_dataset(cfg, cleans, synth_out);
      out << "pairs=" << n << " dir=" << synth_out << "\n";
    } else if (*train_cmd) {
      ModelConfig mc;
      KeyValues kv = gather(train_c, &mc);
      TrainConfig tc;
      apply_all(kv, {bind_keys(mc), bind_keys(tc)});
      mc.validate();
      tc.validate();
      TrainOptions opts;
      if (!train_resume.empty()) opts.resume_from = train_resume;
      opts.max_steps_this_run = train_max_steps;
      if (train_stop_psnr > 0.0) opts.stop_above_psnr = train_stop_psnr;
      if (train_c.verbose) {
        opts.on_step = [&err](const TrainLogRow& r) {
          err << "step " << r.step << " lr " << r.lr << " loss " << r.loss << " (" << r.wall_ms << " ms)\n";
        };
      }
      const TrainResult res = train(mc, tc, train_data, train_out, opts);
      for (const auto& e : res.events) err << e << "\n";
      out << "checkpoint=" << res.checkpoint.string() << " log=" << res.log.string() << "\n";
    } else if (*eval) {
      const Model<float> model = load_checkpoint<float>(eval_ckpt);
      const PairIndex index = load_pairs(eval_data);
      index.require_complete();
      if (index.size() == 0) throw IoError(eval_data, "no pairs found");
      const auto rows = evaluate(model, index);
      double p = 0.0, s = 0.0;
      for (const auto& r : rows) {
        out << r.id << " psnr=" << metric(r.psnr) << " ssim=" << metric(r.ssim) << "\n";
        p += r.psnr;
        s += r.ssim;
      }
      const double n = static_cast<double>(rows.size());
      out << "mean psnr=" << metric(p / n) << " ssim=" << metric(s / n) << "\n";
    } else if (*desnow) {
      if (desnow_tile < 0 || desnow_overlap < 0) throw ConfigError("--tile and --overlap must be non-negative");
      const Model<float> model = load_checkpoint<float>(desnow_ckpt);
      std::optional<TileOptions> tiling;
      if (desnow_tile > 0) tiling = TileOptions{desnow_tile, desnow_overlap, bench_threads()};
      const DesnowReport r = desnow_image(model, desnow_in, desnow_out, tiling);
      if (desnow_c.verbose) err << r.width << "x" << r.height << " tiles=" << r.tiles << " " << r.seconds << " s\n";
      out << "wrote " << desnow_out << "\n";
    } else if (*analyze) {
      ModelConfig mc;
      apply_all(gather(analyze_c, &mc), {bind_keys(mc)});
      const ComplexityReport r = count_params(mc);
      auto line = [&out](const std::string& name, std::int64_t v) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%-10s %12lld  %8.2f M\n", name.c_str(), static_cast<long long>(v), v / 1e6);
        out << buf;
      };
      line("encoder", r.encoder);
      line("eams", r.eams);
      line("hor", r.hor);
      line("decoder", r.decoder);
      line("heads", r.heads);
      line("total", r.total);
      for (const auto& res : analyze_res) {
        const auto [w, h] = parse_resolution(res);
        char buf[96];
        std::snprintf(buf, sizeof buf, "gmacs@%dx%d %.2f\n", w, h, count_macs(mc, h, w) / 1e9);
        out << buf;
      }
    } else if (*bench) {
      if (bench_tile < 0 || bench_overlap < 0) throw ConfigError("--tile and --overlap must be non-negative");
      ModelConfig mc;
      KeyValues kv = gather(bench_c, &mc);
      std::optional<Model<float>> model;
      if (!bench_ckpt.empty()) {
        if (!kv.empty()) throw ConfigError("model keys cannot be combined with --ckpt");
        model.emplace(load_checkpoint<float>(bench_ckpt));
      } else {
        apply_all(kv, {bind_keys(mc)});
        model.emplace(mc, bench_seed);
      }
      std::vector<BenchReport> reports;
      for (const auto& res : bench_res) {
        const auto [w, h] = parse_resolution(res);
        BenchOptions bo;
        bo.width = w;
        bo.height = h;
        bo.reps = bench_reps;
        bo.warmup = bench_warmup;
        bo.memory_budget_bytes = bench_budget_mb * 1024 * 1024;
        if (bench_tile > 0) bo.tiling = TileOptions{bench_tile, bench_overlap, bench_threads()};
        if (bench_c.verbose) err << "bench " << res << "\n";
        reports.push_back(bench_inference(*model, bo));
      }
      if (!bench_csv.empty()) {
        out << emit_comparison_table(reports, bench_csv);
      } else {
        std::vector<BenchRow> rows;
        for (const auto& r : reports) rows.push_back(to_row(r));
        out << render_text_table(rows);
      }
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace epn
