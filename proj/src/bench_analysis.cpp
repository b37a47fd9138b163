// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

#include "epn/bench_analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <new>
#include <numeric>
#include <sstream>

#include "epn/errors.hpp"

namespace epn {

namespace {

using i64 = std::int64_t;

i64 conv_params(i64 in, i64 out, i64 k, i64 groups = 1) { return k * k * (in / groups) * out + out; }

i64 se_params(i64 c, i64 r) { return conv_params(c, c / r, 1) + conv_params(c / r, c, 1); }

i64 cimb_params(const ModelConfig& cfg, i64 c) {
  const i64 e = c * cfg.expand_factor;
  const i64 norms = cfg.ablations.wo_ln ? 0 : 2 * 2 * c;
  return norms + conv_params(c, e, 1) + conv_params(e, e, 3, e) + se_params(e, cfg.se_reduction) +
         conv_params(e, c, 1) + conv_params(c, e, 1) + conv_params(e, c, 1);
}

i64 seres_params(i64 c, i64 r) { return 2 * conv_params(c, c, 3) + se_params(c, r); }

i64 eam_params(const ModelConfig& cfg, i64 c) {
  const i64 img = cfg.input_channels;
  return conv_params(cfg.ablations.eam_from_fin ? c : img, c, 1) + conv_params(c, c, 1) +
         conv_params(c + img, c, 3);
}

// k*k*(in/groups)*out per output pixel.
i64 conv_macs(i64 in, i64 out, i64 k, i64 out_pixels, i64 groups = 1) {
  return k * k * (in / groups) * out * out_pixels;
}

void add_se_macs(std::vector<MacTerm>& t, const std::string& name, i64 c, i64 r) {
  t.push_back({name + ".se", conv_macs(c, c / r, 1, 1) + conv_macs(c / r, c, 1, 1), false});
}

void add_mining_macs(std::vector<MacTerm>& t, const ModelConfig& cfg, const std::string& name, i64 c,
                     i64 px) {
  if (cfg.ablations.cimb_to_se_resblock) {
    t.push_back({name + ".conv", 2 * conv_macs(c, c, 3, px), true});
    add_se_macs(t, name, c, cfg.se_reduction);
    return;
  }
  const i64 e = c * cfg.expand_factor;
  t.push_back({name + ".pointwise", 4 * conv_macs(c, e, 1, px), true});
  t.push_back({name + ".depthwise", conv_macs(e, e, 3, px, e), true});
  add_se_macs(t, name, e, cfg.se_reduction);
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  // Nearest-rank percentile.
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::min(v.size() - 1, rank == 0 ? 0 : rank - 1)];
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::int64_t mining_block_params(const ModelConfig& cfg, int channels) {
  return cfg.ablations.cimb_to_se_resblock ? seres_params(channels, cfg.se_reduction)
                                           : cimb_params(cfg, channels);
}

ComplexityReport count_params(const ModelConfig& cfg, int height, int width) {
  cfg.validate();
  ComplexityReport r;
  const auto& ch = cfg.channels;
  const int S = ModelConfig::kStages;
  r.heads = conv_params(cfg.input_channels, ch[0], 3) + conv_params(ch[0], cfg.input_channels, 3);
  for (int k = 0; k < S; ++k) {
    r.encoder += mining_block_params(cfg, ch[k]);
    if (!cfg.ablations.wo_eam) r.eams += eam_params(cfg, ch[k]);
    if (k + 1 < S) {
      r.encoder += conv_params(ch[k], 2 * i64{ch[k]}, 3);
      r.decoder += conv_params(ch[k + 1], ch[k + 1] / 2, 3) + seres_params(ch[k], cfg.se_reduction);
    }
  }
  r.hor = cfg.hor_depth * mining_block_params(cfg, ch.back());
  r.total = r.component_sum();
  r.height = height;
  r.width = width;
  r.macs = count_macs(cfg, height, width);
  return r;
}

std::int64_t MacBreakdown::spatial() const {
  i64 s = 0;
  for (const auto& t : terms) s += t.spatial ? t.macs : 0;
  return s;
}

std::int64_t MacBreakdown::global() const {
  i64 s = 0;
  for (const auto& t : terms) s += t.spatial ? 0 : t.macs;
  return s;
}

MacBreakdown mac_breakdown(const ModelConfig& cfg, int height, int width) {
  cfg.validate();
  if (height <= 0 || width <= 0 || height % ModelConfig::kAlignment != 0 ||
      width % ModelConfig::kAlignment != 0) {
    throw DimensionError("count_macs: " + std::to_string(width) + "x" + std::to_string(height) +
                         " is not a positive multiple of 32");
  }
  MacBreakdown b;
  auto& t = b.terms;
  const auto& ch = cfg.channels;
  const i64 img = cfg.input_channels;
  const int S = ModelConfig::kStages;
  auto px = [&](int k) { return (i64{height} >> k) * (i64{width} >> k); };

  t.push_back({"stem", conv_macs(img, ch[0], 3, px(0)), true});
  for (int k = 0; k < S; ++k) {
    const std::string p = "encoder." + std::to_string(k);
    add_mining_macs(t, cfg, p, ch[k], px(k));
    if (!cfg.ablations.wo_eam) {
      const i64 c = ch[k];
      t.push_back({p + ".eam", conv_macs(cfg.ablations.eam_from_fin ? c : img, c, 1, px(k)) +
                                   conv_macs(c, c, 1, px(k)) + conv_macs(c + img, c, 3, px(k)),
                   true});
    }
    if (k + 1 < S) t.push_back({p + ".down", conv_macs(ch[k], 2 * i64{ch[k]}, 3, px(k + 1)), true});
  }
  for (int j = 0; j < cfg.hor_depth; ++j) {
    add_mining_macs(t, cfg, "rebuild." + std::to_string(j), ch.back(), px(S - 1));
  }
  for (int k = S - 2; k >= 0; --k) {
    const std::string p = "decoder." + std::to_string(k);
    t.push_back({p + ".up", conv_macs(ch[k + 1], ch[k + 1] / 2, 3, px(k)), true});
    t.push_back({p + ".block.conv", 2 * conv_macs(ch[k], ch[k], 3, px(k)), true});
    add_se_macs(t, p + ".block", ch[k], cfg.se_reduction);
  }
  t.push_back({"head", conv_macs(ch[0], img, 3, px(0)), true});
  return b;
}

std::int64_t count_macs(const ModelConfig& cfg, int height, int width) {
  return mac_breakdown(cfg, height, width).total();
}

std::int64_t estimate_forward_bytes(const ModelConfig& cfg, int height, int width) {
  // Skips at every scale plus the cached intermediates of the widest block
  // (about a dozen expanded-width maps at full resolution).
  const double px = static_cast<double>(height) * width;
  double floats = 0.0;
  for (int k = 0; k < ModelConfig::kStages; ++k) floats += cfg.channels[k] * px / std::pow(4.0, k);
  floats += 12.0 * cfg.channels[0] * cfg.expand_factor * px;
  floats += 3.0 * cfg.input_channels * px;
  return static_cast<i64>(floats * sizeof(float));
}

int bench_threads() {
  if (const char* s = std::getenv("EPN_NUM_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(s, &end, 10);
    if (end != s && *end == '\0' && n > 0 && n <= 1024) return static_cast<int>(n);
  }
  return 1;
}

std::string device_descriptor() {
  std::string cpu = "cpu";
  std::ifstream info("/proc/cpuinfo");
  for (std::string line; std::getline(info, line);) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) cpu = line.substr(line.find_first_not_of(' ', colon + 1));
      break;
    }
  }
  std::replace(cpu.begin(), cpu.end(), ',', ' ');
  return cpu + " threads=" + std::to_string(bench_threads());
}

std::int64_t available_memory_bytes() {
  std::ifstream info("/proc/meminfo");
  for (std::string key; info >> key;) {
    i64 kb = 0;
    info >> kb;
    if (key == "MemAvailable:") return kb * 1024;
    info.ignore(1 << 10, '\n');
  }
  return i64{1} << 32;
}

BenchReport bench_inference(const Model<float>& model, const BenchOptions& opt) {
  if (opt.warmup < 3 || opt.reps < 10) throw ConfigError("bench: need warmup >= 3 and reps >= 10");
  BenchReport r;
  r.resolution = std::to_string(opt.width) + "x" + std::to_string(opt.height);
  r.tiled = opt.tiling.has_value();
  r.device = device_descriptor();
  r.params_m = static_cast<double>(model.num_params()) / 1e6;
  const int ph = (opt.height + ModelConfig::kAlignment - 1) / ModelConfig::kAlignment * ModelConfig::kAlignment;
  const int pw = (opt.width + ModelConfig::kAlignment - 1) / ModelConfig::kAlignment * ModelConfig::kAlignment;
  r.gmacs = static_cast<double>(count_macs(model.config(), ph, pw)) / 1e9;

  const i64 budget = opt.memory_budget_bytes > 0 ? opt.memory_budget_bytes : available_memory_bytes();
  if (!r.tiled && estimate_forward_bytes(model.config(), ph, pw) > budget) {
    r.oom = true;
    return r;
  }

  Tensor<float> image(model.config().input_channels, opt.height, opt.width);
  for (std::size_t i = 0; i < image.size(); ++i) image[i] = static_cast<float>((i * 2654435761u) % 1000) / 1000.0f;
  auto run = [&] {
    return r.tiled ? forward_tiled(model, image, *opt.tiling) : forward_padded(model, image);
  };
  using Clock = std::chrono::steady_clock;

  // Harness overhead: the same clock reads around a call that does no work.
  std::vector<double> empty;
  volatile float sink = 0.0f;
  for (int i = 0; i < opt.reps; ++i) {
    const auto t0 = Clock::now();
    sink = sink + image[0];
    empty.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
  }
  r.baseline_s = percentile(empty, 0.5);

  try {
    for (int i = 0; i < opt.warmup; ++i) sink = sink + run()[0];
    const auto origin = Clock::now();
    for (int i = 0; i < opt.reps; ++i) {
      const auto t0 = Clock::now();
      const Tensor<float> out = run();
      sink = sink + out[0];
      const auto t1 = Clock::now();
      r.timestamps.push_back(std::chrono::duration<double>(t0 - origin).count());
      r.samples.push_back(std::max(0.0, std::chrono::duration<double>(t1 - t0).count() - r.baseline_s));
    }
  } catch (const std::bad_alloc&) {
    r.oom = true;
    r.samples.clear();
    r.timestamps.clear();
    return r;
  }
  r.reps = opt.reps;
  r.mean_s = std::accumulate(r.samples.begin(), r.samples.end(), 0.0) / r.reps;
  r.median_s = percentile(r.samples, 0.5);
  r.p95_s = percentile(r.samples, 0.95);
  r.min_s = *std::min_element(r.samples.begin(), r.samples.end());
  r.fps = r.mean_s > 0.0 ? 1.0 / r.mean_s : 0.0;
  return r;
}

BenchRow to_row(const BenchReport& r) {
  BenchRow row;
  row.resolution = r.resolution;
  row.reps = r.reps;
  row.oom = r.oom;
  if (!r.oom) {
    row.mean_s = r.mean_s;
    row.median_s = r.median_s;
    row.p95_s = r.p95_s;
    row.fps = r.fps;
  }
  row.params_m = round2(r.params_m);
  row.gmacs = round2(r.gmacs);
  row.device = r.device;
  std::replace(row.device.begin(), row.device.end(), ',', ' ');
  return row;
}

namespace {

constexpr const char* kCsvHeader = "resolution,reps,mean_s,median_s,p95_s,fps,params_m,gmacs,device";

std::vector<std::string> row_cells(const BenchRow& r, bool csv) {
  auto timing = [&](double v) { return r.oom ? std::string("OOM") : csv ? format_double(v) : fixed2(v * 1000.0) + " ms"; };
  return {r.resolution,        std::to_string(r.reps), timing(r.mean_s),     timing(r.median_s),
          timing(r.p95_s),     r.oom ? "OOM" : (csv ? format_double(r.fps) : fixed2(r.fps)),
          fixed2(r.params_m),  fixed2(r.gmacs),        r.device};
}

double parse_number(const std::string& s, const std::filesystem::path& path) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size()) throw IoError(path.string(), "bad number '" + s + "' in comparison table");
  return v;
}

}  // namespace

std::string render_text_table(const std::vector<BenchRow>& rows) {
  const std::vector<std::string> header{"resolution", "reps", "mean",    "median", "p95",
                                        "fps",        "params(M)", "GMACs", "device"};
  std::vector<std::vector<std::string>> cells{header};
  for (const auto& r : rows) cells.push_back(row_cells(r, false));
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::ostringstream out;
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (i + 1 == line.size()) {
        out << line[i];
      } else {
        out << std::setw(static_cast<int>(width[i])) << line[i] << "  ";
      }
    }
    out << '\n';
  }
  return out.str();
}

std::string emit_comparison_table(const std::vector<BenchReport>& reports,
                                  const std::filesystem::path& path) {
  std::vector<BenchRow> rows;
  for (const auto& r : reports) rows.push_back(to_row(r));
  std::ofstream csv(path);
  if (!csv) throw IoError(path.string(), "cannot open for writing");
  csv << kCsvHeader << '\n';
  for (const auto& r : rows) {
    const auto c = row_cells(r, true);
    for (std::size_t i = 0; i < c.size(); ++i) csv << (i ? "," : "") << c[i];
    csv << '\n';
  }
  if (!csv) throw IoError(path.string(), "write failed");
  const std::string text = render_text_table(rows);
  auto txt_path = path;
  txt_path += ".txt";
  std::ofstream txt(txt_path);
  if (!txt) throw IoError(txt_path.string(), "cannot open for writing");
  txt << text;
  return text;
}

std::vector<BenchRow> parse_comparison_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open comparison table");
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw IoError(path.string(), "unexpected CSV header");
  std::vector<BenchRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 9) throw IoError(path.string(), "expected 9 fields in '" + line + "'");
    BenchRow r;
    r.resolution = f[0];
    r.reps = static_cast<int>(parse_number(f[1], path));
    r.oom = f[2] == "OOM";
    if (!r.oom) {
      r.mean_s = parse_number(f[2], path);
      r.median_s = parse_number(f[3], path);
      r.p95_s = parse_number(f[4], path);
      r.fps = parse_number(f[5], path);
    }
    r.params_m = parse_number(f[6], path);
    r.gmacs = parse_number(f[7], path);
    r.device = f[8];
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace epn
