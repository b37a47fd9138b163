// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "epn/network.hpp"

namespace epn {

// Parameter totals per component, derived from layer shapes alone.
struct ComplexityReport {
  std::int64_t encoder = 0;  // mining blocks and stride-2 samplers
  std::int64_t eams = 0;
  std::int64_t hor = 0;      // rebuilding blocks at the deepest scale
  std::int64_t decoder = 0;  // upsamplers and decoder blocks
  std::int64_t heads = 0;    // input stem and output head
  std::int64_t total = 0;
  int height = 256;
  int width = 256;
  std::int64_t macs = 0;

  std::int64_t component_sum() const { return encoder + eams + hor + decoder + heads; }
};

ComplexityReport count_params(const ModelConfig& cfg, int height = 256, int width = 256);

// Closed-form parameter count of one mining block at `channels` (CIMB, or SE-ResBlock under the ablation).
std::int64_t mining_block_params(const ModelConfig& cfg, int channels);

struct MacTerm {
  std::string layer;
  std::int64_t macs = 0;
  // False for layers acting on pooled vectors, whose cost does not depend on the image size.
  bool spatial = true;
};

struct MacBreakdown {
  std::vector<MacTerm> terms;

  std::int64_t spatial() const;
  std::int64_t global() const;
  std::int64_t total() const { return spatial() + global(); }
};

// One multiply-accumulate per kernel tap per output element; biases,
// normalizations, activations and pooling excluded. H and W must be
// multiples of 32.
MacBreakdown mac_breakdown(const ModelConfig& cfg, int height, int width);
std::int64_t count_macs(const ModelConfig& cfg, int height, int width);

// Rough peak working-set size of an untiled float forward pass.
std::int64_t estimate_forward_bytes(const ModelConfig& cfg, int height, int width);

struct BenchOptions {
  int height = 256;
  int width = 256;
  int warmup = 3;
  int reps = 10;
  std::optional<TileOptions> tiling;
  // Untiled runs whose estimated working set exceeds this are reported as OOM.
  // 0 reads MemAvailable from /proc/meminfo.
  std::int64_t memory_budget_bytes = 0;
};

struct BenchReport {
  std::string resolution;  // "<W>x<H>"
  int reps = 0;
  bool oom = false;
  bool tiled = false;
  std::vector<double> samples;     // seconds, baseline-subtracted
  std::vector<double> timestamps;  // seconds since the first timed run started
  double mean_s = 0.0;
  double median_s = 0.0;
  double p95_s = 0.0;
  double min_s = 0.0;
  double fps = 0.0;
  double baseline_s = 0.0;
  double params_m = 0.0;
  double gmacs = 0.0;
  std::string device;
};

// Thread count from EPN_NUM_THREADS (default 1).
int bench_threads();
std::string device_descriptor();
std::int64_t available_memory_bytes();

BenchReport bench_inference(const Model<float>& model, const BenchOptions& options);

// One CSV record: resolution,reps,mean_s,median_s,p95_s,fps,params_m,gmacs,device.
struct BenchRow {
  std::string resolution;
  int reps = 0;
  bool oom = false;
  double mean_s = 0.0;
  double median_s = 0.0;
  double p95_s = 0.0;
  double fps = 0.0;
  double params_m = 0.0;  // rounded to 2 decimals
  double gmacs = 0.0;     // rounded to 2 decimals
  std::string device;

  bool operator==(const BenchRow&) const = default;
};

BenchRow to_row(const BenchReport& report);

// Writes the CSV to `path` and the aligned text table beside it (`path` + ".txt").
// Returns the text rendering.
std::string emit_comparison_table(const std::vector<BenchReport>& reports,
                                  const std::filesystem::path& path);
std::string render_text_table(const std::vector<BenchRow>& rows);
std::vector<BenchRow> parse_comparison_table(const std::filesystem::path& path);

}  // namespace epn
