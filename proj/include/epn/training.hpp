// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "epn/config.hpp"
#include "epn/data_pipeline.hpp"
#include "epn/losses_metrics.hpp"
#include "epn/network.hpp"

namespace epn {

struct TrainConfig {
  double base_lr = 4e-4;
  double max_lr = 6e-4;
  std::string cyclic_mode = "triangular";  // triangular | triangular2 | exp_range
  double cyclic_gamma = 1.0;
  double base_momentum = 0.9;  // AdamW beta1
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int cycle_period_steps = 2000;  // steps per half cycle; the full cycle is twice this
  int batch_size = 60;
  double weight_decay = 1e-4;
  long long total_steps = 1000;
  unsigned long long seed = 0;
  long long checkpoint_every = 0;  // 0 writes only the final checkpoint
  long long eval_every = 0;        // 0 disables periodic evaluation
  int patch_size = 256;            // 0 trains on full images
  bool augment = true;
  bool random_sampling = true;
  double grad_clip = 0.0;  // global-norm clipping, 0 disables
  double loss_epsilon = 1e-3;
  std::string loss_reduction = "per_pixel_mean";  // per_pixel_mean | per_image_norm
  int producers = 1;

  void validate() const;
};

KeySet bind_keys(TrainConfig& cfg);

// Cyclic learning rate (PyTorch CyclicLR semantics) at a 0-based step.
double cyclic_lr(long long step, const TrainConfig& cfg);

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// One decoupled-weight-decay Adam update of a flat parameter array. `step` is
// the 1-based update count used for bias correction.
template <typename T>
void adamw_update(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v,
                  long long step, double lr, const AdamWHyper& hp);

template <typename T>
class AdamW {
 public:
  AdamW(const Model<T>& model, AdamWHyper hp);

  // Returns false (and leaves weights and moments untouched) when any gradient is non-finite.
  bool step(Model<T>& model, double lr);
  long long steps_taken() const { return t_; }

  void save(const std::filesystem::path& path, long long next_step) const;
  // Returns the training step to resume from.
  long long load(const std::filesystem::path& path);

 private:
  AdamWHyper hp_;
  long long t_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

struct TrainLogRow {
  long long step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double wall_ms = 0.0;
  std::optional<double> psnr;
  std::optional<double> ssim;
};

struct TrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  std::vector<TrainLogRow> rows;
  std::vector<std::string> events;
};

struct TrainOptions {
  // Resume from a checkpoint written by train(); its optimizer state sits beside it.
  std::optional<std::filesystem::path> resume_from;
  // Stop after this many steps in this invocation (0 runs to total_steps).
  long long max_steps_this_run = 0;
  // Stop after the first periodic evaluation whose mean PSNR exceeds this.
  std::optional<double> stop_above_psnr;
  std::function<void(const TrainLogRow&)> on_step;
};

// Writes <out>/train_log.csv, periodic <out>/step_<n>.ckpt, and <out>/final.ckpt
// (each with a .state optimizer file).
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const std::filesystem::path& data_dir, const std::filesystem::path& out_dir,
                  const TrainOptions& options = {});

std::filesystem::path optimizer_state_path(const std::filesystem::path& checkpoint);

struct EvalRow {
  std::string id;
  double psnr = 0.0;
  double ssim = 0.0;
};

// Restores every pair (output clamped to [0, 1]) and scores it against the clean image.
std::vector<EvalRow> evaluate(const Model<float>& model, const PairIndex& index);

}  // namespace epn
