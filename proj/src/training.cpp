// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

#include "epn/training.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>

#include "epn/image_io.hpp"

namespace epn {

// ----------------------------------------------------------- TrainConfig

void TrainConfig::validate() const {
  if (!(base_lr > 0.0) || max_lr < base_lr) throw ConfigError("train: need 0 < base_lr <= max_lr");
  if (cyclic_mode != "triangular" && cyclic_mode != "triangular2" && cyclic_mode != "exp_range") {
    throw ConfigError("train: cyclic_mode must be triangular, triangular2 or exp_range");
  }
  if (!(cyclic_gamma > 0.0) || cyclic_gamma > 1.0) throw ConfigError("train: cyclic_gamma in (0, 1]");
  if (cycle_period_steps <= 0) throw ConfigError("train: cycle_period_steps must be positive");
  if (batch_size <= 0) throw ConfigError("train: batch_size must be positive");
  if (total_steps < 0) throw ConfigError("train: total_steps must be non-negative");
  if (base_momentum < 0.0 || base_momentum >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw ConfigError("train: momentum terms must lie in [0, 1)");
  }
  if (weight_decay < 0.0 || grad_clip < 0.0) throw ConfigError("train: negative regularizer");
  if (!(loss_epsilon > 0.0)) throw ConfigError("train: loss_epsilon must be positive");
  if (loss_reduction != "per_pixel_mean" && loss_reduction != "per_image_norm") {
    throw ConfigError("train: loss_reduction must be per_pixel_mean or per_image_norm");
  }
  if (patch_size < 0) throw ConfigError("train: patch_size must be non-negative");
}

KeySet bind_keys(TrainConfig& c) {
  return {
      double_key("base_lr", c.base_lr, "lower learning rate of the cycle"),
      double_key("max_lr", c.max_lr, "upper learning rate of the cycle"),
      string_key("cyclic_mode", c.cyclic_mode, "triangular | triangular2 | exp_range"),
      double_key("cyclic_gamma", c.cyclic_gamma, "amplitude decay per step (exp_range)"),
      double_key("base_momentum", c.base_momentum, "AdamW beta1"),
      double_key("beta2", c.beta2, "AdamW beta2"),
      double_key("adam_eps", c.adam_eps, "AdamW denominator epsilon"),
      int_key("cycle_period_steps", c.cycle_period_steps, "steps per half cycle (base -> max)"),
      int_key("batch_size", c.batch_size, "samples per optimizer step"),
      double_key("weight_decay", c.weight_decay, "decoupled weight decay"),
      int64_key("total_steps", c.total_steps, "optimizer steps"),
      u64_key("seed", c.seed, "initialization and sampling seed"),
      int64_key("checkpoint_every", c.checkpoint_every, "steps between checkpoints (0 = final only)"),
      int64_key("eval_every", c.eval_every, "steps between train-set evaluations (0 = off)"),
      int_key("patch_size", c.patch_size, "training patch size (0 = full images)"),
      bool_key("augment", c.augment, "random flips and 90-degree rotations"),
      bool_key("random_sampling", c.random_sampling, "draw samples at random instead of in order"),
      double_key("grad_clip", c.grad_clip, "global gradient-norm clip (0 = off)"),
      double_key("loss_epsilon", c.loss_epsilon, "Charbonnier epsilon"),
      string_key("loss_reduction", c.loss_reduction, "per_pixel_mean | per_image_norm"),
      int_key("producers", c.producers, "data loading threads"),
  };
}

double cyclic_lr(long long step, const TrainConfig& cfg) {
  if (step < 0) throw DomainError("cyclic_lr: negative step");
  // Integer phase so every cycle sees bit-identical rates.
  const long long half = cfg.cycle_period_steps;
  const long long cycle = 1 + step / (2 * half);
  const long long phase = step % (2 * half);
  const double rise = static_cast<double>(half - std::abs(phase - half)) / static_cast<double>(half);
  double scale = 1.0;
  if (cfg.cyclic_mode == "triangular2") {
    scale = 1.0 / std::pow(2.0, static_cast<double>(cycle - 1));
  } else if (cfg.cyclic_mode == "exp_range") {
    scale = std::pow(cfg.cyclic_gamma, static_cast<double>(step));
  }
  return cfg.base_lr + (cfg.max_lr - cfg.base_lr) * rise * scale;
}

// ----------------------------------------------------------------- AdamW

template <typename T>
void adamw_update(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v,
                  long long step, double lr, const AdamWHyper& hp) {
  if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size()) {
    throw DimensionError("adamw: parameter, gradient and state sizes differ");
  }
  if (step < 1) throw DomainError("adamw: step count starts at 1");
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double p = static_cast<double>(params[i]);
    const double g = static_cast<double>(grads[i]);
    p -= lr * hp.weight_decay * p;
    const double mi = hp.beta1 * static_cast<double>(m[i]) + (1.0 - hp.beta1) * g;
    const double vi = hp.beta2 * static_cast<double>(v[i]) + (1.0 - hp.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    p -= lr * (mi / bc1) / (std::sqrt(vi / bc2) + hp.eps);
    params[i] = static_cast<T>(p);
  }
}

template <typename T>
AdamW<T>::AdamW(const Model<T>& model, AdamWHyper hp) : hp_(hp) {
  model.visit_params([this](const std::string&, const Param<T>& p) {
    m_.emplace_back(p.numel(), T{0});
    v_.emplace_back(p.numel(), T{0});
  });
}

template <typename T>
bool AdamW<T>::step(Model<T>& model, double lr) {
  bool finite = true;
  model.visit_params([&finite](const std::string&, const Param<T>& p) {
    for (T g : p.grad) {
      if (!std::isfinite(static_cast<double>(g))) {
        finite = false;
        return;
      }
    }
  });
  if (!finite) return false;
  ++t_;
  std::size_t i = 0;
  model.visit_params([&](const std::string&, Param<T>& p) {
    adamw_update<T>(p.value, p.grad, m_[i], v_[i], t_, lr, hp_);
    ++i;
  });
  return true;
}

namespace {

constexpr char kStateMagic[8] = {'E', 'P', 'N', 'S', 'T', 'A', 'T', 'E'};

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(v >> (8 * i));
  out.write(b, 8);
}

std::uint64_t get_u64(std::istream& in, const std::filesystem::path& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw CheckpointError(path.string() + ": truncated state");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

template <typename T>
void AdamW<T>::save(const std::filesystem::path& path, long long next_step) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open optimizer state for writing");
  out.write(kStateMagic, 8);
  put_u64(out, static_cast<std::uint64_t>(next_step));
  put_u64(out, static_cast<std::uint64_t>(t_));
  put_u64(out, m_.size());
  for (const auto* moments : {&m_, &v_}) {
    for (const auto& arr : *moments) {
      put_u64(out, arr.size());
      for (T x : arr) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(x));
        char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<char>(bits >> (8 * i));
        out.write(b, 4);
      }
    }
  }
  if (!out) throw IoError(path.string(), "optimizer state write failed");
}

template <typename T>
long long AdamW<T>::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open optimizer state");
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kStateMagic, 8) != 0) {
    throw CheckpointError(path.string() + ": not an optimizer state file");
  }
  const auto next_step = static_cast<long long>(get_u64(in, path));
  t_ = static_cast<long long>(get_u64(in, path));
  if (get_u64(in, path) != m_.size()) throw CheckpointError(path.string() + ": tensor count mismatch");
  for (auto* moments : {&m_, &v_}) {
    for (auto& arr : *moments) {
      if (get_u64(in, path) != arr.size()) throw CheckpointError(path.string() + ": moment shape mismatch");
      for (T& x : arr) {
        unsigned char b[4];
        if (!in.read(reinterpret_cast<char*>(b), 4)) throw CheckpointError(path.string() + ": truncated state");
        std::uint32_t bits = 0;
        for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        x = static_cast<T>(std::bit_cast<float>(bits));
      }
    }
  }
  return next_step;
}

// ----------------------------------------------------------------- train

std::filesystem::path optimizer_state_path(const std::filesystem::path& checkpoint) {
  auto p = checkpoint;
  p.replace_extension(".state");
  return p;
}

std::vector<EvalRow> evaluate(const Model<float>& model, const PairIndex& index) {
  std::vector<EvalRow> rows;
  for (std::size_t i = 0; i < index.size(); ++i) {
    const PairSample s = index.load(i);
    const Tensor<float> out = clamp01(forward_padded(model, s.snowy));
    rows.push_back({s.source_id, psnr(out, s.clean), ssim(out, s.clean)});
  }
  return rows;
}

namespace {

void write_log_header(std::ostream& out) { out << "step,lr,loss,wall_ms,psnr,ssim\n"; }

void write_log_row(std::ostream& out, const TrainLogRow& r) {
  out << r.step << ',' << format_double(r.lr) << ',' << format_double(r.loss) << ','
      << format_double(r.wall_ms) << ',' << (r.psnr ? format_double(*r.psnr) : "") << ','
      << (r.ssim ? format_double(*r.ssim) : "") << '\n';
}

void save_all(const Model<float>& model, const AdamW<float>& opt, const std::filesystem::path& ckpt,
              long long next_step) {
  save_checkpoint(model, ckpt);
  opt.save(optimizer_state_path(ckpt), next_step);
}

double clip_gradients(Model<float>& model, double max_norm) {
  double sq = 0.0;
  model.visit_params([&sq](const std::string&, const Param<float>& p) {
    for (float g : p.grad) sq += static_cast<double>(g) * g;
  });
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const auto scale = static_cast<float>(max_norm / norm);
    model.visit_params([scale](const std::string&, Param<float>& p) {
      for (float& g : p.grad) g *= scale;
    });
  }
  return norm;
}

}  // namespace

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const std::filesystem::path& data_dir, const std::filesystem::path& out_dir,
                  const TrainOptions& options) {
  cfg.validate();
  const PairIndex index = load_pairs(data_dir);
  index.require_complete();
  if (index.size() == 0) throw IoError(data_dir.string(), "no training pairs found");

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError(out_dir.string(), "cannot create directory: " + ec.message());

  Model<float> model(model_cfg, cfg.seed);
  AdamW<float> opt(model, {cfg.base_momentum, cfg.beta2, cfg.adam_eps, cfg.weight_decay});
  long long start = 0;
  if (options.resume_from) {
    model = load_checkpoint<float>(*options.resume_from);
    if (!(model.config() == model_cfg)) {
      throw CheckpointError(options.resume_from->string() + ": model config differs from the requested one");
    }
    opt = AdamW<float>(model, {cfg.base_momentum, cfg.beta2, cfg.adam_eps, cfg.weight_decay});
    start = opt.load(optimizer_state_path(*options.resume_from));
  }
  long long end = cfg.total_steps;
  if (options.max_steps_this_run > 0) end = std::min(end, start + options.max_steps_this_run);

  TrainResult result;
  result.log = out_dir / "train_log.csv";
  std::ofstream log(result.log, start > 0 ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError(result.log.string(), "cannot open training log");
  if (start == 0) write_log_header(log);

  LoaderOptions lo;
  lo.batch_size = cfg.batch_size;
  lo.patch_size = cfg.patch_size;
  lo.augment = cfg.augment;
  lo.random_sampling = cfg.random_sampling;
  lo.seed = cfg.seed;
  lo.producers = cfg.producers;
  BatchLoader loader(index, lo, start, end);

  const LossConfig loss_cfg{cfg.loss_epsilon, cfg.loss_reduction == "per_image_norm"
                                                  ? Reduction::kPerImageNorm
                                                  : Reduction::kPerPixelMean};
  Model<float>::Cache cache;
  Tensor<float> grad;
  for (long long step = start; step < end; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = cyclic_lr(step, cfg);
    const std::vector<PairSample> batch = loader.next();
    model.zero_grad();
    double loss = 0.0;
    const auto inv_batch = 1.0f / static_cast<float>(batch.size());
    for (const PairSample& s : batch) {
      const Tensor<float> out = model.forward(s.snowy, cache);
      const double l = charbonnier(out, s.clean, loss_cfg, &grad);
      if (!std::isfinite(l)) {
        throw TrainingError("non-finite loss at step " + std::to_string(step) + " on sample '" +
                            s.source_id + "'");
      }
      loss += l / static_cast<double>(batch.size());
      for (auto& g : grad.values()) g *= inv_batch;
      model.backward(cache, grad);
    }
    if (cfg.grad_clip > 0.0) clip_gradients(model, cfg.grad_clip);
    if (!opt.step(model, lr)) {
      const std::string msg = "step " + std::to_string(step) + ": non-finite gradient, update skipped";
      std::cerr << msg << "\n";
      result.events.push_back(msg);
    }

    TrainLogRow row;
    row.step = step;
    row.lr = lr;
    row.loss = loss;
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const long long done = step + 1;
    if (cfg.eval_every > 0 && done % cfg.eval_every == 0) {
      const Model<float> snapshot = model;
      double p = 0.0, q = 0.0;
      const auto rows = evaluate(snapshot, index);
      for (const auto& r : rows) {
        p += r.psnr;
        q += r.ssim;
      }
      row.psnr = p / static_cast<double>(rows.size());
      row.ssim = q / static_cast<double>(rows.size());
    }
    write_log_row(log, row);
    if (options.on_step) options.on_step(row);
    result.rows.push_back(row);
    if (options.stop_above_psnr && row.psnr && *row.psnr > *options.stop_above_psnr) {
      end = done;
      break;
    }
    if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < end) {
      save_all(model, opt, out_dir / ("step_" + std::to_string(done) + ".ckpt"), done);
    }
  }
  log.flush();
  result.checkpoint = out_dir / (end == cfg.total_steps ? "final.ckpt" : "step_" + std::to_string(end) + ".ckpt");
  save_all(model, opt, result.checkpoint, end);
  return result;
}

template void adamw_update<float>(std::span<float>, std::span<const float>, std::span<float>,
                                  std::span<float>, long long, double, const AdamWHyper&);
template void adamw_update<double>(std::span<double>, std::span<const double>, std::span<double>,
                                   std::span<double>, long long, double, const AdamWHyper&);
template class AdamW<float>;
template class AdamW<double>;

}  // namespace epn
