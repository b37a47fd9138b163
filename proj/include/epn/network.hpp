// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "epn/blocks.hpp"
#include "epn/config.hpp"

namespace epn {

struct Ablations {
  bool cimb_to_se_resblock = false;
  bool wo_eam = false;
  bool wo_ln = false;
  bool gelu_to_relu = false;
  bool wo_shuffle = false;
  bool eam_from_fin = false;
  bool eam_elu_to_relu = false;

  bool operator==(const Ablations&) const = default;
};

struct ModelConfig {
  std::vector<int> channels{16, 32, 64, 128, 256, 512};
  int hor_depth = 20;
  int input_channels = 3;
  int expand_factor = 2;
  int shuffle_groups = 8;
  int se_reduction = 4;
  Ablations ablations;

  static constexpr int kStages = 6;
  // Spatial sizes must be multiples of this (five stride-2 steps).
  static constexpr int kAlignment = 32;

  void validate() const;
  BlockConfig block(int channels) const;
  bool operator==(const ModelConfig&) const = default;
};

// Binds every ModelConfig field to its config-file key.
KeySet bind_keys(ModelConfig& cfg);

// The desk-scale configuration: halved channel schedule, two rebuilding blocks.
ModelConfig tiny_model_config();

// Snapshot of named parameter arrays in deterministic model order.
struct NamedArray {
  std::string name;
  std::vector<int> shape;
  std::vector<float> values;
};

class ParamBundle {
 public:
  std::vector<NamedArray>& entries() { return entries_; }
  const std::vector<NamedArray>& entries() const { return entries_; }
  const NamedArray* find(const std::string& name) const;
  std::int64_t total_elements() const;

 private:
  std::vector<NamedArray> entries_;
};

// Encoder / rebuilding block: a CIMB, or an SE-ResBlock under the ablation.
template <typename T>
class MiningBlock {
 public:
  struct Cache {
    typename Cimb<T>::Cache cimb;
    typename SeResBlock<T>::Cache res;
  };

  MiningBlock() = default;
  MiningBlock(const BlockConfig& cfg, bool use_resblock);

  Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> forward(const Tensor<T>& x, Cache& cache) const;
  Tensor<T> backward(const Cache& cache, const Tensor<T>& dout);
  void reset_parameters(Rng& rng);
  std::int64_t macs(int h, int w) const;

  template <typename F>
  void visit(const std::string& p, F&& f) {
    if (use_resblock_) res_.visit(p + ".seres", f); else cimb_.visit(p + ".cimb", f);
  }
  template <typename F>
  void visit(const std::string& p, F&& f) const {
    if (use_resblock_) res_.visit(p + ".seres", f); else cimb_.visit(p + ".cimb", f);
  }

  Cimb<T>& cimb() { return cimb_; }
  SeResBlock<T>& resblock() { return res_; }

 private:
  bool use_resblock_ = false;
  Cimb<T> cimb_;
  SeResBlock<T> res_;
};

// Pyramid encoder (mining block + external attention per scale), rebuilding
// sub-net at the deepest scale, light SE-ResBlock decoder with additive skips,
// and a global residual head.
template <typename T>
class Model {
 public:
  struct Cache {
    std::vector<Tensor<T>> pyramid;
    std::vector<typename MiningBlock<T>::Cache> mining;
    std::vector<typename Eam<T>::Cache> eam;
    std::vector<Tensor<T>> features;
    std::vector<typename MiningBlock<T>::Cache> rebuild;
    std::vector<Tensor<T>> up_in;
    std::vector<typename SeResBlock<T>::Cache> decoder;
    Tensor<T> head_in;
  };

  explicit Model(ModelConfig cfg, std::uint64_t seed = 0);

  const ModelConfig& config() const { return cfg_; }

  // Requires H and W divisible by ModelConfig::kAlignment.
  Tensor<T> forward(const Tensor<T>& image) const;
  Tensor<T> forward(const Tensor<T>& image, Cache& cache) const;
  // Accumulates parameter gradients for d(loss)/d(output) = dout.
  void backward(const Cache& cache, const Tensor<T>& dout);

  void zero_grad();
  std::int64_t num_params() const;
  std::int64_t macs(int h, int w) const;

  ParamBundle bundle() const;
  // Throws CheckpointError on a missing tensor or a shape mismatch.
  void assign(const ParamBundle& bundle);

  template <typename F>
  void visit_params(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit_params(F&& f) const {
    visit_impl(*this, f);
  }

  Conv2d<T>& stem() { return stem_; }
  Conv2d<T>& head() { return head_; }
  MiningBlock<T>& encoder_block(int k) { return mining_[k]; }
  MiningBlock<T>& rebuild_block(int j) { return rebuild_[j]; }
  SeResBlock<T>& decoder_block(int k) { return decoder_[k]; }

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& self, F& f) {
    self.stem_.visit("stem", f);
    for (int k = 0; k < ModelConfig::kStages; ++k) {
      const std::string p = "encoder." + std::to_string(k);
      self.mining_[k].visit(p, f);
      if (!self.cfg_.ablations.wo_eam) self.eam_[k].visit(p + ".eam", f);
      if (k + 1 < ModelConfig::kStages) self.down_[k].visit(p + ".down", f);
    }
    for (std::size_t j = 0; j < self.rebuild_.size(); ++j) {
      self.rebuild_[j].visit("rebuild." + std::to_string(j), f);
    }
    for (int k = 0; k + 1 < ModelConfig::kStages; ++k) {
      const std::string p = "decoder." + std::to_string(k);
      self.up_[k].visit(p + ".up", f);
      self.decoder_[k].visit(p + ".block", f);
    }
    self.head_.visit("head", f);
  }

  void check_input(const Tensor<T>& image) const;

  ModelConfig cfg_;
  Conv2d<T> stem_;
  std::vector<MiningBlock<T>> mining_;
  std::vector<Eam<T>> eam_;
  std::vector<Downsample<T>> down_;
  std::vector<MiningBlock<T>> rebuild_;
  std::vector<Upsample<T>> up_;
  std::vector<SeResBlock<T>> decoder_;
  Conv2d<T> head_;
};

// Reflect-pads to the next multiple of ModelConfig::kAlignment, runs the
// model, and crops back to the input size.
template <typename T>
Tensor<T> forward_padded(const Model<T>& model, const Tensor<T>& image);

// Mirror padding on the bottom and right edges; repeats the mirror when the
// pad exceeds the image.
template <typename T>
Tensor<T> reflect_pad(const Tensor<T>& x, int pad_bottom, int pad_right);
template <typename T>
Tensor<T> crop(const Tensor<T>& x, int top, int left, int height, int width);

struct TileOptions {
  int tile = 512;
  int overlap = 64;
  int threads = 1;
};

// Overlapping tiles with linear feathering across the overlaps.
template <typename T>
Tensor<T> forward_tiled(const Model<T>& model, const Tensor<T>& image, const TileOptions& opt);

// Start offsets of tiles covering [0, extent).
std::vector<int> tile_starts(int extent, int tile, int overlap);

// -------------------------------------------------------------- checkpoints

inline constexpr int kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path);
template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path);

struct DesnowReport {
  int width = 0;
  int height = 0;
  int tiles = 1;
  double seconds = 0.0;
};

// Reads a PNG, restores it, clamps to [0, 1], and writes a PNG.
DesnowReport desnow_image(const Model<float>& model, const std::filesystem::path& in,
                          const std::filesystem::path& out, std::optional<TileOptions> tiling);

}  // namespace epn
