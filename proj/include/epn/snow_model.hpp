// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

// Snowy-scene imaging model:
//   K = J (1 - Z R) + C Z R
//   I = K T + A (1 - T)
// with J the clean scene, Z the snow translucency, R the binary snow location
// mask, C the snow colour, A the atmospheric light and T the transmission.

#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "epn/config.hpp"
#include "epn/tensor.hpp"

namespace epn {

using ImageTensor = Tensor<double>;

struct SnowParams {
  Tensor<double> z_mask;  // 1 channel, [0, 1]
  Tensor<double> r_mask;  // 1 channel, {0, 1}
  Tensor<double> c_map;   // 3 channels, [0, 1]
  Tensor<double> a_map;   // 3 channels, [0, 1]
  Tensor<double> t_map;   // 1 channel, (0, 1]

  int height() const { return t_map.height(); }
  int width() const { return t_map.width(); }
  // Throws DimensionError / DomainError if the maps break their invariants.
  void validate(bool allow_zero_transmission = false) const;
  bool operator==(const SnowParams&) const = default;
};

struct SynthConfig {
  std::pair<int, int> streak_count_range{20, 60};
  std::pair<int, int> streak_length_range{6, 24};
  std::pair<int, int> particle_count_range{20, 80};
  std::pair<int, int> particle_size_range{1, 3};  // radius in pixels
  std::pair<double, double> haze_strength_range{0.05, 0.3};
  std::pair<double, double> atmospheric_light_range{0.7, 0.95};
  unsigned long long rng_seed = 7;

  void validate() const;
};

KeySet bind_keys(SynthConfig& cfg);

struct SynthOptions {
  // Permits T == 0 (the pure-airlight limit); only meaningful for oracle checks.
  bool allow_zero_transmission = false;
};

// Unclamped evaluation of the imaging model; callers clamp to [0, 1] when storing images.
ImageTensor synthesize_snow(const ImageTensor& clean, const SnowParams& params,
                            SynthOptions options = {});

SnowParams generate_snow_params(const SynthConfig& cfg, int height, int width);

// Smooth procedural scene (gradients, discs, bars) used as a stand-in clean image.
ImageTensor procedural_scene(std::uint64_t seed, int height, int width);

// Same spatial transform applied to every map (used to check pixelwise equivariance).
SnowParams transform_params(const SnowParams& p, int rotations, bool flip);

// Writes <id>_snow.png, <id>_gt.png, <id>_params.txt and <id>_maps.bin for each
// clean image, where id is a zero-padded index. Returns the number written.
int make_pair_dataset(const SynthConfig& cfg, const std::vector<ImageTensor>& cleans,
                      const std::filesystem::path& out_dir);

// Reads back the maps referenced by a params manifest written by make_pair_dataset.
SnowParams load_snow_params(const std::filesystem::path& manifest);

std::string pair_id(int index);

}  // namespace epn
