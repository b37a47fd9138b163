// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include "epn/tensor.hpp"

namespace epn {

// 8-bit RGB PNG codec. Reads any PNG libpng understands and converts to RGB
// in [0, 1]; writes clamp and round to the nearest 8-bit level.
template <typename T>
Tensor<T> read_png(const std::filesystem::path& path);
template <typename T>
void write_png(const Tensor<T>& image, const std::filesystem::path& path);

// Value after an 8-bit encode/decode round-trip.
template <typename T>
T quantize8(T v) {
  const T c = std::clamp(v, T{0}, T{1});
  return static_cast<T>(static_cast<int>(c * T{255} + T{0.5})) / T{255};
}

template <typename T>
Tensor<T> quantize8(Tensor<T> image) {
  for (auto& v : image.values()) v = quantize8(v);
  return image;
}

}  // namespace epn
