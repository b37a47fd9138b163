// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <limits>

#include "epn/tensor.hpp"

namespace epn {

enum class Reduction {
  kPerPixelMean,  // mean over elements of sqrt(d^2 + eps^2)
  kPerImageNorm,  // sqrt(||d||^2 + eps^2) per image, averaged over the batch
};

struct LossConfig {
  double epsilon = 1e-3;
  Reduction reduction = Reduction::kPerPixelMean;
};

// Charbonnier loss of one image. When grad is non-null it receives d(loss)/d(out).
template <typename T>
double charbonnier(const Tensor<T>& out, const Tensor<T>& gt, const LossConfig& cfg = {},
                   Tensor<T>* grad = nullptr);

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

// 10 log10(peak^2 / MSE); kInfinitePsnr when the images are identical.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;
};

// Mean SSIM over all valid Gaussian windows, averaged over channels.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, const SsimOptions& opt = {});

}  // namespace epn
