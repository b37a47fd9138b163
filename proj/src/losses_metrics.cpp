// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

#include "epn/losses_metrics.hpp"

#include <cmath>
#include <vector>

namespace epn {

template <typename T>
double charbonnier(const Tensor<T>& out, const Tensor<T>& gt, const LossConfig& cfg, Tensor<T>* grad) {
  require_same_shape(out, gt, "charbonnier");
  if (!(cfg.epsilon > 0.0)) throw DomainError("charbonnier: epsilon must be positive");
  const double eps2 = cfg.epsilon * cfg.epsilon;
  const std::size_t n = out.size();
  if (n == 0) throw DimensionError("charbonnier: empty tensors");
  if (grad != nullptr) *grad = Tensor<T>(out.channels(), out.height(), out.width());

  if (cfg.reduction == Reduction::kPerPixelMean) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = static_cast<double>(out[i]) - static_cast<double>(gt[i]);
      const double r = std::sqrt(d * d + eps2);
      sum += r;
      if (grad != nullptr) (*grad)[i] = static_cast<T>(d / (r * static_cast<double>(n)));
    }
    return sum / static_cast<double>(n);
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(out[i]) - static_cast<double>(gt[i]);
    sq += d * d;
  }
  const double r = std::sqrt(sq + eps2);
  if (grad != nullptr) {
    for (std::size_t i = 0; i < n; ++i) {
      (*grad)[i] = static_cast<T>((static_cast<double>(out[i]) - static_cast<double>(gt[i])) / r);
    }
  }
  return r;
}

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak) {
  require_same_shape(a, b, "psnr");
  if (a.empty()) throw DimensionError("psnr: empty tensors");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(a.size());
  if (mse == 0.0) return kInfinitePsnr;
  return 10.0 * std::log10(peak * peak / mse);
}

namespace {

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(size);
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double x = i - (size - 1) / 2.0;
    k[i] = std::exp(-x * x / (2 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Valid-mode separable filtering of one plane.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w,
                                 const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int wo = w - n + 1;
  const int ho = h - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * wo, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < wo; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * wo + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ho) * wo, 0.0);
  for (int y = 0; y < ho; ++y) {
    for (int x = 0; x < wo; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[i] * tmp[static_cast<std::size_t>(y + i) * wo + x];
      out[static_cast<std::size_t>(y) * wo + x] = s;
    }
  }
  return out;
}

}  // namespace

template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, const SsimOptions& opt) {
  require_same_shape(a, b, "ssim");
  if (a.height() < opt.window || a.width() < opt.window) {
    throw DimensionError("ssim: image " + a.shape_string() + " smaller than the " +
                         std::to_string(opt.window) + "-pixel window");
  }
  const auto k = gaussian_kernel(opt.window, opt.sigma);
  const double c1 = (opt.k1 * opt.peak) * (opt.k1 * opt.peak);
  const double c2 = (opt.k2 * opt.peak) * (opt.k2 * opt.peak);
  const int h = a.height();
  const int w = a.width();
  const std::size_t hw = a.plane_size();
  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    std::vector<double> x(hw), y(hw), xx(hw), yy(hw), xy(hw);
    for (std::size_t i = 0; i < hw; ++i) {
      x[i] = static_cast<double>(a.plane(c)[i]);
      y[i] = static_cast<double>(b.plane(c)[i]);
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, h, w, k);
    const auto my = filter_valid(y, h, w, k);
    const auto sxx = filter_valid(xx, h, w, k);
    const auto syy = filter_valid(yy, h, w, k);
    const auto sxy = filter_valid(xy, h, w, k);
    double sum = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      sum += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += sum / static_cast<double>(mx.size());
  }
  return total / a.channels();
}

template double charbonnier<float>(const Tensor<float>&, const Tensor<float>&, const LossConfig&, Tensor<float>*);
template double charbonnier<double>(const Tensor<double>&, const Tensor<double>&, const LossConfig&, Tensor<double>*);
template double psnr<float>(const Tensor<float>&, const Tensor<float>&, double);
template double psnr<double>(const Tensor<double>&, const Tensor<double>&, double);
template double ssim<float>(const Tensor<float>&, const Tensor<float>&, const SsimOptions&);
template double ssim<double>(const Tensor<double>&, const Tensor<double>&, const SsimOptions&);

}  // namespace epn
