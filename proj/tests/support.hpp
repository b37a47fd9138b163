// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

// Reference loops and finite-difference helpers shared by the unit and
// acceptance suites. Nothing here calls the code under test's vectorized paths.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "epn/layers.hpp"
#include "epn/tensor.hpp"

namespace epn::testing {

template <typename T = double>
Tensor<T> random_tensor(int c, int h, int w, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor<T> t(c, h, w);
  for (auto& v : t.values()) v = static_cast<T>(d(rng));
  return t;
}

inline double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Direct zero-padded convolution, one output element at a time.
inline Tensor<double> naive_conv(const Tensor<double>& x, const Param<double>& weight,
                                 const Param<double>& bias, int cout, int k, int stride, int groups) {
  const int cin = x.channels();
  const int pad = k / 2;
  const int ho = (x.height() + 2 * pad - k) / stride + 1;
  const int wo = (x.width() + 2 * pad - k) / stride + 1;
  const int cin_g = cin / groups;
  const int cout_g = cout / groups;
  Tensor<double> y(cout, ho, wo);
  for (int o = 0; o < cout; ++o) {
    const int g = o / cout_g;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        double acc = bias.value[o];
        for (int ci = 0; ci < cin_g; ++ci) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy * stride - pad + ky;
              const int ix = ox * stride - pad + kx;
              if (iy < 0 || ix < 0 || iy >= x.height() || ix >= x.width()) continue;
              acc += weight.value[((o * cin_g + ci) * k + ky) * k + kx] * x.at(g * cin_g + ci, iy, ix);
            }
          }
        }
        y.at(o, oy, ox) = acc;
      }
    }
  }
  return y;
}

struct NamedParam {
  std::string name;
  Param<double>* param;
};

struct GradReport {
  std::string name;
  double rel_error = 0.0;
  std::size_t checked = 0;
};

// Norm-wise relative error between two gradient vectors.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-300});
  return std::sqrt(diff) / scale;
}

// Central-difference check of L = <w, forward()> against backward(w).
//   forward: evaluates the module on the current inputs and parameters
//   backward: given dL/dout, zeroes nothing, accumulates parameter grads and
//             returns dL/d(inputs[0])
// At most `max_per_tensor` entries of each tensor are probed (evenly spaced).
// One report per tensor, then "all" over every probed entry.
struct GradCheck {
  std::function<Tensor<double>()> forward;
  std::function<Tensor<double>(const Tensor<double>&)> backward;
  std::vector<NamedParam> params;
  Tensor<double>* input = nullptr;
  double eps = 1e-5;
  std::size_t max_per_tensor = 0;  // 0 probes every entry
  std::uint64_t seed = 1;

  std::vector<GradReport> run() const {
    std::mt19937_64 rng(seed);
    const Tensor<double> out = forward();
    const Tensor<double> w = random_tensor(out.channels(), out.height(), out.width(), rng);
    for (const auto& p : params) p.param->zero_grad();
    const Tensor<double> dx = backward(w);

    std::vector<double> all_a, all_num;
    auto probe = [&](const std::string& name, std::span<double> values,
                     std::span<const double> analytic) {
      std::vector<std::size_t> idx;
      const std::size_t n = values.size();
      const std::size_t m = max_per_tensor == 0 ? n : std::min(n, max_per_tensor);
      for (std::size_t j = 0; j < m; ++j) idx.push_back((j * n) / m);
      std::vector<double> a, num;
      for (std::size_t i : idx) {
        const double keep = values[i];
        values[i] = keep + eps;
        const double lp = dot(w, forward());
        values[i] = keep - eps;
        const double lm = dot(w, forward());
        values[i] = keep;
        num.push_back((lp - lm) / (2.0 * eps));
        a.push_back(analytic[i]);
      }
      all_a.insert(all_a.end(), a.begin(), a.end());
      all_num.insert(all_num.end(), num.begin(), num.end());
      return GradReport{name, relative_error(a, num), idx.size()};
    };

    std::vector<GradReport> reports;
    for (const auto& p : params) {
      const AlignedVector<double> analytic = p.param->grad;
      reports.push_back(probe(p.name, p.param->value, analytic));
    }
    if (input) reports.push_back(probe("input", input->values(), dx.values()));
    reports.push_back(GradReport{"all", relative_error(all_a, all_num), all_a.size()});
    return reports;
  }
};

template <typename Module>
std::vector<NamedParam> collect_params(Module& m, const std::string& prefix = "") {
  std::vector<NamedParam> out;
  m.visit(prefix, [&out](const std::string& name, Param<double>& p) { out.push_back({name, &p}); });
  return out;
}

inline double max_rel_error(const std::vector<GradReport>& r) {
  double m = 0.0;
  for (const auto& g : r) m = std::max(m, g.rel_error);
  return m;
}

// Direct 2-D windowed SSIM, one window position at a time.
inline double reference_ssim(const Tensor<double>& a, const Tensor<double>& b) {
  const int n = 11;
  const double sigma = 1.5;
  std::vector<double> g(n * n);
  double gs = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double dy = i - 5, dx = j - 5;
      g[i * n + j] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      gs += g[i * n + j];
    }
  }
  for (double& v : g) v /= gs;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    double sum = 0.0;
    int count = 0;
    for (int y = 0; y + n <= a.height(); ++y) {
      for (int x = 0; x + n <= a.width(); ++x) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < n; ++j) {
            const double w = g[i * n + j];
            const double p = a.at(c, y + i, x + j), q = b.at(c, y + i, x + j);
            mx += w * p;
            my += w * q;
            sxx += w * p * p;
            syy += w * q * q;
            sxy += w * p * q;
          }
        }
        const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
        sum += (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
    }
    total += sum / count;
  }
  return total / a.channels();
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("epn_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace epn::testing
