// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

#include "epn/layers.hpp"

#include <Eigen/Core>
#include <cmath>
#include <numbers>

namespace epn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ColVec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Upper bound on im2col buffer elements; large images are processed in row bands.
constexpr std::size_t kIm2colBudget = std::size_t{1} << 22;

// Output columns [lo, hi) whose input column ox * stride - pad + kx lies inside [0, w).
inline void valid_columns(int kx, int stride, int pad, int w, int out_w, int& lo, int& hi) {
  lo = std::max(0, (pad - kx + stride - 1) / stride);
  hi = std::min(out_w, (w - 1 + pad - kx) / stride + 1);
  if (hi < lo) hi = lo;
}

// Fills col (K x n, row-major) for output rows [row0, row1).
template <typename T>
void im2col(const Tensor<T>& x, int k, int stride, int pad, int out_w, int row0, int row1,
            AlignedVector<T>& col) {
  const int cin = x.channels();
  const int h = x.height();
  const int w = x.width();
  const std::size_t n = static_cast<std::size_t>(row1 - row0) * out_w;
  col.resize(static_cast<std::size_t>(cin) * k * k * n);
  for (int c = 0; c < cin; ++c) {
    const T* plane = x.data() + c * x.plane_size();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * n;
        int lo = 0, hi = 0;
        valid_columns(kx, stride, pad, w, out_w, lo, hi);
        for (int oy = row0; oy < row1; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* row = dst + static_cast<std::size_t>(oy - row0) * out_w;
          if (iy < 0 || iy >= h) {
            std::fill(row, row + out_w, T{0});
            continue;
          }
          std::fill(row, row + lo, T{0});
          std::fill(row + hi, row + out_w, T{0});
          const T* src = plane + static_cast<std::size_t>(iy) * w;
          const int shift = kx - pad;
          if (stride == 1) {
            if (hi > lo) std::copy(src + lo + shift, src + hi + shift, row + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) row[ox] = src[ox * stride + shift];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const AlignedVector<T>& col, int k, int stride, int pad, int out_w, int row0,
                int row1, Tensor<T>& dx) {
  const int cin = dx.channels();
  const int h = dx.height();
  const int w = dx.width();
  const std::size_t n = static_cast<std::size_t>(row1 - row0) * out_w;
  for (int c = 0; c < cin; ++c) {
    T* plane = dx.data() + c * dx.plane_size();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = col.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * n;
        int lo = 0, hi = 0;
        valid_columns(kx, stride, pad, w, out_w, lo, hi);
        for (int oy = row0; oy < row1; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const T* row = src + static_cast<std::size_t>(oy - row0) * out_w;
          T* dst = plane + static_cast<std::size_t>(iy) * w;
          const int shift = kx - pad;
          for (int ox = lo; ox < hi; ++ox) dst[ox * stride + shift] += row[ox];
        }
      }
    }
  }
}

int rows_per_band(std::size_t k_elems, int out_w, int out_h) {
  const std::size_t per_row = std::max<std::size_t>(1, k_elems * out_w);
  return static_cast<int>(std::clamp<std::size_t>(kIm2colBudget / per_row, 1, out_h));
}

}  // namespace

template <typename T>
Param<T>::Param(std::vector<int> s) : shape(std::move(s)) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  value.assign(n, T{0});
  grad.assign(n, T{0});
}

template <typename T>
void Param<T>::fill_uniform(T bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-static_cast<double>(bound),
                                              static_cast<double>(bound));
  for (auto& v : value) v = static_cast<T>(dist(rng));
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(ConvSpec spec) : spec_(spec) {
  if (spec.in <= 0 || spec.out <= 0 || spec.kernel <= 0 || spec.stride <= 0) {
    throw ConfigError("conv: non-positive size");
  }
  if (spec.groups != 1 && (spec.groups != spec.in || spec.in != spec.out)) {
    throw ConfigError("conv: only dense or depthwise grouping is supported");
  }
  weight = Param<T>({spec.out, spec.in / spec.groups, spec.kernel, spec.kernel});
  bias = Param<T>({spec.out});
}

template <typename T>
void Conv2d<T>::reset_parameters(Rng& rng) {
  const int fan_in = spec_.in / spec_.groups * spec_.kernel * spec_.kernel;
  const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(fan_in)));
  weight.fill_uniform(bound, rng);
  bias.fill_uniform(bound, rng);
}

template <typename T>
std::int64_t Conv2d<T>::macs(int in_h, int in_w) const {
  return std::int64_t{spec_.out} * (spec_.in / spec_.groups) * spec_.kernel * spec_.kernel *
         out_height(in_h) * out_width(in_w);
}

template <typename T>
void Conv2d<T>::check_input(const Tensor<T>& x) const {
  if (x.channels() != spec_.in) {
    throw DimensionError("conv: expected " + std::to_string(spec_.in) + " input channels, got " +
                         std::to_string(x.channels()));
  }
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) const {
  check_input(x);
  return spec_.groups == 1 ? forward_dense(x) : forward_depthwise(x);
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& x, const Tensor<T>& dy) {
  check_input(x);
  if (dy.channels() != spec_.out || dy.height() != out_height(x.height()) ||
      dy.width() != out_width(x.width())) {
    throw DimensionError("conv backward: gradient shape " + dy.shape_string());
  }
  return spec_.groups == 1 ? backward_dense(x, dy) : backward_depthwise(x, dy);
}

template <typename T>
Tensor<T> Conv2d<T>::forward_dense(const Tensor<T>& x) const {
  const int k = spec_.kernel;
  const int ho = out_height(x.height());
  const int wo = out_width(x.width());
  const int kdim = spec_.in * k * k;
  Tensor<T> y(spec_.out, ho, wo);
  Eigen::Map<const RowMat<T>> wmat(weight.value.data(), spec_.out, kdim);
  Eigen::Map<RowMat<T>> ymat(y.data(), spec_.out, static_cast<Eigen::Index>(ho) * wo);
  if (k == 1 && spec_.stride == 1) {
    Eigen::Map<const RowMat<T>> xmat(x.data(), spec_.in, static_cast<Eigen::Index>(x.plane_size()));
    ymat.noalias() = wmat * xmat;
  } else {
    AlignedVector<T> col;
    const int band = rows_per_band(kdim, wo, ho);
    for (int r0 = 0; r0 < ho; r0 += band) {
      const int r1 = std::min(ho, r0 + band);
      const Eigen::Index n = static_cast<Eigen::Index>(r1 - r0) * wo;
      im2col(x, k, spec_.stride, pad(), wo, r0, r1, col);
      Eigen::Map<const RowMat<T>> cmat(col.data(), kdim, n);
      ymat.middleCols(static_cast<Eigen::Index>(r0) * wo, n).noalias() = wmat * cmat;
    }
  }
  Eigen::Map<const ColVec<T>> b(bias.value.data(), spec_.out);
  ymat.colwise() += b;
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward_dense(const Tensor<T>& x, const Tensor<T>& dy) {
  const int k = spec_.kernel;
  const int ho = dy.height();
  const int wo = dy.width();
  const int kdim = spec_.in * k * k;
  Tensor<T> dx(x.channels(), x.height(), x.width());
  Eigen::Map<const RowMat<T>> wmat(weight.value.data(), spec_.out, kdim);
  Eigen::Map<RowMat<T>> dwmat(weight.grad.data(), spec_.out, kdim);
  Eigen::Map<const RowMat<T>> dymat(dy.data(), spec_.out, static_cast<Eigen::Index>(ho) * wo);
  Eigen::Map<ColVec<T>> db(bias.grad.data(), spec_.out);
  db += dymat.rowwise().sum();
  if (k == 1 && spec_.stride == 1) {
    const auto hw = static_cast<Eigen::Index>(x.plane_size());
    Eigen::Map<const RowMat<T>> xmat(x.data(), spec_.in, hw);
    Eigen::Map<RowMat<T>> dxmat(dx.data(), spec_.in, hw);
    dwmat.noalias() += dymat * xmat.transpose();
    dxmat.noalias() = wmat.transpose() * dymat;
    return dx;
  }
  AlignedVector<T> col;
  AlignedVector<T> dcol;
  const int band = rows_per_band(kdim, wo, ho);
  for (int r0 = 0; r0 < ho; r0 += band) {
    const int r1 = std::min(ho, r0 + band);
    const Eigen::Index n = static_cast<Eigen::Index>(r1 - r0) * wo;
    im2col(x, k, spec_.stride, pad(), wo, r0, r1, col);
    Eigen::Map<const RowMat<T>> cmat(col.data(), kdim, n);
    const auto dyband = dymat.middleCols(static_cast<Eigen::Index>(r0) * wo, n);
    dwmat.noalias() += dyband * cmat.transpose();
    dcol.resize(col.size());
    Eigen::Map<RowMat<T>> dcmat(dcol.data(), kdim, n);
    dcmat.noalias() = wmat.transpose() * dyband;
    col2im_add(dcol, k, spec_.stride, pad(), wo, r0, r1, dx);
  }
  return dx;
}

template <typename T>
Tensor<T> Conv2d<T>::forward_depthwise(const Tensor<T>& x) const {
  const int k = spec_.kernel;
  const int s = spec_.stride;
  const int p = pad();
  const int h = x.height();
  const int w = x.width();
  const int ho = out_height(h);
  const int wo = out_width(w);
  Tensor<T> y(spec_.out, ho, wo);
  for (int c = 0; c < spec_.out; ++c) {
    const T* xp = x.data() + c * x.plane_size();
    T* yp = y.data() + c * y.plane_size();
    std::fill(yp, yp + y.plane_size(), bias.value[c]);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T wv = weight.value[(static_cast<std::size_t>(c) * k + ky) * k + kx];
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s - p + ky;
          if (iy < 0 || iy >= h) continue;
          const T* xr = xp + static_cast<std::size_t>(iy) * w;
          T* yr = yp + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s - p + kx;
            if (ix >= 0 && ix < w) yr[ox] += wv * xr[ix];
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward_depthwise(const Tensor<T>& x, const Tensor<T>& dy) {
  const int k = spec_.kernel;
  const int s = spec_.stride;
  const int p = pad();
  const int h = x.height();
  const int w = x.width();
  const int ho = dy.height();
  const int wo = dy.width();
  Tensor<T> dx(x.channels(), h, w);
  for (int c = 0; c < spec_.out; ++c) {
    const T* xp = x.data() + c * x.plane_size();
    const T* dyp = dy.data() + c * dy.plane_size();
    T* dxp = dx.data() + c * dx.plane_size();
    T bsum{0};
    for (std::size_t i = 0; i < dy.plane_size(); ++i) bsum += dyp[i];
    bias.grad[c] += bsum;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const std::size_t widx = (static_cast<std::size_t>(c) * k + ky) * k + kx;
        const T wv = weight.value[widx];
        T acc{0};
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s - p + ky;
          if (iy < 0 || iy >= h) continue;
          const T* xr = xp + static_cast<std::size_t>(iy) * w;
          T* dxr = dxp + static_cast<std::size_t>(iy) * w;
          const T* dyr = dyp + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s - p + kx;
            if (ix >= 0 && ix < w) {
              acc += dyr[ox] * xr[ix];
              dxr[ix] += wv * dyr[ox];
            }
          }
        }
        weight.grad[widx] += acc;
      }
    }
  }
  return dx;
}

// ----------------------------------------------------------- LayerNorm2d

template <typename T>
LayerNorm2d<T>::LayerNorm2d(int channels) : weight({channels}), bias({channels}) {
  reset_parameters();
}

template <typename T>
void LayerNorm2d<T>::reset_parameters() {
  weight.fill(T{1});
  bias.fill(T{0});
}

namespace {

// Per-pixel mean and reciprocal standard deviation across channels.
template <typename T>
void pixel_moments(const Tensor<T>& x, AlignedVector<T>& mean, AlignedVector<T>& rstd) {
  const std::size_t hw = x.plane_size();
  const int c = x.channels();
  mean.assign(hw, T{0});
  rstd.assign(hw, T{0});
  for (int ch = 0; ch < c; ++ch) {
    const T* p = x.data() + ch * hw;
    for (std::size_t i = 0; i < hw; ++i) mean[i] += p[i];
  }
  for (auto& m : mean) m /= static_cast<T>(c);
  for (int ch = 0; ch < c; ++ch) {
    const T* p = x.data() + ch * hw;
    for (std::size_t i = 0; i < hw; ++i) {
      const T d = p[i] - mean[i];
      rstd[i] += d * d;
    }
  }
  for (auto& r : rstd) {
    r = T{1} / std::sqrt(r / static_cast<T>(c) + static_cast<T>(LayerNorm2d<T>::kEps));
  }
}

}  // namespace

template <typename T>
Tensor<T> LayerNorm2d<T>::forward(const Tensor<T>& x) const {
  if (static_cast<std::size_t>(x.channels()) != weight.numel()) {
    throw DimensionError("layer norm: channel mismatch");
  }
  AlignedVector<T> mean, rstd;
  pixel_moments(x, mean, rstd);
  Tensor<T> y(x.channels(), x.height(), x.width());
  const std::size_t hw = x.plane_size();
  for (int ch = 0; ch < x.channels(); ++ch) {
    const T* p = x.data() + ch * hw;
    T* q = y.data() + ch * hw;
    const T g = weight.value[ch];
    const T b = bias.value[ch];
    for (std::size_t i = 0; i < hw; ++i) q[i] = (p[i] - mean[i]) * rstd[i] * g + b;
  }
  return y;
}

template <typename T>
Tensor<T> LayerNorm2d<T>::backward(const Tensor<T>& x, const Tensor<T>& dy) {
  require_same_shape(x, dy, "layer norm backward");
  AlignedVector<T> mean, rstd;
  pixel_moments(x, mean, rstd);
  const std::size_t hw = x.plane_size();
  const int c = x.channels();
  AlignedVector<T> sum_g(hw, T{0});
  AlignedVector<T> sum_gx(hw, T{0});
  for (int ch = 0; ch < c; ++ch) {
    const T* p = x.data() + ch * hw;
    const T* d = dy.data() + ch * hw;
    const T g = weight.value[ch];
    T dg{0}, db{0};
    for (std::size_t i = 0; i < hw; ++i) {
      const T xhat = (p[i] - mean[i]) * rstd[i];
      dg += d[i] * xhat;
      db += d[i];
      sum_g[i] += d[i] * g;
      sum_gx[i] += d[i] * g * xhat;
    }
    weight.grad[ch] += dg;
    bias.grad[ch] += db;
  }
  Tensor<T> dx(c, x.height(), x.width());
  const T inv_c = T{1} / static_cast<T>(c);
  for (int ch = 0; ch < c; ++ch) {
    const T* p = x.data() + ch * hw;
    const T* d = dy.data() + ch * hw;
    T* q = dx.data() + ch * hw;
    const T g = weight.value[ch];
    for (std::size_t i = 0; i < hw; ++i) {
      const T xhat = (p[i] - mean[i]) * rstd[i];
      q[i] = rstd[i] * (d[i] * g - sum_g[i] * inv_c - xhat * sum_gx[i] * inv_c);
    }
  }
  return dx;
}

// ----------------------------------------------------------- activations

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kGelu: return "gelu";
    case Activation::kRelu: return "relu";
    case Activation::kElu: return "elu";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kIdentity: return "identity";
  }
  return "?";
}

namespace {

template <typename T>
T apply(T v, Activation a) {
  switch (a) {
    case Activation::kGelu:
      return T{0.5} * v * (T{1} + std::erf(v * static_cast<T>(std::numbers::sqrt2 / 2)));
    case Activation::kRelu: return v > T{0} ? v : T{0};
    case Activation::kElu: return v > T{0} ? v : std::expm1(v);
    case Activation::kSigmoid: return T{1} / (T{1} + std::exp(-v));
    case Activation::kIdentity: return v;
  }
  return v;
}

template <typename T>
T derivative(T v, Activation a) {
  switch (a) {
    case Activation::kGelu: {
      const T cdf = T{0.5} * (T{1} + std::erf(v * static_cast<T>(std::numbers::sqrt2 / 2)));
      const T pdf = std::exp(T{-0.5} * v * v) * static_cast<T>(0.5 * std::numbers::inv_sqrtpi *
                                                                 std::numbers::sqrt2);
      return cdf + v * pdf;
    }
    case Activation::kRelu: return v > T{0} ? T{1} : T{0};
    case Activation::kElu: return v > T{0} ? T{1} : std::exp(v);
    case Activation::kSigmoid: {
      const T s = T{1} / (T{1} + std::exp(-v));
      return s * (T{1} - s);
    }
    case Activation::kIdentity: return T{1};
  }
  return T{1};
}

}  // namespace

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation a) {
  Tensor<T> y = x;
  for (auto& v : y.values()) v = apply(v, a);
  return y;
}

template <typename T>
Tensor<T> activate_backward(const Tensor<T>& x, const Tensor<T>& dy, Activation a) {
  require_same_shape(x, dy, "activation backward");
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= derivative(x[i], a);
  return dx;
}

// -------------------------------------------------------- channel shuffle

template <typename T>
Tensor<T> channel_shuffle(const Tensor<T>& x, int groups) {
  const int c = x.channels();
  if (groups <= 0 || c % groups != 0) {
    throw ConfigError("channel shuffle: " + std::to_string(c) + " channels not divisible by " +
                      std::to_string(groups) + " groups");
  }
  const int per_group = c / groups;
  Tensor<T> y(c, x.height(), x.width());
  const std::size_t hw = x.plane_size();
  // output channel j * groups + i takes input channel i * per_group + j
  for (int i = 0; i < groups; ++i) {
    for (int j = 0; j < per_group; ++j) {
      std::copy_n(x.data() + (i * per_group + j) * hw, hw, y.data() + (j * groups + i) * hw);
    }
  }
  return y;
}

template <typename T>
Tensor<T> channel_shuffle_backward(const Tensor<T>& dy, int groups) {
  return channel_shuffle(dy, dy.channels() / groups);
}

// ------------------------------------------------------ resampling

template <typename T>
Tensor<T> avg_pool2(const Tensor<T>& x) {
  if (x.height() % 2 != 0 || x.width() % 2 != 0) {
    throw DimensionError("avg_pool2: odd spatial size " + x.shape_string());
  }
  Tensor<T> y(x.channels(), x.height() / 2, x.width() / 2);
  for (int c = 0; c < x.channels(); ++c) {
    for (int oy = 0; oy < y.height(); ++oy) {
      for (int ox = 0; ox < y.width(); ++ox) {
        y.at(c, oy, ox) = T{0.25} * (x.at(c, 2 * oy, 2 * ox) + x.at(c, 2 * oy, 2 * ox + 1) +
                                     x.at(c, 2 * oy + 1, 2 * ox) + x.at(c, 2 * oy + 1, 2 * ox + 1));
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& x) {
  Tensor<T> y(x.channels(), x.height() * 2, x.width() * 2);
  for (int c = 0; c < x.channels(); ++c) {
    for (int oy = 0; oy < y.height(); ++oy) {
      const T* src = x.data() + c * x.plane_size() + static_cast<std::size_t>(oy / 2) * x.width();
      T* dst = y.data() + c * y.plane_size() + static_cast<std::size_t>(oy) * y.width();
      for (int ox = 0; ox < y.width(); ++ox) dst[ox] = src[ox / 2];
    }
  }
  return y;
}

template <typename T>
Tensor<T> upsample_nearest2_backward(const Tensor<T>& dy) {
  if (dy.height() % 2 != 0 || dy.width() % 2 != 0) {
    throw DimensionError("upsample backward: odd gradient size");
  }
  Tensor<T> dx(dy.channels(), dy.height() / 2, dy.width() / 2);
  for (int c = 0; c < dy.channels(); ++c) {
    for (int oy = 0; oy < dy.height(); ++oy) {
      for (int ox = 0; ox < dy.width(); ++ox) dx.at(c, oy / 2, ox / 2) += dy.at(c, oy, ox);
    }
  }
  return dx;
}

// ------------------------------------------------------- squeeze-excite

template <typename T>
SqueezeExcite<T>::SqueezeExcite(int channels, int reduction) {
  if (reduction <= 0 || channels % reduction != 0) {
    throw ConfigError("squeeze-excite: reduction " + std::to_string(reduction) +
                      " does not divide " + std::to_string(channels));
  }
  reduce = Conv2d<T>({channels, channels / reduction, 1, 1, 1});
  expand = Conv2d<T>({channels / reduction, channels, 1, 1, 1});
}

template <typename T>
void SqueezeExcite<T>::reset_parameters(Rng& rng) {
  reduce.reset_parameters(rng);
  expand.reset_parameters(rng);
}

template <typename T>
std::int64_t SqueezeExcite<T>::macs() const {
  return reduce.macs(1, 1) + expand.macs(1, 1);
}

template <typename T>
Tensor<T> SqueezeExcite<T>::forward(const Tensor<T>& x) const {
  Cache cache;
  return forward(x, cache);
}

template <typename T>
Tensor<T> SqueezeExcite<T>::forward(const Tensor<T>& x, Cache& cache) const {
  const int c = x.channels();
  const std::size_t hw = x.plane_size();
  cache.pooled = Tensor<T>(c, 1, 1);
  for (int ch = 0; ch < c; ++ch) {
    T s{0};
    for (T v : x.plane(ch)) s += v;
    cache.pooled[ch] = s / static_cast<T>(hw);
  }
  cache.hidden_pre = reduce.forward(cache.pooled);
  cache.hidden = activate(cache.hidden_pre, Activation::kRelu);
  cache.gate = activate(expand.forward(cache.hidden), Activation::kSigmoid);
  Tensor<T> y = x;
  for (int ch = 0; ch < c; ++ch) {
    for (T& v : y.plane(ch)) v *= cache.gate[ch];
  }
  return y;
}

template <typename T>
Tensor<T> SqueezeExcite<T>::backward(const Tensor<T>& x, const Cache& cache, const Tensor<T>& dy) {
  require_same_shape(x, dy, "squeeze-excite backward");
  const int c = x.channels();
  const std::size_t hw = x.plane_size();
  Tensor<T> dz(c, 1, 1);
  for (int ch = 0; ch < c; ++ch) {
    T s{0};
    const auto xp = x.plane(ch);
    const auto dp = dy.plane(ch);
    for (std::size_t i = 0; i < hw; ++i) s += dp[i] * xp[i];
    const T g = cache.gate[ch];
    dz[ch] = s * g * (T{1} - g);
  }
  const Tensor<T> dhidden = expand.backward(cache.hidden, dz);
  const Tensor<T> dpre = activate_backward(cache.hidden_pre, dhidden, Activation::kRelu);
  const Tensor<T> dpooled = reduce.backward(cache.pooled, dpre);
  Tensor<T> dx = dy;
  for (int ch = 0; ch < c; ++ch) {
    const T g = cache.gate[ch];
    const T spread = dpooled[ch] / static_cast<T>(hw);
    for (T& v : dx.plane(ch)) v = v * g + spread;
  }
  return dx;
}

#define EPN_INSTANTIATE(T)                                                                 \
  template struct Param<T>;                                                                \
  template class Conv2d<T>;                                                                \
  template class LayerNorm2d<T>;                                                           \
  template class SqueezeExcite<T>;                                                         \
  template Tensor<T> activate<T>(const Tensor<T>&, Activation);                            \
  template Tensor<T> activate_backward<T>(const Tensor<T>&, const Tensor<T>&, Activation); \
  template Tensor<T> channel_shuffle<T>(const Tensor<T>&, int);                            \
  template Tensor<T> channel_shuffle_backward<T>(const Tensor<T>&, int);                   \
  template Tensor<T> avg_pool2<T>(const Tensor<T>&);                                       \
  template Tensor<T> upsample_nearest2<T>(const Tensor<T>&);                               \
  template Tensor<T> upsample_nearest2_backward<T>(const Tensor<T>&);

EPN_INSTANTIATE(float)
EPN_INSTANTIATE(double)

}  // namespace epn
