// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "epn/errors.hpp"

namespace epn {

// Cache-line aligned storage. Vectorized reductions peel a scalar head up to
// the first aligned element, so a fixed alignment keeps results bit-identical
// across allocations.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

// Planar (channel-major) raster: element (c, y, x) lives at (c * h + y) * w + x.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(int channels, int height, int width, T fill = T{0})
      : c_(channels), h_(height), w_(width),
        data_(static_cast<std::size_t>(channels) * height * width, fill) {
    if (channels < 0 || height < 0 || width < 0) {
      throw DimensionError("negative tensor dimension");
    }
  }

  int channels() const { return c_; }
  int height() const { return h_; }
  int width() const { return w_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(h_) * w_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& at(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * h_ + y) * w_ + x]; }
  const T& at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * h_ + y) * w_ + x];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::span<T> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const T> plane(int c) const {
    return {data_.data() + c * plane_size(), plane_size()};
  }
  AlignedVector<T>& values() { return data_; }
  const AlignedVector<T>& values() const { return data_; }

  bool same_shape(const Tensor& o) const { return c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }
  bool same_spatial(const Tensor& o) const { return h_ == o.h_ && w_ == o.w_; }
  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(c_, h_, w_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  std::string shape_string() const {
    return std::to_string(c_) + "x" + std::to_string(h_) + "x" + std::to_string(w_);
  }

  bool operator==(const Tensor& o) const = default;

 private:
  int c_ = 0;
  int h_ = 0;
  int w_ = 0;
  AlignedVector<T> data_;
};

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

// Elementwise helpers used across the network and the pipeline.
template <typename T>
Tensor<T>& add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

template <typename T>
Tensor<T> add(Tensor<T> a, const Tensor<T>& b) {
  add_inplace(a, b);
  return a;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_spatial(b)) throw DimensionError("concat: spatial mismatch");
  Tensor<T> out(a.channels() + b.channels(), a.height(), a.width());
  std::copy(a.values().begin(), a.values().end(), out.data());
  std::copy(b.values().begin(), b.values().end(), out.data() + a.size());
  return out;
}

// Inverse of concat_channels: copies channels [first, first + count).
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& a, int first, int count) {
  Tensor<T> out(count, a.height(), a.width());
  std::copy_n(a.data() + first * a.plane_size(), count * a.plane_size(), out.data());
  return out;
}

template <typename T>
Tensor<T> clamp01(Tensor<T> a) {
  for (auto& v : a.values()) v = std::clamp(v, T{0}, T{1});
  return a;
}

// Rotates every plane by 90 degrees counter-clockwise `turns` times.
template <typename T>
Tensor<T> rotate90(const Tensor<T>& x, int turns) {
  turns = ((turns % 4) + 4) % 4;
  if (turns == 0) return x;
  Tensor<T> cur = x;
  for (int t = 0; t < turns; ++t) {
    Tensor<T> next(cur.channels(), cur.width(), cur.height());
    for (int c = 0; c < cur.channels(); ++c) {
      for (int y = 0; y < next.height(); ++y) {
        for (int xx = 0; xx < next.width(); ++xx) {
          next.at(c, y, xx) = cur.at(c, xx, cur.width() - 1 - y);
        }
      }
    }
    cur = std::move(next);
  }
  return cur;
}

template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (int c = 0; c < x.channels(); ++c) {
    for (int r = 0; r < x.height(); ++r) {
      T* row = &y.at(c, r, 0);
      std::reverse(row, row + x.width());
    }
  }
  return y;
}

// One of the eight dihedral transforms: optional horizontal flip, then rotation.
template <typename T>
Tensor<T> dihedral(const Tensor<T>& x, int turns, bool flip) {
  return rotate90(flip ? flip_horizontal(x) : x, turns);
}

}  // namespace epn
