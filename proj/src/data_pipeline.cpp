// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

#include "epn/data_pipeline.hpp"

#include <algorithm>

#include "epn/image_io.hpp"

namespace epn {

namespace {

constexpr std::string_view kSnowSuffix = "_snow.png";
constexpr std::string_view kCleanSuffix = "_gt.png";

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <typename T>
Tensor<T> pad_to(const Tensor<T>& x, int size) {
  const int ph = std::max(0, size - x.height());
  const int pw = std::max(0, size - x.width());
  if (ph == 0 && pw == 0) return x;
  // Mirror without repeating the edge pixel; repeats when the pad exceeds the image.
  Tensor<T> y(x.channels(), x.height() + ph, x.width() + pw);
  auto mirror = [](int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    return i < n ? i : period - i;
  };
  for (int c = 0; c < x.channels(); ++c) {
    for (int r = 0; r < y.height(); ++r) {
      for (int q = 0; q < y.width(); ++q) y.at(c, r, q) = x.at(c, mirror(r, x.height()), mirror(q, x.width()));
    }
  }
  return y;
}

template <typename T>
Tensor<T> crop_window(const Tensor<T>& x, int top, int left, int size) {
  Tensor<T> y(x.channels(), size, size);
  for (int c = 0; c < x.channels(); ++c) {
    for (int r = 0; r < size; ++r) std::copy_n(&x.at(c, top + r, left), size, &y.at(c, r, 0));
  }
  return y;
}

}  // namespace

// -------------------------------------------------------------- PairIndex

PairIndex load_pairs(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError(dir.string(), "not a directory");
  std::map<std::string, PairEntry> by_id;
  for (const auto& item : std::filesystem::directory_iterator(dir)) {
    if (!item.is_regular_file()) continue;
    const std::string name = item.path().filename().string();
    if (ends_with(name, kSnowSuffix)) {
      auto& e = by_id[name.substr(0, name.size() - kSnowSuffix.size())];
      e.snowy = item.path();
    } else if (ends_with(name, kCleanSuffix)) {
      auto& e = by_id[name.substr(0, name.size() - kCleanSuffix.size())];
      e.clean = item.path();
    }
  }
  std::vector<PairEntry> entries;
  std::vector<std::filesystem::path> orphans;
  for (auto& [id, e] : by_id) {
    e.id = id;
    if (e.snowy.empty()) {
      orphans.push_back(e.clean);
    } else if (e.clean.empty()) {
      orphans.push_back(e.snowy);
    } else {
      entries.push_back(e);
    }
  }
  return PairIndex(std::move(entries), std::move(orphans));
}

std::string PairIndex::validation_report() const {
  std::string r = std::to_string(entries_.size()) + " pairs, " + std::to_string(orphans_.size()) +
                  " orphaned files";
  for (const auto& o : orphans_) r += "\n  orphan: " + o.string();
  return r;
}

void PairIndex::require_complete() const {
  if (!orphans_.empty()) {
    throw IoError(orphans_.front().parent_path().string(), validation_report());
  }
}

PairSample PairIndex::load(std::size_t i) const {
  const PairEntry& e = entry(i);
  PairSample s{read_png<float>(e.snowy), read_png<float>(e.clean), e.id};
  if (!s.snowy.same_shape(s.clean)) {
    throw DimensionError("pair '" + e.id + "': snowy " + s.snowy.shape_string() + " vs clean " +
                         s.clean.shape_string());
  }
  return s;
}

// ------------------------------------------------------ patches/augmentation

PairSample random_patch(const PairSample& sample, int size, SampleRng& rng) {
  require_same_shape(sample.snowy, sample.clean, "random_patch");
  if (size <= 0) throw DimensionError("random_patch: size must be positive");
  const Tensor<float> snowy = pad_to(sample.snowy, size);
  const Tensor<float> clean = pad_to(sample.clean, size);
  const int top = std::uniform_int_distribution<int>(0, snowy.height() - size)(rng);
  const int left = std::uniform_int_distribution<int>(0, snowy.width() - size)(rng);
  return {crop_window(snowy, top, left, size), crop_window(clean, top, left, size), sample.source_id};
}

PairSample apply_variant(const PairSample& sample, int variant) {
  const int turns = variant % 4;
  const bool flip = variant >= 4;
  return {dihedral(sample.snowy, turns, flip), dihedral(sample.clean, turns, flip), sample.source_id};
}

PairSample augment(const PairSample& sample, SampleRng& rng) {
  return apply_variant(sample, std::uniform_int_distribution<int>(0, 7)(rng));
}

// ------------------------------------------------------------ BatchLoader

std::vector<PairSample> BatchLoader::make_batch(const PairIndex& index, const LoaderOptions& opt,
                                                std::int64_t batch) {
  if (index.size() == 0) throw IoError("<pairs>", "empty pair index");
  SampleRng rng(mix(opt.seed ^ mix(static_cast<std::uint64_t>(batch))));
  std::vector<PairSample> out;
  out.reserve(opt.batch_size);
  for (int b = 0; b < opt.batch_size; ++b) {
    std::size_t i;
    if (opt.random_sampling) {
      i = std::uniform_int_distribution<std::size_t>(0, index.size() - 1)(rng);
    } else {
      i = static_cast<std::size_t>((batch * opt.batch_size + b) % static_cast<std::int64_t>(index.size()));
    }
    PairSample s = index.load(i);
    if (opt.patch_size > 0) s = random_patch(s, opt.patch_size, rng);
    if (opt.augment) s = augment(s, rng);
    out.push_back(std::move(s));
  }
  return out;
}

BatchLoader::BatchLoader(const PairIndex& index, LoaderOptions options, std::int64_t first_batch,
                         std::int64_t end_batch)
    : index_(index),
      options_(options),
      next_claim_(first_batch),
      next_deliver_(first_batch),
      end_(end_batch) {
  const int n = std::max(1, options_.producers);
  for (int i = 0; i < n; ++i) workers_.emplace_back([this] { produce(); });
}

BatchLoader::~BatchLoader() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  for (auto& t : workers_) t.join();
}

void BatchLoader::produce() {
  for (;;) {
    std::int64_t b;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] {
        return stop_ || next_claim_ >= end_ ||
               next_claim_ < next_deliver_ + std::max(1, options_.queue_depth);
      });
      if (stop_ || next_claim_ >= end_) return;
      b = next_claim_++;
    }
    std::vector<PairSample> batch;
    std::exception_ptr err;
    try {
      batch = make_batch(index_, options_, b);
    } catch (...) {
      err = std::current_exception();
    }
    {
      std::lock_guard lock(mu_);
      if (err && !error_) error_ = err;
      ready_[b] = std::move(batch);
    }
    cv_.notify_all();
  }
}

std::vector<PairSample> BatchLoader::next() {
  std::unique_lock lock(mu_);
  if (next_deliver_ >= end_) throw std::out_of_range("batch loader exhausted");
  cv_.wait(lock, [&] { return error_ || ready_.count(next_deliver_) > 0; });
  if (error_) std::rethrow_exception(error_);
  auto node = ready_.extract(next_deliver_++);
  lock.unlock();
  cv_.notify_all();
  return std::move(node.mapped());
}

}  // namespace epn
