// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "epn/tensor.hpp"

namespace epn {

struct PairSample {
  Tensor<float> snowy;
  Tensor<float> clean;
  std::string source_id;
};

struct PairEntry {
  std::string id;
  std::filesystem::path snowy;
  std::filesystem::path clean;
};

// Index over a directory of `<id>_snow.png` / `<id>_gt.png` pairs, sorted by id.
class PairIndex {
 public:
  PairIndex() = default;
  PairIndex(std::vector<PairEntry> entries, std::vector<std::filesystem::path> orphans)
      : entries_(std::move(entries)), orphans_(std::move(orphans)) {}

  std::size_t size() const { return entries_.size(); }
  const PairEntry& entry(std::size_t i) const { return entries_.at(i); }
  const std::vector<PairEntry>& entries() const { return entries_; }
  // Files whose partner is missing.
  const std::vector<std::filesystem::path>& orphans() const { return orphans_; }
  std::string validation_report() const;
  // Throws IoError naming every orphan.
  void require_complete() const;

  // Decodes the pair; safe to call concurrently.
  PairSample load(std::size_t i) const;

 private:
  std::vector<PairEntry> entries_;
  std::vector<std::filesystem::path> orphans_;
};

PairIndex load_pairs(const std::filesystem::path& dir);

using SampleRng = std::mt19937_64;

// Identical crop window on both images; reflect-pads images smaller than size.
PairSample random_patch(const PairSample& sample, int size, SampleRng& rng);

// Uniform draw over the eight flip/rotation variants, shared by both images.
PairSample augment(const PairSample& sample, SampleRng& rng);
// The deterministic transform augment() draws from: variant in [0, 8).
PairSample apply_variant(const PairSample& sample, int variant);

struct LoaderOptions {
  int batch_size = 8;
  int patch_size = 256;  // 0 keeps full images
  bool augment = true;
  // Every sample in each batch is drawn independently; with false, batches
  // walk the index in order (one epoch = size / batch_size steps).
  bool random_sampling = true;
  std::uint64_t seed = 0;
  int producers = 1;
  int queue_depth = 4;
};

// Producer/consumer batch source. Batch b is a pure function of (seed, b), so
// consumers see the same sequence for any number of producers.
class BatchLoader {
 public:
  BatchLoader(const PairIndex& index, LoaderOptions options, std::int64_t first_batch,
              std::int64_t end_batch);
  ~BatchLoader();
  BatchLoader(const BatchLoader&) = delete;
  BatchLoader& operator=(const BatchLoader&) = delete;

  // Blocks until batch `next` is ready and returns it; batches arrive in order.
  std::vector<PairSample> next();

  static std::vector<PairSample> make_batch(const PairIndex& index, const LoaderOptions& options,
                                            std::int64_t batch);

 private:
  void produce();

  const PairIndex& index_;
  LoaderOptions options_;
  std::int64_t next_claim_;
  std::int64_t next_deliver_;
  std::int64_t end_;
  bool stop_ = false;
  std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::int64_t, std::vector<PairSample>> ready_;
  std::exception_ptr error_;
  std::vector<std::thread> workers_;
};

}  // namespace epn
