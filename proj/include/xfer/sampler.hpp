#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "xfer/dataset.hpp"
#include "xfer/errors.hpp"
#include "xfer/rng.hpp"

namespace xfer {

// Hybrid class-rebalance parameters: per-batch sampling keeps classes at the
// ratio r:1 (majority:minority) while the loss weights the minority class by
// r, so each class contributes the same total loss weight per batch. r is
// restricted to positive integers to make batch composition exact.
struct RebalanceConfig {
  int r = 1;
  bool enabled = true;
  int minority_label = 1;

  void validate() const {
    if (r < 1) throw std::invalid_argument("rebalance ratio r must be a positive integer");
    if (minority_label != 0 && minority_label != 1) {
      throw std::invalid_argument("minority_label must be 0 or 1");
    }
  }

  double weight_for(int label) const {
    if (!enabled) return 1.0;
    return label == minority_label ? static_cast<double>(r) : 1.0;
  }
};

// Per class, keeps round(count * (1 - reduction_fraction)) items. Selection
// keys each item by hash(seed, class, source_index) and keeps the
// lowest-priority prefix, so the kept set at a stronger reduction is a subset
// of the kept set at a weaker one under the same seed. Output preserves input
// order.
inline Dataset reduce_training_set(const Dataset& train, double reduction_fraction,
                                   std::uint64_t seed) {
  if (!(reduction_fraction >= 0.0 && reduction_fraction < 1.0)) {
    throw std::invalid_argument("reduction_fraction must lie in [0,1)");
  }
  if (reduction_fraction == 0.0) return train;

  const int num_classes = train.spec.num_classes;
  struct Keyed {
    std::uint64_t priority;
    std::size_t pos;
  };
  std::vector<std::vector<Keyed>> per_class(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < train.items.size(); ++i) {
    const auto& it = train.items[i];
    per_class[static_cast<std::size_t>(it.label)].push_back(
        {derive_key(seed, rngtag::kReduce, static_cast<std::uint64_t>(it.label),
                    static_cast<std::uint64_t>(it.source_index)),
         i});
  }

  std::vector<char> keep(train.items.size(), 0);
  for (int c = 0; c < num_classes; ++c) {
    auto& entries = per_class[static_cast<std::size_t>(c)];
    if (entries.empty()) continue;
    auto kept = static_cast<std::size_t>(std::llround(
        static_cast<double>(entries.size()) * (1.0 - reduction_fraction)));
    if (kept == 0) {
      throw DegenerateClassError("reduction " + std::to_string(reduction_fraction) +
                                 " leaves class " + std::to_string(c) + " empty");
    }
    std::sort(entries.begin(), entries.end(), [](const Keyed& a, const Keyed& b) {
      return a.priority != b.priority ? a.priority < b.priority : a.pos < b.pos;
    });
    for (std::size_t i = 0; i < kept; ++i) keep[entries[i].pos] = 1;
  }

  Dataset out{train.spec, {}};
  for (std::size_t i = 0; i < train.items.size(); ++i) {
    if (keep[i]) out.items.push_back(train.items[i]);
  }
  return out;
}

// One rebalanced minibatch: batch_size * r/(r+1) items from the majority
// class and batch_size * 1/(r+1) from the minority class, sampled with
// replacement within class. With the default minority_label=1 this is the
// negatives:positives = r:1 composition.
inline std::vector<LabeledImage> stratified_minibatch(const Dataset& train, int batch_size,
                                                      const RebalanceConfig& config, Rng& rng) {
  config.validate();
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  if (batch_size % (config.r + 1) != 0) {
    throw std::invalid_argument("batch_size " + std::to_string(batch_size) +
                                " is not divisible by r+1 = " + std::to_string(config.r + 1));
  }

  std::vector<std::size_t> minority_idx, majority_idx;
  for (std::size_t i = 0; i < train.items.size(); ++i) {
    (train.items[i].label == config.minority_label ? minority_idx : majority_idx).push_back(i);
  }
  if (minority_idx.empty() || majority_idx.empty()) {
    throw DegenerateClassError("stratified minibatch requires both classes non-empty");
  }

  const int minority_n = batch_size / (config.r + 1);
  const int majority_n = batch_size - minority_n;
  std::vector<LabeledImage> batch;
  batch.reserve(static_cast<std::size_t>(batch_size));
  for (int i = 0; i < majority_n; ++i) {
    batch.push_back(train.items[majority_idx[rng.uniform_index(majority_idx.size())]]);
  }
  for (int i = 0; i < minority_n; ++i) {
    batch.push_back(train.items[minority_idx[rng.uniform_index(minority_idx.size())]]);
  }
  return batch;
}

// Plain with-replacement sampling, used where no rebalancing applies.
inline std::vector<LabeledImage> uniform_minibatch(const Dataset& train, int batch_size,
                                                   Rng& rng) {
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  if (train.items.empty()) throw DegenerateClassError("cannot sample from an empty dataset");
  std::vector<LabeledImage> batch;
  batch.reserve(static_cast<std::size_t>(batch_size));
  for (int i = 0; i < batch_size; ++i) {
    batch.push_back(train.items[rng.uniform_index(train.items.size())]);
  }
  return batch;
}

}  // namespace xfer
