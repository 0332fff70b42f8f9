#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "xfer/errors.hpp"
#include "xfer/rng.hpp"
#include "xfer/tensor.hpp"

namespace xfer {

enum class TaskId { SourceDR, TargetROP, GenericPretext };

inline const char* to_string(TaskId t) {
  switch (t) {
    case TaskId::SourceDR: return "source_dr";
    case TaskId::TargetROP: return "target_rop";
    case TaskId::GenericPretext: return "generic_pretext";
  }
  return "?";
}

inline std::optional<TaskId> parse_task_id(const std::string& s) {
  if (s == "source_dr") return TaskId::SourceDR;
  if (s == "target_rop") return TaskId::TargetROP;
  if (s == "generic_pretext") return TaskId::GenericPretext;
  return std::nullopt;
}

// Definition of a synthetic labeled-image task. Generation is a pure function
// of (spec fields, per-image index); two equal specs produce byte-equal data.
struct TaskSpec {
  TaskId task_id = TaskId::TargetROP;
  int image_size = 32;
  int num_classes = 2;
  long positive_count = 0;   // binary tasks
  long negative_count = 0;   // binary tasks
  long items_per_class = 0;  // GenericPretext
  double shared_feature_strength = 0.8;
  std::uint64_t seed = 0;

  bool binary() const { return task_id != TaskId::GenericPretext; }

  void validate() const {
    if (image_size < 8) throw std::invalid_argument("image_size must be >= 8");
    if (binary()) {
      if (num_classes != 2) throw std::invalid_argument("binary task requires num_classes == 2");
      if (positive_count < 0 || negative_count < 0) {
        throw std::invalid_argument("class counts must be non-negative");
      }
      if (positive_count + negative_count == 0) {
        throw std::invalid_argument("dataset would be empty: both class counts are zero");
      }
    } else {
      if (num_classes < 2) throw std::invalid_argument("pretext task requires num_classes >= 2");
      if (items_per_class <= 0) throw std::invalid_argument("items_per_class must be positive");
    }
    if (shared_feature_strength < 0.0 || shared_feature_strength > 1.0) {
      throw std::invalid_argument("shared_feature_strength must lie in [0,1]");
    }
  }
};

struct LabeledImage {
  Tensor<float> pixels;  // (3, S, S), values in [0,1]
  int label = 0;
  long source_index = 0;
};

struct Dataset {
  TaskSpec spec;
  std::vector<LabeledImage> items;

  std::size_t size() const { return items.size(); }

  std::vector<long> class_counts() const {
    std::vector<long> counts(static_cast<std::size_t>(spec.num_classes), 0);
    for (const auto& it : items) counts[static_cast<std::size_t>(it.label)]++;
    return counts;
  }
};

// Content hash covering spec identity, ordering, labels and pixel bytes.
inline std::uint64_t dataset_hash(const Dataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  const TaskSpec& s = ds.spec;
  std::uint64_t fields[] = {static_cast<std::uint64_t>(s.task_id),
                            static_cast<std::uint64_t>(s.image_size),
                            static_cast<std::uint64_t>(s.num_classes),
                            static_cast<std::uint64_t>(s.positive_count),
                            static_cast<std::uint64_t>(s.negative_count),
                            static_cast<std::uint64_t>(s.items_per_class),
                            double_bits(s.shared_feature_strength),
                            s.seed};
  h = fnv1a64(fields, sizeof(fields), h);
  for (const auto& it : ds.items) {
    std::uint64_t meta[] = {static_cast<std::uint64_t>(it.label),
                            static_cast<std::uint64_t>(it.source_index)};
    h = fnv1a64(meta, sizeof(meta), h);
    h = fnv1a64(it.pixels.data.data(), it.pixels.data.size() * sizeof(float), h);
  }
  return h;
}

inline std::string dataset_hash_hex(const Dataset& ds) { return to_hex(dataset_hash(ds)); }

// Stratified split: within each class, floor(count * train_ratio) items go to
// the training set, the remainder to the test set. Item order within each
// output preserves the input order. The small epsilon keeps rational ratios
// such as 4/5 from flooring one short under binary floating point.
inline std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_ratio,
                                         std::uint64_t seed) {
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) {
    throw std::invalid_argument("train_ratio must lie strictly between 0 and 1");
  }
  if (dataset.items.empty()) throw std::invalid_argument("cannot split an empty dataset");

  const int num_classes = dataset.spec.num_classes;
  std::vector<std::vector<std::size_t>> per_class(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < dataset.items.size(); ++i) {
    per_class[static_cast<std::size_t>(dataset.items[i].label)].push_back(i);
  }

  std::vector<char> in_train(dataset.items.size(), 0);
  for (int c = 0; c < num_classes; ++c) {
    auto& idx = per_class[static_cast<std::size_t>(c)];
    if (idx.size() < 2) {
      throw StratificationError("class " + std::to_string(c) +
                                " has fewer than 2 items; cannot stratify");
    }
    Rng rng(derive_key(seed, rngtag::kSplit, static_cast<std::uint64_t>(c)));
    for (std::size_t i = idx.size() - 1; i > 0; --i) {
      std::size_t j = rng.uniform_index(i + 1);
      std::swap(idx[i], idx[j]);
    }
    auto take = static_cast<std::size_t>(
        std::floor(static_cast<double>(idx.size()) * train_ratio + 1e-9));
    for (std::size_t i = 0; i < take; ++i) in_train[idx[i]] = 1;
  }

  Dataset train{dataset.spec, {}};
  Dataset test{dataset.spec, {}};
  for (std::size_t i = 0; i < dataset.items.size(); ++i) {
    (in_train[i] ? train : test).items.push_back(dataset.items[i]);
  }
  return {std::move(train), std::move(test)};
}

}  // namespace xfer
