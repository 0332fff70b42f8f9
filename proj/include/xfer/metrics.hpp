#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "xfer/augment.hpp"
#include "xfer/checkpoint.hpp"
#include "xfer/dataset.hpp"
#include "xfer/errors.hpp"
#include "xfer/net.hpp"

namespace xfer {

struct ConfusionCounts {
  long tp = 0, fp = 0, tn = 0, fn = 0;
  long total() const { return tp + fp + tn + fn; }
};

// Predict positive iff score >= threshold.
inline ConfusionCounts confusion(const std::vector<double>& scores,
                                 const std::vector<int>& labels, double threshold) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
  if (scores.empty()) throw std::invalid_argument("confusion over an empty set");
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) {
      (predicted ? c.tp : c.fn)++;
    } else {
      (predicted ? c.fp : c.tn)++;
    }
  }
  return c;
}

// Undefined denominators yield an absent value, never a silent zero.
inline std::optional<double> accuracy(const ConfusionCounts& c) {
  if (c.total() == 0) return std::nullopt;
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

inline std::optional<double> precision(const ConfusionCounts& c) {
  if (c.tp + c.fp == 0) return std::nullopt;
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}

inline std::optional<double> sensitivity(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0) return std::nullopt;
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

// Rank-based AUROC (Mann-Whitney): average ranks over tie groups, then
//   (rank_sum_pos - P(P+1)/2) / (P * N).
// Equals pairwise counting with ties worth one half.
inline std::optional<double> auroc(const std::vector<double>& scores,
                                   const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("labels must be 0 or 1");
    n_pos += static_cast<std::size_t>(y);
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based midrank
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) pos_rank_sum += avg_rank;
    }
    i = j + 1;
  }
  const double p = static_cast<double>(n_pos);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(n_neg));
}

struct MetricsReport {
  std::optional<double> auroc;
  std::optional<double> accuracy;
  std::optional<double> precision;
  std::optional<double> sensitivity;
  long n_test = 0;

  int undefined_count() const {
    return static_cast<int>(!auroc.has_value()) + static_cast<int>(!accuracy.has_value()) +
           static_cast<int>(!precision.has_value()) + static_cast<int>(!sensitivity.has_value());
  }

  bool operator==(const MetricsReport&) const = default;
};

// Scores every test image with no stochastic augmentation (resize only, when
// the network input size differs from the image size).
inline std::vector<double> score_dataset(const Architecture& arch, const ParameterVector& params,
                                         const Dataset& test) {
  std::vector<double> scores;
  scores.reserve(test.size());
  const int eval_batch = 64;
  const int size = arch.in_size;
  for (std::size_t start = 0; start < test.size(); start += eval_batch) {
    const std::size_t count = std::min<std::size_t>(eval_batch, test.size() - start);
    Tensor<float> batch({static_cast<int>(count), 3, size, size});
    for (std::size_t i = 0; i < count; ++i) {
      const LabeledImage& img = test.items[start + i];
      const LabeledImage resized = resize(img, size);
      std::copy(resized.pixels.data.begin(), resized.pixels.data.end(),
                batch.data.begin() + static_cast<std::ptrdiff_t>(i * resized.pixels.size()));
    }
    auto res = forward(arch, params, batch);
    if (res.outputs.dim(1) != 1) {
      throw ShapeError("binary evaluation requires a single-output head");
    }
    for (std::size_t i = 0; i < count; ++i) {
      scores.push_back(static_cast<double>(res.outputs.at(static_cast<int>(i), 0)));
    }
  }
  return scores;
}

inline MetricsReport evaluate(const Architecture& arch, const ParameterVector& params,
                              const Dataset& test, double threshold = 0.5) {
  if (test.items.empty()) throw std::invalid_argument("evaluation requires a non-empty test set");
  std::vector<int> labels;
  labels.reserve(test.size());
  for (const auto& it : test.items) labels.push_back(it.label);
  const std::vector<double> scores = score_dataset(arch, params, test);

  MetricsReport report;
  report.n_test = static_cast<long>(test.size());
  report.auroc = auroc(scores, labels);
  const ConfusionCounts c = confusion(scores, labels, threshold);
  report.accuracy = accuracy(c);
  report.precision = precision(c);
  report.sensitivity = sensitivity(c);
  return report;
}

inline MetricsReport evaluate(const Architecture& arch, const Checkpoint& ckpt,
                              const Dataset& test, double threshold = 0.5) {
  check_fingerprint(arch, ckpt);
  return evaluate(arch, ckpt.params, test, threshold);
}

}  // namespace xfer
