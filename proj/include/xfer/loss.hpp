#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "xfer/net.hpp"

namespace xfer {

// Class-weighted binary cross-entropy:
//   (1/N) * sum_i -[ w_pos * y_i * log p_i + w_neg * (1-y_i) * log(1-p_i) ]
// Accumulates in double; probabilities are clamped to [eps, 1-eps].
inline double weighted_bce_loss(const std::vector<double>& probabilities,
                                const std::vector<int>& labels, double pos_weight,
                                double neg_weight) {
  if (probabilities.size() != labels.size()) {
    throw ShapeError("probabilities and labels differ in length");
  }
  if (probabilities.empty()) throw std::invalid_argument("loss over an empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    int y = labels[i];
    if (y != 0 && y != 1) throw std::invalid_argument("binary labels must be 0 or 1");
    double p = std::min(1.0 - kProbEps, std::max(kProbEps, probabilities[i]));
    total -= y ? pos_weight * std::log(p) : neg_weight * std::log(1.0 - p);
  }
  return total / static_cast<double>(probabilities.size());
}

// The 1:r weighting (negative:positive).
inline double weighted_bce_loss(const std::vector<double>& probabilities,
                                const std::vector<int>& labels, double r) {
  return weighted_bce_loss(probabilities, labels, r, 1.0);
}

// Attaches the weighted BCE loss to a forward tape: records the loss value
// and seeds d(loss)/d(outputs) for backward(). Outputs must be (N, 1).
template <typename T>
double tape_loss_weighted_bce(Tape<T>& tape, const std::vector<int>& labels, double pos_weight,
                              double neg_weight) {
  if (tape.outputs.rank() != 2 || tape.outputs.dim(1) != 1) {
    throw ShapeError("weighted BCE expects outputs shaped (N,1), got " +
                     tape.outputs.shape_string());
  }
  const int batch = tape.outputs.dim(0);
  if (static_cast<std::size_t>(batch) != labels.size()) {
    throw ShapeError("labels length does not match batch size");
  }
  tape.d_outputs = Tensor<T>(tape.outputs.shape);
  const double inv_n = 1.0 / batch;
  double total = 0.0;
  for (int i = 0; i < batch; ++i) {
    int y = labels[static_cast<std::size_t>(i)];
    if (y != 0 && y != 1) throw std::invalid_argument("binary labels must be 0 or 1");
    double p = std::min(1.0 - kProbEps,
                        std::max(kProbEps, static_cast<double>(tape.outputs.at(i, 0))));
    if (y) {
      total -= pos_weight * std::log(p);
      tape.d_outputs.at(i, 0) = static_cast<T>(-pos_weight / p * inv_n);
    } else {
      total -= neg_weight * std::log(1.0 - p);
      tape.d_outputs.at(i, 0) = static_cast<T>(neg_weight / (1.0 - p) * inv_n);
    }
  }
  tape.loss = total * inv_n;
  tape.has_loss = true;
  return tape.loss;
}

// Multi-class cross-entropy over softmax outputs (N, C).
template <typename T>
double tape_loss_softmax_ce(Tape<T>& tape, const std::vector<int>& labels) {
  if (tape.outputs.rank() != 2) {
    throw ShapeError("softmax CE expects outputs shaped (N,C), got " +
                     tape.outputs.shape_string());
  }
  const int batch = tape.outputs.dim(0), classes = tape.outputs.dim(1);
  if (static_cast<std::size_t>(batch) != labels.size()) {
    throw ShapeError("labels length does not match batch size");
  }
  tape.d_outputs = Tensor<T>(tape.outputs.shape);
  const double inv_n = 1.0 / batch;
  double total = 0.0;
  for (int i = 0; i < batch; ++i) {
    int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= classes) throw std::invalid_argument("class label out of range");
    double p = std::max(kProbEps, static_cast<double>(tape.outputs.at(i, y)));
    total -= std::log(p);
    tape.d_outputs.at(i, y) = static_cast<T>(-1.0 / p * inv_n);
  }
  tape.loss = total * inv_n;
  tape.has_loss = true;
  return tape.loss;
}

}  // namespace xfer
