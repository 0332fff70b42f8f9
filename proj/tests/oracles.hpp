#pragma once

// Independent reference implementations used by the tests. Everything here is
// written from the definitions (naive loops, pair enumeration, finite
// differences) and stays independent of the library's computation paths.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "xfer/dataset.hpp"
#include "xfer/loss.hpp"
#include "xfer/net.hpp"

namespace oracle {

// Naive per-output-pixel convolution, double precision, same-padding.
inline xfer::Tensor<double> conv2d_ref(const xfer::Tensor<double>& in,
                                       const xfer::Tensor<double>& w,
                                       const xfer::Tensor<double>& b) {
  const int n_batch = in.dim(0), channels = in.dim(1), height = in.dim(2), width = in.dim(3);
  const int filters = w.dim(0), kernel = w.dim(2), pad = (kernel - 1) / 2;
  xfer::Tensor<double> out({n_batch, filters, height, width});
  for (int n = 0; n < n_batch; ++n) {
    for (int f = 0; f < filters; ++f) {
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          double acc = b.at(f);
          for (int c = 0; c < channels; ++c) {
            for (int ky = 0; ky < kernel; ++ky) {
              for (int kx = 0; kx < kernel; ++kx) {
                int iy = y + ky - pad, ix = x + kx - pad;
                if (iy < 0 || iy >= height || ix < 0 || ix >= width) continue;
                acc += in.at(n, c, iy, ix) * w.at(f, c, ky, kx);
              }
            }
          }
          out.at(n, f, y, x) = acc;
        }
      }
    }
  }
  return out;
}

inline xfer::Tensor<double> maxpool_ref(const xfer::Tensor<double>& in, int window) {
  const int n_batch = in.dim(0), channels = in.dim(1), height = in.dim(2), width = in.dim(3);
  const int oh = height / window, ow = width / window;
  xfer::Tensor<double> out({n_batch, channels, oh, ow});
  for (int n = 0; n < n_batch; ++n) {
    for (int c = 0; c < channels; ++c) {
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          double best = -1e300;
          for (int wy = 0; wy < window; ++wy) {
            for (int wx = 0; wx < window; ++wx) {
              best = std::max(best, in.at(n, c, y * window + wy, x * window + wx));
            }
          }
          out.at(n, c, y, x) = best;
        }
      }
    }
  }
  return out;
}

inline xfer::Tensor<double> dense_ref(const xfer::Tensor<double>& in,
                                      const xfer::Tensor<double>& w,
                                      const xfer::Tensor<double>& b) {
  const int n_batch = in.dim(0), in_f = in.dim(1), out_f = w.dim(0);
  xfer::Tensor<double> out({n_batch, out_f});
  for (int n = 0; n < n_batch; ++n) {
    for (int o = 0; o < out_f; ++o) {
      double acc = b.at(o);
      for (int i = 0; i < in_f; ++i) acc += in.at(n, i) * w.at(o, i);
      out.at(n, o) = acc;
    }
  }
  return out;
}

// Whole-network forward in double, walking the architecture with the naive
// ops above.
inline xfer::Tensor<double> forward_ref(const xfer::Architecture& arch,
                                        const xfer::ParameterVectorT<double>& params,
                                        const xfer::Tensor<double>& batch) {
  auto infos = arch.param_infos();
  std::vector<int> w_of(arch.layers.size(), -1), b_of(arch.layers.size(), -1);
  for (std::size_t i = 0; i < infos.size(); ++i) {
    (infos[i].shape.size() > 1 ? w_of : b_of)[static_cast<std::size_t>(infos[i].layer_index)] =
        static_cast<int>(i);
  }
  xfer::Tensor<double> cur = batch;
  for (std::size_t li = 0; li < arch.layers.size(); ++li) {
    const xfer::LayerSpec& l = arch.layers[li];
    switch (l.kind) {
      case xfer::LayerKind::Conv:
        cur = conv2d_ref(cur, params[static_cast<std::size_t>(w_of[li])].value,
                         params[static_cast<std::size_t>(b_of[li])].value);
        break;
      case xfer::LayerKind::ReLU:
        for (double& v : cur.data) v = std::max(0.0, v);
        break;
      case xfer::LayerKind::MaxPool: cur = maxpool_ref(cur, l.pool); break;
      case xfer::LayerKind::Flatten: {
        const int n = cur.dim(0);
        const int features = static_cast<int>(cur.size()) / n;
        cur = xfer::Tensor<double>({n, features}, std::move(cur.data));
        break;
      }
      case xfer::LayerKind::Dense:
        cur = dense_ref(cur, params[static_cast<std::size_t>(w_of[li])].value,
                        params[static_cast<std::size_t>(b_of[li])].value);
        break;
      case xfer::LayerKind::Sigmoid:
        for (double& v : cur.data) {
          v = 1.0 / (1.0 + std::exp(-v));
          v = std::min(1.0 - xfer::kProbEps, std::max(xfer::kProbEps, v));
        }
        break;
      case xfer::LayerKind::Softmax: {
        const int n = cur.dim(0), classes = cur.dim(1);
        for (int row = 0; row < n; ++row) {
          double mx = -1e300;
          for (int c = 0; c < classes; ++c) mx = std::max(mx, cur.at(row, c));
          double sum = 0.0;
          for (int c = 0; c < classes; ++c) sum += std::exp(cur.at(row, c) - mx);
          for (int c = 0; c < classes; ++c) cur.at(row, c) = std::exp(cur.at(row, c) - mx) / sum;
        }
        break;
      }
    }
  }
  return cur;
}

// Plain binary cross-entropy, written directly from the formula.
inline double bce_ref(const std::vector<double>& probs, const std::vector<int>& labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    double p = std::min(1.0 - 1e-7, std::max(1e-7, probs[i]));
    total += labels[i] ? -std::log(p) : -std::log(1.0 - p);
  }
  return total / static_cast<double>(probs.size());
}

// Weighted BCE in double over a tape-free path, for finite differences.
inline double weighted_bce_ref(const xfer::Tensor<double>& outputs, const std::vector<int>& labels,
                               double w_pos, double w_neg) {
  const int n = outputs.dim(0);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double p = std::min(1.0 - xfer::kProbEps, std::max(xfer::kProbEps, outputs.at(i, 0)));
    total += labels[static_cast<std::size_t>(i)] ? -w_pos * std::log(p)
                                                 : -w_neg * std::log(1.0 - p);
  }
  return total / n;
}

inline double softmax_ce_ref(const xfer::Tensor<double>& outputs, const std::vector<int>& labels) {
  const int n = outputs.dim(0);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double p = std::max(xfer::kProbEps, outputs.at(i, labels[static_cast<std::size_t>(i)]));
    total += -std::log(p);
  }
  return total / n;
}

// Central finite differences of a scalar loss over every parameter entry,
// evaluated in double with h applied to the float32 parameter values. The
// quotient is validated by step halving: where fd(h) and fd(h/2) disagree
// beyond the certification tolerance, the loss is crossing a relu/pool kink
// inside the probe interval and the quotient is not a derivative estimate, so
// the coordinate is excluded. Excluded coordinates must stay a small
// minority; everywhere else the quotient is a valid oracle at the 1e-3
// relative scale.
struct FiniteDifferences {
  xfer::ParameterVectorT<double> grads;
  std::vector<std::vector<char>> valid;  // per parameter, per entry
  std::size_t total = 0, skipped = 0;
};

inline FiniteDifferences finite_difference_grads(
    const xfer::Architecture& arch, const xfer::ParameterVector& params,
    const xfer::Tensor<double>& batch,
    const std::function<double(const xfer::Tensor<double>&)>& loss_of_outputs, double h = 1e-3) {
  xfer::ParameterVectorT<double> base = params.cast<double>();
  FiniteDifferences out;
  for (const auto& p : base.params) {
    out.grads.params.push_back({p.name, xfer::Tensor<double>(p.value.shape)});
    out.valid.emplace_back(p.value.size(), 1);
  }
  for (std::size_t pi = 0; pi < base.size(); ++pi) {
    for (std::size_t j = 0; j < base[pi].value.size(); ++j) {
      const double saved = base[pi].value.data[j];
      auto loss_at = [&](double v) {
        base[pi].value.data[j] = v;
        const double loss = loss_of_outputs(forward_ref(arch, base, batch));
        base[pi].value.data[j] = saved;
        return loss;
      };
      const double fd_h = (loss_at(saved + h) - loss_at(saved - h)) / (2.0 * h);
      const double fd_h2 = (loss_at(saved + h / 2) - loss_at(saved - h / 2)) / h;
      out.grads[pi].value.data[j] = fd_h;
      ++out.total;
      if (std::abs(fd_h - fd_h2) > 1e-3 * std::max(std::abs(fd_h), std::abs(fd_h2)) + 1e-5) {
        out.valid[pi][j] = 0;
        ++out.skipped;
      }
    }
  }
  return out;
}

// relative error 1e-3 with a small absolute floor for near-zero entries
inline bool grad_close(double analytic, double fd) {
  const double tol = 1e-3 * std::max(std::abs(analytic), std::abs(fd)) + 1e-5;
  return std::abs(analytic - fd) <= tol;
}

// O(n^2) pairwise AUROC: ties count one half.
inline double auroc_pairs_ref(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / static_cast<double>(pairs);
}

// Nested-loop bilinear resize with half-pixel centers, written independently.
inline xfer::Tensor<float> bilinear_ref(const xfer::Tensor<float>& in, int out_size) {
  const int channels = in.dim(0), in_size = in.dim(1);
  xfer::Tensor<float> out({channels, out_size, out_size});
  for (int c = 0; c < channels; ++c) {
    for (int oy = 0; oy < out_size; ++oy) {
      for (int ox = 0; ox < out_size; ++ox) {
        double src_y = (oy + 0.5) * in_size / out_size - 0.5;
        double src_x = (ox + 0.5) * in_size / out_size - 0.5;
        src_y = std::min(std::max(src_y, 0.0), double(in_size - 1));
        src_x = std::min(std::max(src_x, 0.0), double(in_size - 1));
        const int y0 = static_cast<int>(src_y), x0 = static_cast<int>(src_x);
        const int y1 = std::min(y0 + 1, in_size - 1), x1 = std::min(x0 + 1, in_size - 1);
        const double wy = src_y - y0, wx = src_x - x0;
        const double v = (1 - wy) * ((1 - wx) * in.at(c, y0, x0) + wx * in.at(c, y0, x1)) +
                         wy * ((1 - wx) * in.at(c, y1, x0) + wx * in.at(c, y1, x1));
        out.at(c, oy, ox) = static_cast<float>(v);
      }
    }
  }
  return out;
}

// Median-based thin-dark-structure extractor: a pixel belongs to the vessel
// mask when it sits well below the local 5x5 median and dark pixels are a
// minority of the window (vessels are thin; broad dark areas are not
// vessels). Operates on the green channel inside the disc.
inline std::vector<char> extract_vessel_mask(const xfer::Tensor<float>& img) {
  const int size = img.dim(1);
  std::vector<char> mask(static_cast<std::size_t>(size) * size, 0);
  const double disc_r = 0.47 * size;
  for (int y = 2; y < size - 2; ++y) {
    for (int x = 2; x < size - 2; ++x) {
      const double dc = std::hypot(x + 0.5 - 0.5 * size, y + 0.5 - 0.5 * size);
      if (dc >= disc_r - 2.5) continue;
      double window[25];
      int k = 0;
      for (int dy = -2; dy <= 2; ++dy) {
        for (int dx = -2; dx <= 2; ++dx) window[k++] = img.at(1, y + dy, x + dx);
      }
      std::sort(window, window + 25);
      const double med = window[12];
      const double g = img.at(1, y, x);
      if (med - g <= 0.12) continue;
      int dark = 0;
      for (int i = 0; i < 25; ++i) {
        if (window[i] < med - 0.06) ++dark;
      }
      if (dark <= 9) mask[static_cast<std::size_t>(y) * size + x] = 1;
    }
  }
  return mask;
}

}  // namespace oracle
