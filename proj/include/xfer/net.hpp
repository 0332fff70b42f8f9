#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "xfer/errors.hpp"
#include "xfer/rng.hpp"
#include "xfer/tensor.hpp"

namespace xfer {

// Probabilities are clamped into [kProbEps, 1-kProbEps] so the log-losses
// never see 0 or 1.
inline constexpr double kProbEps = 1e-7;

enum class LayerKind { Conv, ReLU, MaxPool, Flatten, Dense, Sigmoid, Softmax };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::ReLU: return "relu";
    case LayerKind::MaxPool: return "pool";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Dense: return "dense";
    case LayerKind::Sigmoid: return "sigmoid";
    case LayerKind::Softmax: return "softmax";
  }
  return "?";
}

struct LayerSpec {
  LayerKind kind;
  int out_channels = 0;  // Conv
  int kernel = 3;        // Conv, odd
  int pool = 2;          // MaxPool window and stride
  int out_features = 0;  // Dense
  bool head = false;     // the single output Dense layer
};

inline LayerSpec conv_layer(int out_channels, int kernel = 3) {
  LayerSpec s{LayerKind::Conv};
  s.out_channels = out_channels;
  s.kernel = kernel;
  return s;
}
inline LayerSpec relu_layer() { return LayerSpec{LayerKind::ReLU}; }
inline LayerSpec maxpool_layer(int window = 2) {
  LayerSpec s{LayerKind::MaxPool};
  s.pool = window;
  return s;
}
inline LayerSpec flatten_layer() { return LayerSpec{LayerKind::Flatten}; }
inline LayerSpec dense_layer(int out_features, bool head = false) {
  LayerSpec s{LayerKind::Dense};
  s.out_features = out_features;
  s.head = head;
  return s;
}
inline LayerSpec sigmoid_layer() { return LayerSpec{LayerKind::Sigmoid}; }
inline LayerSpec softmax_layer() { return LayerSpec{LayerKind::Softmax}; }

// Shape of the value flowing between layers: image planes before Flatten,
// a feature vector after.
struct FlowShape {
  bool flat = false;
  int channels = 0, height = 0, width = 0;
  int features = 0;
  std::vector<int> tensor_shape(int batch) const {
    if (flat) return {batch, features};
    return {batch, channels, height, width};
  }
};

struct Architecture {
  int in_channels = 3;
  int in_size = 32;
  std::vector<LayerSpec> layers;

  struct ParamInfo {
    std::string name;
    std::vector<int> shape;
    int layer_index;
    bool head;
    int fan_in, fan_out;  // weight init; 0 for biases
  };

  // Output shape of every layer; index 0 is the input shape.
  std::vector<FlowShape> flow_shapes() const {
    std::vector<FlowShape> shapes;
    FlowShape cur;
    cur.flat = false;
    cur.channels = in_channels;
    cur.height = in_size;
    cur.width = in_size;
    shapes.push_back(cur);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const LayerSpec& l = layers[i];
      switch (l.kind) {
        case LayerKind::Conv:
          if (cur.flat) throw ShapeError("conv layer after flatten");
          if (l.kernel % 2 == 0 || l.kernel < 1) throw ShapeError("conv kernel must be odd");
          if (l.out_channels < 1) throw ShapeError("conv needs out_channels >= 1");
          cur.channels = l.out_channels;
          break;
        case LayerKind::ReLU:
          break;
        case LayerKind::MaxPool:
          if (cur.flat) throw ShapeError("maxpool after flatten");
          if (l.pool < 1) throw ShapeError("pool window must be >= 1");
          cur.height /= l.pool;
          cur.width /= l.pool;
          if (cur.height < 1 || cur.width < 1) throw ShapeError("pooling below 1x1");
          break;
        case LayerKind::Flatten:
          if (cur.flat) throw ShapeError("double flatten");
          cur.features = cur.channels * cur.height * cur.width;
          cur.flat = true;
          break;
        case LayerKind::Dense:
          if (!cur.flat) throw ShapeError("dense layer requires flattened input");
          if (l.out_features < 1) throw ShapeError("dense needs out_features >= 1");
          cur.features = l.out_features;
          break;
        case LayerKind::Sigmoid:
        case LayerKind::Softmax:
          if (!cur.flat) throw ShapeError("output activation requires flattened input");
          break;
      }
      shapes.push_back(cur);
    }
    return shapes;
  }

  void validate() const {
    auto shapes = flow_shapes();
    (void)shapes;
    int heads = 0;
    for (const auto& l : layers) {
      if (l.head) {
        if (l.kind != LayerKind::Dense) throw ShapeError("only dense layers can be the head");
        ++heads;
      }
    }
    if (heads != 1) throw ShapeError("architecture requires exactly one head layer");
  }

  std::vector<ParamInfo> param_infos() const {
    std::vector<ParamInfo> out;
    auto shapes = flow_shapes();
    int conv_n = 0, fc_n = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const LayerSpec& l = layers[i];
      const FlowShape& in = shapes[i];
      if (l.kind == LayerKind::Conv) {
        ++conv_n;
        std::string base = "conv" + std::to_string(conv_n);
        int k = l.kernel;
        out.push_back({base + ".w",
                       {l.out_channels, in.channels, k, k},
                       static_cast<int>(i),
                       false,
                       in.channels * k * k,
                       l.out_channels * k * k});
        out.push_back({base + ".b", {l.out_channels}, static_cast<int>(i), false, 0, 0});
      } else if (l.kind == LayerKind::Dense) {
        std::string base = l.head ? "head" : "fc" + std::to_string(++fc_n);
        out.push_back({base + ".w",
                       {l.out_features, in.features},
                       static_cast<int>(i),
                       l.head,
                       in.features,
                       l.out_features});
        out.push_back({base + ".b", {l.out_features}, static_cast<int>(i), l.head, 0, 0});
      }
    }
    return out;
  }

  std::string spec_string() const {
    std::string s = "in:" + std::to_string(in_channels) + "x" + std::to_string(in_size) +
                    "x" + std::to_string(in_size);
    for (const auto& l : layers) {
      s += "|";
      s += to_string(l.kind);
      switch (l.kind) {
        case LayerKind::Conv:
          s += ":" + std::to_string(l.out_channels) + "k" + std::to_string(l.kernel);
          break;
        case LayerKind::MaxPool: s += ":" + std::to_string(l.pool); break;
        case LayerKind::Dense:
          s += ":" + std::to_string(l.out_features);
          if (l.head) s += "h";
          break;
        default: break;
      }
    }
    return s + "|v1";
  }

  std::string fingerprint() const { return to_hex(fnv1a64(spec_string())); }
};

// Small CNN used throughout: two conv/pool stages, one hidden dense layer,
// and a task-sized head (sigmoid for one output, softmax otherwise).
inline Architecture reference_architecture(int image_size, int num_outputs) {
  Architecture a;
  a.in_channels = 3;
  a.in_size = image_size;
  a.layers = {conv_layer(8),  relu_layer(), maxpool_layer(2),
              conv_layer(16), relu_layer(), maxpool_layer(2),
              flatten_layer(), dense_layer(32), relu_layer(),
              dense_layer(num_outputs, /*head=*/true)};
  a.layers.push_back(num_outputs == 1 ? sigmoid_layer() : softmax_layer());
  a.validate();
  return a;
}

template <typename T>
struct ParameterVectorT {
  struct Param {
    std::string name;
    Tensor<T> value;
  };
  std::vector<Param> params;

  std::size_t size() const { return params.size(); }
  Param& operator[](std::size_t i) { return params[i]; }
  const Param& operator[](std::size_t i) const { return params[i]; }

  const Param* find(const std::string& name) const {
    for (const auto& p : params) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }

  bool operator==(const ParameterVectorT& other) const {
    if (params.size() != other.params.size()) return false;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].name != other.params[i].name) return false;
      if (!(params[i].value == other.params[i].value)) return false;
    }
    return true;
  }

  template <typename U>
  ParameterVectorT<U> cast() const {
    ParameterVectorT<U> out;
    for (const auto& p : params) out.params.push_back({p.name, p.value.template cast<U>()});
    return out;
  }
};

using ParameterVector = ParameterVectorT<float>;

// Per-layer uniform init in [-a, a] with a = sqrt(6 / (fan_in + fan_out));
// biases start at zero. Each tensor draws from its own derived stream, so the
// result is independent of evaluation order.
inline ParameterVector init_random(const Architecture& arch, std::uint64_t seed) {
  ParameterVector pv;
  auto infos = arch.param_infos();
  for (std::size_t i = 0; i < infos.size(); ++i) {
    const auto& info = infos[i];
    Tensor<float> t(info.shape);
    if (info.fan_in > 0) {
      double a = std::sqrt(6.0 / (info.fan_in + info.fan_out));
      Rng rng(derive_key(seed, rngtag::kInit, static_cast<std::uint64_t>(i)));
      for (float& v : t.data) v = static_cast<float>(rng.uniform(-a, a));
    }
    pv.params.push_back({info.name, std::move(t)});
  }
  return pv;
}

template <typename T>
struct TapeEntry {
  Tensor<T> input;          // value flowing into the layer
  std::vector<int> argmax;  // MaxPool only: flat input index per output cell
};

// Record of one forward pass; backward() replays it exactly once.
template <typename T>
struct Tape {
  Architecture arch;
  ParameterVectorT<T> params;
  std::vector<TapeEntry<T>> entries;
  Tensor<T> outputs;
  Tensor<T> d_outputs;
  double loss = 0.0;
  bool has_loss = false;
  bool consumed = false;
};

template <typename T>
struct ForwardResult {
  Tensor<T> outputs;
  Tape<T> tape;
};

namespace detail {

template <typename T>
void check_finite(const Tensor<T>& t, int layer_index, LayerKind kind) {
  if (!t.all_finite()) {
    throw NumericError("non-finite values after layer " + std::to_string(layer_index) +
                       " (" + to_string(kind) + ")");
  }
}

template <typename T>
Tensor<T> conv_forward(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& b) {
  const int batch = in.dim(0), channels = in.dim(1), height = in.dim(2), width = in.dim(3);
  const int filters = w.dim(0), kernel = w.dim(2);
  const int pad = (kernel - 1) / 2;
  Tensor<T> out({batch, filters, height, width});
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  for (int n = 0; n < batch; ++n) {
    for (int f = 0; f < filters; ++f) {
      T* op = out.ptr() + (static_cast<std::size_t>(n) * filters + f) * plane;
      std::fill(op, op + plane, b.at(f));
    }
  }
  for (int n = 0; n < batch; ++n) {
    for (int c = 0; c < channels; ++c) {
      const T* ip = in.ptr() + (static_cast<std::size_t>(n) * channels + c) * plane;
      for (int f = 0; f < filters; ++f) {
        T* op = out.ptr() + (static_cast<std::size_t>(n) * filters + f) * plane;
        const T* wp = w.ptr() + (static_cast<std::size_t>(f) * channels + c) * kernel * kernel;
        for (int ky = 0; ky < kernel; ++ky) {
          const int dy = ky - pad;
          const int y_lo = std::max(0, -dy), y_hi = std::min(height, height - dy);
          for (int kx = 0; kx < kernel; ++kx) {
            const int dx = kx - pad;
            const int x_lo = std::max(0, -dx), x_hi = std::min(width, width - dx);
            const T wv = wp[ky * kernel + kx];
            for (int y = y_lo; y < y_hi; ++y) {
              const T* irow = ip + static_cast<std::size_t>(y + dy) * width + dx;
              T* orow = op + static_cast<std::size_t>(y) * width;
              for (int x = x_lo; x < x_hi; ++x) orow[x] += wv * irow[x];
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
void conv_backward(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& d_out,
                   Tensor<T>& d_in, Tensor<T>& d_w, Tensor<T>& d_b) {
  const int batch = in.dim(0), channels = in.dim(1), height = in.dim(2), width = in.dim(3);
  const int filters = w.dim(0), kernel = w.dim(2);
  const int pad = (kernel - 1) / 2;
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  for (int n = 0; n < batch; ++n) {
    for (int f = 0; f < filters; ++f) {
      const T* dop = d_out.ptr() + (static_cast<std::size_t>(n) * filters + f) * plane;
      T acc = T(0);
      for (std::size_t i = 0; i < plane; ++i) acc += dop[i];
      d_b.at(f) += acc;
    }
  }
  for (int n = 0; n < batch; ++n) {
    for (int c = 0; c < channels; ++c) {
      const T* ip = in.ptr() + (static_cast<std::size_t>(n) * channels + c) * plane;
      T* dip = d_in.ptr() + (static_cast<std::size_t>(n) * channels + c) * plane;
      for (int f = 0; f < filters; ++f) {
        const T* dop = d_out.ptr() + (static_cast<std::size_t>(n) * filters + f) * plane;
        const T* wp = w.ptr() + (static_cast<std::size_t>(f) * channels + c) * kernel * kernel;
        T* dwp = d_w.ptr() + (static_cast<std::size_t>(f) * channels + c) * kernel * kernel;
        for (int ky = 0; ky < kernel; ++ky) {
          const int dy = ky - pad;
          const int y_lo = std::max(0, -dy), y_hi = std::min(height, height - dy);
          for (int kx = 0; kx < kernel; ++kx) {
            const int dx = kx - pad;
            const int x_lo = std::max(0, -dx), x_hi = std::min(width, width - dx);
            const T wv = wp[ky * kernel + kx];
            T dwv = T(0);
            for (int y = y_lo; y < y_hi; ++y) {
              const T* irow = ip + static_cast<std::size_t>(y + dy) * width + dx;
              T* dirow = dip + static_cast<std::size_t>(y + dy) * width + dx;
              const T* dorow = dop + static_cast<std::size_t>(y) * width;
              for (int x = x_lo; x < x_hi; ++x) {
                dwv += irow[x] * dorow[x];
                dirow[x] += wv * dorow[x];
              }
            }
            dwp[ky * kernel + kx] += dwv;
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> maxpool_forward(const Tensor<T>& in, int window, std::vector<int>& argmax) {
  const int batch = in.dim(0), channels = in.dim(1), height = in.dim(2), width = in.dim(3);
  const int oh = height / window, ow = width / window;
  Tensor<T> out({batch, channels, oh, ow});
  argmax.assign(out.size(), 0);
  std::size_t oi = 0;
  for (int n = 0; n < batch; ++n) {
    for (int c = 0; c < channels; ++c) {
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x, ++oi) {
          T best = -std::numeric_limits<T>::infinity();
          int best_idx = 0;
          for (int wy = 0; wy < window; ++wy) {
            for (int wx = 0; wx < window; ++wx) {
              int iy = y * window + wy, ix = x * window + wx;
              std::size_t idx =
                  ((static_cast<std::size_t>(n) * channels + c) * height + iy) * width + ix;
              if (in.data[idx] > best) {
                best = in.data[idx];
                best_idx = static_cast<int>(idx);
              }
            }
          }
          out.data[oi] = best;
          argmax[oi] = best_idx;
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& b) {
  const int batch = in.dim(0), in_features = in.dim(1), out_features = w.dim(0);
  Tensor<T> out({batch, out_features});
  for (int n = 0; n < batch; ++n) {
    const T* irow = in.ptr() + static_cast<std::size_t>(n) * in_features;
    T* orow = out.ptr() + static_cast<std::size_t>(n) * out_features;
    for (int o = 0; o < out_features; ++o) {
      const T* wrow = w.ptr() + static_cast<std::size_t>(o) * in_features;
      T acc = b.at(o);
      for (int i = 0; i < in_features; ++i) acc += irow[i] * wrow[i];
      orow[o] = acc;
    }
  }
  return out;
}

template <typename T>
void dense_backward(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& d_out,
                    Tensor<T>& d_in, Tensor<T>& d_w, Tensor<T>& d_b) {
  const int batch = in.dim(0), in_features = in.dim(1), out_features = w.dim(0);
  for (int n = 0; n < batch; ++n) {
    const T* irow = in.ptr() + static_cast<std::size_t>(n) * in_features;
    const T* dorow = d_out.ptr() + static_cast<std::size_t>(n) * out_features;
    T* dirow = d_in.ptr() + static_cast<std::size_t>(n) * in_features;
    for (int o = 0; o < out_features; ++o) {
      const T dov = dorow[o];
      d_b.at(o) += dov;
      const T* wrow = w.ptr() + static_cast<std::size_t>(o) * in_features;
      T* dwrow = d_w.ptr() + static_cast<std::size_t>(o) * in_features;
      for (int i = 0; i < in_features; ++i) {
        dwrow[i] += dov * irow[i];
        dirow[i] += dov * wrow[i];
      }
    }
  }
}

template <typename T>
T clamp_prob(T p) {
  const T lo = static_cast<T>(kProbEps);
  const T hi = static_cast<T>(1.0 - kProbEps);
  return std::min(hi, std::max(lo, p));
}

}  // namespace detail

// Runs the network over a batch shaped (N, in_channels, S, S) and records a
// tape sufficient for one exact gradient replay.
template <typename T>
ForwardResult<T> forward(const Architecture& arch, const ParameterVectorT<T>& params,
                         const Tensor<T>& batch) {
  arch.validate();
  auto infos = arch.param_infos();
  if (params.size() != infos.size()) {
    throw ShapeError("parameter count does not match architecture");
  }
  for (std::size_t i = 0; i < infos.size(); ++i) {
    if (params[i].name != infos[i].name || params[i].value.shape != infos[i].shape) {
      throw ShapeError("parameter " + std::to_string(i) + " (" + params[i].name +
                       ") does not match architecture slot " + infos[i].name);
    }
  }
  if (batch.rank() != 4 || batch.dim(1) != arch.in_channels || batch.dim(2) != arch.in_size ||
      batch.dim(3) != arch.in_size) {
    throw ShapeError("batch shape " + batch.shape_string() + " does not match architecture input");
  }

  // parameter slots per layer
  std::vector<int> w_of_layer(arch.layers.size(), -1), b_of_layer(arch.layers.size(), -1);
  for (std::size_t i = 0; i < infos.size(); ++i) {
    if (infos[i].fan_in > 0 || infos[i].shape.size() > 1) {
      w_of_layer[static_cast<std::size_t>(infos[i].layer_index)] = static_cast<int>(i);
    } else {
      b_of_layer[static_cast<std::size_t>(infos[i].layer_index)] = static_cast<int>(i);
    }
  }

  ForwardResult<T> res;
  res.tape.arch = arch;
  res.tape.params = params;
  Tensor<T> cur = batch;
  for (std::size_t li = 0; li < arch.layers.size(); ++li) {
    const LayerSpec& l = arch.layers[li];
    TapeEntry<T> entry;
    entry.input = cur;
    switch (l.kind) {
      case LayerKind::Conv:
        cur = detail::conv_forward(cur, params[static_cast<std::size_t>(w_of_layer[li])].value,
                                   params[static_cast<std::size_t>(b_of_layer[li])].value);
        break;
      case LayerKind::ReLU:
        for (T& v : cur.data) v = v > T(0) ? v : T(0);
        break;
      case LayerKind::MaxPool:
        cur = detail::maxpool_forward(cur, l.pool, entry.argmax);
        break;
      case LayerKind::Flatten: {
        int n = cur.dim(0);
        int features = static_cast<int>(cur.size()) / n;
        cur = Tensor<T>({n, features}, std::move(cur.data));
        break;
      }
      case LayerKind::Dense:
        cur = detail::dense_forward(cur, params[static_cast<std::size_t>(w_of_layer[li])].value,
                                    params[static_cast<std::size_t>(b_of_layer[li])].value);
        break;
      case LayerKind::Sigmoid:
        for (T& v : cur.data) {
          v = detail::clamp_prob(static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(v)))));
        }
        break;
      case LayerKind::Softmax: {
        const int n = cur.dim(0), classes = cur.dim(1);
        for (int row = 0; row < n; ++row) {
          T* p = cur.ptr() + static_cast<std::size_t>(row) * classes;
          T mx = *std::max_element(p, p + classes);
          double sum = 0.0;
          for (int c = 0; c < classes; ++c) sum += std::exp(static_cast<double>(p[c] - mx));
          for (int c = 0; c < classes; ++c) {
            p[c] = static_cast<T>(std::exp(static_cast<double>(p[c] - mx)) / sum);
          }
        }
        break;
      }
    }
    detail::check_finite(cur, static_cast<int>(li), l.kind);
    res.tape.entries.push_back(std::move(entry));
  }
  res.outputs = cur;
  res.tape.outputs = cur;
  return res;
}

// Reverse pass over a completed (forward + loss) tape. Consumes the tape.
template <typename T>
ParameterVectorT<T> backward(Tape<T>& tape) {
  if (!tape.has_loss) throw StateError("backward requires a tape with an attached loss");
  if (tape.consumed) throw StateError("tape already consumed by a previous backward");
  tape.consumed = true;

  const Architecture& arch = tape.arch;
  auto infos = arch.param_infos();
  ParameterVectorT<T> grads;
  for (const auto& info : infos) grads.params.push_back({info.name, Tensor<T>(info.shape)});

  std::vector<int> w_of_layer(arch.layers.size(), -1), b_of_layer(arch.layers.size(), -1);
  for (std::size_t i = 0; i < infos.size(); ++i) {
    if (infos[i].shape.size() > 1) {
      w_of_layer[static_cast<std::size_t>(infos[i].layer_index)] = static_cast<int>(i);
    } else {
      b_of_layer[static_cast<std::size_t>(infos[i].layer_index)] = static_cast<int>(i);
    }
  }

  Tensor<T> d_cur = tape.d_outputs;
  for (int li = static_cast<int>(arch.layers.size()) - 1; li >= 0; --li) {
    const LayerSpec& l = arch.layers[static_cast<std::size_t>(li)];
    TapeEntry<T>& entry = tape.entries[static_cast<std::size_t>(li)];
    switch (l.kind) {
      case LayerKind::Conv: {
        Tensor<T> d_in(entry.input.shape);
        detail::conv_backward(entry.input,
                              tape.params[static_cast<std::size_t>(w_of_layer[li])].value, d_cur,
                              d_in,
                              grads[static_cast<std::size_t>(w_of_layer[li])].value,
                              grads[static_cast<std::size_t>(b_of_layer[li])].value);
        d_cur = std::move(d_in);
        break;
      }
      case LayerKind::ReLU:
        for (std::size_t i = 0; i < d_cur.size(); ++i) {
          if (entry.input.data[i] <= T(0)) d_cur.data[i] = T(0);
        }
        break;
      case LayerKind::MaxPool: {
        Tensor<T> d_in(entry.input.shape);
        for (std::size_t i = 0; i < d_cur.size(); ++i) {
          d_in.data[static_cast<std::size_t>(entry.argmax[i])] += d_cur.data[i];
        }
        d_cur = std::move(d_in);
        break;
      }
      case LayerKind::Flatten:
        d_cur = Tensor<T>(entry.input.shape, std::move(d_cur.data));
        break;
      case LayerKind::Dense: {
        Tensor<T> d_in(entry.input.shape);
        detail::dense_backward(entry.input,
                               tape.params[static_cast<std::size_t>(w_of_layer[li])].value, d_cur,
                               d_in,
                               grads[static_cast<std::size_t>(w_of_layer[li])].value,
                               grads[static_cast<std::size_t>(b_of_layer[li])].value);
        d_cur = std::move(d_in);
        break;
      }
      case LayerKind::Sigmoid: {
        // forward output was saved as the next entry's input, or is the tape
        // output when this is the last layer
        const Tensor<T>& p = (static_cast<std::size_t>(li + 1) < tape.entries.size())
                                 ? tape.entries[static_cast<std::size_t>(li + 1)].input
                                 : tape.outputs;
        for (std::size_t i = 0; i < d_cur.size(); ++i) {
          d_cur.data[i] *= p.data[i] * (T(1) - p.data[i]);
        }
        break;
      }
      case LayerKind::Softmax: {
        const Tensor<T>& p = (static_cast<std::size_t>(li + 1) < tape.entries.size())
                                 ? tape.entries[static_cast<std::size_t>(li + 1)].input
                                 : tape.outputs;
        const int n = p.dim(0), classes = p.dim(1);
        for (int row = 0; row < n; ++row) {
          const T* prow = p.ptr() + static_cast<std::size_t>(row) * classes;
          T* drow = d_cur.ptr() + static_cast<std::size_t>(row) * classes;
          T dot = T(0);
          for (int c = 0; c < classes; ++c) dot += drow[c] * prow[c];
          for (int c = 0; c < classes; ++c) drow[c] = prow[c] * (drow[c] - dot);
        }
        break;
      }
    }
  }
  return grads;
}

}  // namespace xfer
