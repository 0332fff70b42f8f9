#pragma once

#include <cmath>
#include <cstddef>
#include <cstring>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "xfer/errors.hpp"

namespace xfer {

// Dense row-major tensor. Plain value type: copyable, comparable, no views.
template <typename T = float>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;

  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(numel(shape), T(0));
  }

  Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel(shape)) {
      throw ShapeError("tensor data length does not match shape product");
    }
  }

  static std::size_t numel(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) {
      if (d <= 0) throw ShapeError("tensor dimensions must be positive");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  std::size_t size() const { return data.size(); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  T& at(int i) { return data[static_cast<std::size_t>(i)]; }
  T at(int i) const { return data[static_cast<std::size_t>(i)]; }
  T& at(int i, int j) { return data[static_cast<std::size_t>(i) * dim(1) + j]; }
  T at(int i, int j) const { return data[static_cast<std::size_t>(i) * dim(1) + j]; }
  T& at(int i, int j, int k) {
    return data[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
  }
  T at(int i, int j, int k) const {
    return data[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
  }
  T& at(int i, int j, int k, int l) {
    return data[((static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k) * dim(3) + l];
  }
  T at(int i, int j, int k, int l) const {
    return data[((static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k) * dim(3) + l];
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  bool all_finite() const {
    for (T v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }

  // Bitwise equality; NaNs would compare unequal but finite data is an
  // invariant everywhere this is used.
  bool operator==(const Tensor& other) const {
    return shape == other.shape &&
           std::memcmp(data.data(), other.data.data(), data.size() * sizeof(T)) == 0;
  }

  std::string shape_string() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) os << ',';
      os << shape[i];
    }
    os << ')';
    return os.str();
  }
};

using TensorF = Tensor<float>;

inline bool same_shape(const std::vector<int>& a, const std::vector<int>& b) {
  return a == b;
}

}  // namespace xfer
