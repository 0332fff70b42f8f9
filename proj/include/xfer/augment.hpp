#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "xfer/dataset.hpp"

namespace xfer {

struct AugmentConfig {
  double brightness_lo = 0.8;
  double brightness_hi = 1.2;
  double flip_probability = 0.5;
  int output_size = 32;

  void validate() const {
    if (!(brightness_lo > 0.0) || !(brightness_lo <= brightness_hi)) {
      throw std::invalid_argument("brightness range requires 0 < lo <= hi");
    }
    if (flip_probability < 0.0 || flip_probability > 1.0) {
      throw std::invalid_argument("flip_probability must lie in [0,1]");
    }
    if (output_size < 1) throw std::invalid_argument("output_size must be positive");
  }
};

// p -> min(1, p * factor); label untouched.
inline LabeledImage brightness_adjust(const LabeledImage& image, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor)) {
    throw std::invalid_argument("brightness factor must be positive and finite");
  }
  LabeledImage out = image;
  for (float& p : out.pixels.data) {
    p = static_cast<float>(std::min(1.0, static_cast<double>(p) * factor));
  }
  return out;
}

// Horizontal mirror when rng_draw < p.
inline LabeledImage random_flip(const LabeledImage& image, double rng_draw, double p) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("flip probability must lie in [0,1]");
  if (!(rng_draw < p)) return image;
  LabeledImage out = image;
  const int channels = image.pixels.dim(0);
  const int height = image.pixels.dim(1);
  const int width = image.pixels.dim(2);
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        out.pixels.at(c, y, x) = image.pixels.at(c, y, width - 1 - x);
      }
    }
  }
  return out;
}

// Bilinear resize with half-pixel-center sampling. Values stay inside [0,1]
// because interpolation is a convex combination of inputs.
inline LabeledImage resize(const LabeledImage& image, int size) {
  if (size < 1) throw std::invalid_argument("resize target must be positive");
  const int in_size = image.pixels.dim(1);
  if (size == in_size) return image;

  LabeledImage out;
  out.label = image.label;
  out.source_index = image.source_index;
  const int channels = image.pixels.dim(0);
  out.pixels = Tensor<float>({channels, size, size});
  const double scale = static_cast<double>(in_size) / size;
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < size; ++y) {
      double sy = (y + 0.5) * scale - 0.5;
      double cy = std::min(std::max(sy, 0.0), static_cast<double>(in_size - 1));
      int y0 = static_cast<int>(std::floor(cy));
      int y1 = std::min(y0 + 1, in_size - 1);
      double fy = cy - y0;
      for (int x = 0; x < size; ++x) {
        double sx = (x + 0.5) * scale - 0.5;
        double cx = std::min(std::max(sx, 0.0), static_cast<double>(in_size - 1));
        int x0 = static_cast<int>(std::floor(cx));
        int x1 = std::min(x0 + 1, in_size - 1);
        double fx = cx - x0;
        double top = (1 - fx) * image.pixels.at(c, y0, x0) + fx * image.pixels.at(c, y0, x1);
        double bot = (1 - fx) * image.pixels.at(c, y1, x0) + fx * image.pixels.at(c, y1, x1);
        out.pixels.at(c, y, x) = static_cast<float>((1 - fy) * top + fy * bot);
      }
    }
  }
  return out;
}

}  // namespace xfer
