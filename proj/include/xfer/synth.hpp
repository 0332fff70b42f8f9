#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "xfer/dataset.hpp"
#include "xfer/rng.hpp"

// Deterministic renderer for fundus-like synthetic tasks. The two retinal
// tasks share a branching vessel tree (keyed without the task id, so the same
// (seed,label,index) yields the same tree in both); the pretext task renders
// class-indexed textures with no retinal features at all. Disease markers:
// dark dot clusters for the DR analog, one bright thick arc for the ROP
// analog.

namespace xfer {

namespace synth {

inline constexpr double kDiscRadius = 0.47;
inline constexpr double kNoiseAmplitude = 0.02;

struct Bezier {
  double x0, y0, x1, y1, x2, y2;  // normalized [0,1] coords
  double w0, w1;                  // stroke half-width in pixels
};

struct VesselTree {
  double root_x = 0, root_y = 0;
  std::vector<Bezier> branches;
};

struct ArcGeometry {
  double cx, cy;      // normalized arc center
  double radius;      // normalized
  double angle0, span;
  double width_px;    // stroke half-width in pixels
};

// Vessel geometry is keyed on (seed, label, index) only; the task id is
// deliberately absent so SourceDR and TargetROP share vessels exactly.
inline VesselTree vessel_tree(const TaskSpec& spec, int label, long index) {
  VesselTree tree;
  Rng rng(derive_key(spec.seed, rngtag::kVessel, static_cast<std::uint64_t>(label),
                     static_cast<std::uint64_t>(index)));
  const double theta0 = rng.uniform(0.0, 2.0 * M_PI);
  tree.root_x = 0.5 + 0.24 * std::cos(theta0);
  tree.root_y = 0.5 + 0.24 * std::sin(theta0);

  const int n_branches = 4 + static_cast<int>(rng.uniform_index(3));  // 4..6
  const double inward = theta0 + M_PI;
  for (int b = 0; b < n_branches; ++b) {
    double frac = n_branches > 1 ? static_cast<double>(b) / (n_branches - 1) - 0.5 : 0.0;
    double angle = inward + 1.9 * frac + rng.uniform(-0.12, 0.12);
    double len = rng.uniform(0.42, 0.62);
    double curve = rng.uniform(-0.16, 0.16);
    double dx = std::cos(angle), dy = std::sin(angle);
    double ex = tree.root_x + len * dx, ey = tree.root_y + len * dy;
    // keep endpoints inside the disc
    double er = std::hypot(ex - 0.5, ey - 0.5);
    if (er > kDiscRadius * 0.9) {
      double scale = kDiscRadius * 0.9 / er;
      ex = 0.5 + (ex - 0.5) * scale;
      ey = 0.5 + (ey - 0.5) * scale;
    }
    double mx = 0.5 * (tree.root_x + ex) - curve * dy;
    double my = 0.5 * (tree.root_y + ey) + curve * dx;
    tree.branches.push_back({tree.root_x, tree.root_y, mx, my, ex, ey, 1.4, 0.8});

    // one child branch per main branch, splitting partway along
    double t = rng.uniform(0.45, 0.7);
    double bx = (1 - t) * (1 - t) * tree.root_x + 2 * t * (1 - t) * mx + t * t * ex;
    double by = (1 - t) * (1 - t) * tree.root_y + 2 * t * (1 - t) * my + t * t * ey;
    double side = rng.uniform() < 0.5 ? 1.0 : -1.0;
    double cangle = angle + side * rng.uniform(0.35, 0.8);
    double clen = len * rng.uniform(0.35, 0.55);
    double cex = bx + clen * std::cos(cangle), cey = by + clen * std::sin(cangle);
    double cer = std::hypot(cex - 0.5, cey - 0.5);
    if (cer > kDiscRadius * 0.9) {
      double scale = kDiscRadius * 0.9 / cer;
      cex = 0.5 + (cex - 0.5) * scale;
      cey = 0.5 + (cey - 0.5) * scale;
    }
    double cmx = 0.5 * (bx + cex) + rng.uniform(-0.05, 0.05);
    double cmy = 0.5 * (by + cey) + rng.uniform(-0.05, 0.05);
    tree.branches.push_back({bx, by, cmx, cmy, cex, cey, 0.9, 0.6});
  }
  return tree;
}

inline ArcGeometry ridge_geometry(const TaskSpec& spec, long index) {
  Rng rng(derive_key(spec.seed, rngtag::kLesion,
                     static_cast<std::uint64_t>(TaskId::TargetROP),
                     static_cast<std::uint64_t>(1), static_cast<std::uint64_t>(index)));
  ArcGeometry g;
  g.cx = 0.5 + rng.uniform(-0.06, 0.06);
  g.cy = 0.5 + rng.uniform(-0.06, 0.06);
  g.radius = rng.uniform(0.18, 0.30);
  g.angle0 = rng.uniform(0.0, 2.0 * M_PI);
  g.span = rng.uniform(1.3, 2.2);
  g.width_px = rng.uniform(1.2, 1.8);
  return g;
}

// Stamp all pixels within `half_width` pixels of (px,py) into `mask`,
// restricted to the disc interior.
inline void stamp_disc_point(std::vector<char>& mask, int size, double px, double py,
                             double half_width) {
  const double margin = kDiscRadius * size - 1.5;
  int lo_x = static_cast<int>(std::floor(px - half_width - 1));
  int hi_x = static_cast<int>(std::ceil(px + half_width + 1));
  int lo_y = static_cast<int>(std::floor(py - half_width - 1));
  int hi_y = static_cast<int>(std::ceil(py + half_width + 1));
  for (int y = std::max(0, lo_y); y <= std::min(size - 1, hi_y); ++y) {
    for (int x = std::max(0, lo_x); x <= std::min(size - 1, hi_x); ++x) {
      double cx = x + 0.5, cy = y + 0.5;
      if (std::hypot(cx - px, cy - py) > half_width) continue;
      double dc = std::hypot(cx - 0.5 * size, cy - 0.5 * size);
      if (dc >= margin) continue;
      mask[static_cast<std::size_t>(y) * size + x] = 1;
    }
  }
}

inline void stamp_bezier(std::vector<char>& mask, int size, const Bezier& b) {
  const int samples = 64;
  for (int i = 0; i <= samples; ++i) {
    double t = static_cast<double>(i) / samples;
    double omt = 1.0 - t;
    double px = (omt * omt * b.x0 + 2 * t * omt * b.x1 + t * t * b.x2) * size;
    double py = (omt * omt * b.y0 + 2 * t * omt * b.y1 + t * t * b.y2) * size;
    stamp_disc_point(mask, size, px, py, b.w0 + (b.w1 - b.w0) * t);
  }
}

inline std::vector<char> rasterize_vessel_mask(const TaskSpec& spec, int label, long index) {
  std::vector<char> mask(static_cast<std::size_t>(spec.image_size) * spec.image_size, 0);
  if (spec.shared_feature_strength <= 0.0) return mask;
  VesselTree tree = vessel_tree(spec, label, index);
  for (const auto& b : tree.branches) stamp_bezier(mask, spec.image_size, b);
  return mask;
}

inline std::vector<char> rasterize_ridge_mask(const TaskSpec& spec, long index) {
  std::vector<char> mask(static_cast<std::size_t>(spec.image_size) * spec.image_size, 0);
  ArcGeometry g = ridge_geometry(spec, index);
  const int samples = 96;
  for (int i = 0; i <= samples; ++i) {
    double a = g.angle0 + g.span * static_cast<double>(i) / samples;
    double px = (g.cx + g.radius * std::cos(a)) * spec.image_size;
    double py = (g.cy + g.radius * std::sin(a)) * spec.image_size;
    stamp_disc_point(mask, spec.image_size, px, py, g.width_px);
  }
  return mask;
}

struct DotCluster {
  std::vector<double> xs, ys, radii;  // pixel units
};

inline DotCluster dot_cluster(const TaskSpec& spec, long index) {
  Rng rng(derive_key(spec.seed, rngtag::kLesion,
                     static_cast<std::uint64_t>(TaskId::SourceDR),
                     static_cast<std::uint64_t>(1), static_cast<std::uint64_t>(index)));
  DotCluster c;
  double angle = rng.uniform(0.0, 2.0 * M_PI);
  double dist = rng.uniform(0.08, 0.28);
  double cx = 0.5 + dist * std::cos(angle), cy = 0.5 + dist * std::sin(angle);
  int n = 4 + static_cast<int>(rng.uniform_index(4));  // 4..7 dots
  for (int i = 0; i < n; ++i) {
    double oa = rng.uniform(0.0, 2.0 * M_PI);
    double od = rng.uniform(0.0, 0.10);
    c.xs.push_back((cx + od * std::cos(oa)) * spec.image_size);
    c.ys.push_back((cy + od * std::sin(oa)) * spec.image_size);
    c.radii.push_back(rng.uniform(0.9, 1.6));
  }
  return c;
}

// Class-indexed texture palette for the pretext task.
inline void pretext_pattern(const TaskSpec& spec, int label, long index, Tensor<float>& img) {
  const int size = spec.image_size;
  Rng rng(derive_key(spec.seed, rngtag::kTexture, static_cast<std::uint64_t>(label),
                     static_cast<std::uint64_t>(index)));
  const double freq = rng.uniform(1.5, 4.0);
  const double phase = rng.uniform(0.0, 2.0 * M_PI);
  const double phase2 = rng.uniform(0.0, 2.0 * M_PI);
  const double alpha = rng.uniform(0.2, 0.8);
  static const double palette[8][3] = {
      {1.00, 0.75, 0.55}, {0.55, 1.00, 0.75}, {0.55, 0.75, 1.00}, {1.00, 1.00, 0.60},
      {1.00, 0.60, 1.00}, {0.60, 1.00, 1.00}, {0.85, 0.85, 0.85}, {0.95, 0.65, 0.75}};
  const double* tint = palette[label % 8];
  const int pattern = label % 8;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double u = (x + 0.5) / size, v = (y + 0.5) / size;
      double val = 0.5;
      switch (pattern) {
        case 0: val = 0.5 + 0.35 * std::sin(2 * M_PI * freq * v + phase); break;
        case 1: val = 0.5 + 0.35 * std::sin(2 * M_PI * freq * u + phase); break;
        case 2: val = 0.5 + 0.35 * std::sin(2 * M_PI * freq * (u + v) + phase); break;
        case 3:
          val = (std::sin(2 * M_PI * freq * u + phase) *
                     std::sin(2 * M_PI * freq * v + phase2) >
                 0)
                    ? 0.78
                    : 0.22;
          break;
        case 4: {
          double d = std::hypot(u - 0.5, v - 0.5);
          val = 0.5 + 0.35 * std::sin(2 * M_PI * (freq + 1.0) * d * 2 + phase);
          break;
        }
        case 5: {
          double a = std::atan2(v - 0.5, u - 0.5);
          val = 0.5 + 0.35 * std::sin(std::round(freq + 2.0) * a + phase);
          break;
        }
        case 6:
          val = (std::sin(2 * M_PI * freq * u + phase) *
                         std::sin(2 * M_PI * freq * v + phase2) >
                     0.45
                 ? 0.8
                 : 0.3);
          break;
        default: val = 0.2 + 0.6 * (alpha * u + (1 - alpha) * v); break;
      }
      for (int c = 0; c < 3; ++c) {
        img.at(c, y, x) = static_cast<float>(val * tint[c]);
      }
    }
  }
}

}  // namespace synth

inline LabeledImage generate_image(const TaskSpec& spec, int label, long index) {
  if (label < 0 || label >= spec.num_classes) {
    throw std::invalid_argument("label out of range for task");
  }
  if (index < 0) throw std::invalid_argument("image index must be non-negative");

  const int size = spec.image_size;
  LabeledImage out;
  out.label = label;
  out.source_index = index;
  out.pixels = Tensor<float>({3, size, size});
  Tensor<float>& img = out.pixels;

  if (spec.task_id == TaskId::GenericPretext) {
    synth::pretext_pattern(spec, label, index, img);
  } else {
    // Disc background with radial shading plus a bright blob at the vessel
    // root (the optic-disc analog).
    synth::VesselTree tree = synth::vessel_tree(spec, label, index);
    const double R = synth::kDiscRadius;
    const double base[3] = {0.80, 0.45, 0.22};
    const double outside[3] = {0.02, 0.02, 0.03};
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        double u = (x + 0.5) / size, v = (y + 0.5) / size;
        double d = std::hypot(u - 0.5, v - 0.5);
        if (d >= R) {
          for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(outside[c]);
          continue;
        }
        double shade = 1.0 - 0.35 * (d / R) * (d / R);
        double blob = std::exp(-std::pow(std::hypot(u - tree.root_x, v - tree.root_y) / 0.055, 2.0));
        img.at(0, y, x) = static_cast<float>(base[0] * shade + 0.16 * blob);
        img.at(1, y, x) = static_cast<float>(base[1] * shade + 0.14 * blob);
        img.at(2, y, x) = static_cast<float>(base[2] * shade + 0.09 * blob);
      }
    }

    // Shared vessel feature; contrast scales with shared_feature_strength.
    if (spec.shared_feature_strength > 0.0) {
      std::vector<char> vmask(static_cast<std::size_t>(size) * size, 0);
      for (const auto& b : tree.branches) synth::stamp_bezier(vmask, size, b);
      const double s = spec.shared_feature_strength;
      const double darken[3] = {1.0 - s * 0.35, 1.0 - s * 0.70, 1.0 - s * 0.50};
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          if (!vmask[static_cast<std::size_t>(y) * size + x]) continue;
          for (int c = 0; c < 3; ++c) {
            img.at(c, y, x) = static_cast<float>(img.at(c, y, x) * darken[c]);
          }
        }
      }
    }

    if (label == 1) {
      if (spec.task_id == TaskId::SourceDR) {
        // DR positive: a cluster of small dark dots.
        synth::DotCluster dots = synth::dot_cluster(spec, index);
        std::vector<char> dmask(static_cast<std::size_t>(size) * size, 0);
        for (std::size_t i = 0; i < dots.xs.size(); ++i) {
          synth::stamp_disc_point(dmask, size, dots.xs[i], dots.ys[i], dots.radii[i]);
        }
        for (int y = 0; y < size; ++y) {
          for (int x = 0; x < size; ++x) {
            if (!dmask[static_cast<std::size_t>(y) * size + x]) continue;
            img.at(0, y, x) *= 0.45f;
            img.at(1, y, x) *= 0.35f;
            img.at(2, y, x) *= 0.40f;
          }
        }
      } else {
        // ROP positive: one bright thick arc (the ridge).
        std::vector<char> rmask = synth::rasterize_ridge_mask(spec, index);
        for (int y = 0; y < size; ++y) {
          for (int x = 0; x < size; ++x) {
            if (!rmask[static_cast<std::size_t>(y) * size + x]) continue;
            img.at(0, y, x) += 0.30f;
            img.at(1, y, x) += 0.34f;
            img.at(2, y, x) += 0.30f;
          }
        }
      }
    }
  }

  // Seeded per-task noise, then clamp into [0,1].
  Rng noise(derive_key(spec.seed, rngtag::kNoise, static_cast<std::uint64_t>(spec.task_id),
                       static_cast<std::uint64_t>(label), static_cast<std::uint64_t>(index)));
  for (float& p : img.data) {
    double n = noise.uniform(-synth::kNoiseAmplitude, synth::kNoiseAmplitude);
    double v = static_cast<double>(p) + n;
    p = static_cast<float>(std::min(1.0, std::max(0.0, v)));
  }
  return out;
}

inline Dataset generate_dataset(const TaskSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.spec = spec;
  if (spec.binary()) {
    long idx = 0;
    for (long i = 0; i < spec.negative_count; ++i) ds.items.push_back(generate_image(spec, 0, idx++));
    for (long i = 0; i < spec.positive_count; ++i) ds.items.push_back(generate_image(spec, 1, idx++));
  } else {
    long idx = 0;
    for (int c = 0; c < spec.num_classes; ++c) {
      for (long i = 0; i < spec.items_per_class; ++i) {
        ds.items.push_back(generate_image(spec, c, idx++));
      }
    }
  }
  return ds;
}

}  // namespace xfer
