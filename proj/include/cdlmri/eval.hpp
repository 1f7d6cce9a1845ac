#ifndef CDLMRI_EVAL_HPP
#define CDLMRI_EVAL_HPP

// Metrics and the synthetic coupled phantom used for desk-scale runs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdlmri/image.hpp"

namespace cdlmri {

inline double mean_squared_error(const ContrastImage& reference, const ContrastImage& estimate) {
  require_same_shape(reference, estimate, "mean_squared_error");
  return (reference.vec() - estimate.vec()).squaredNorm() / static_cast<double>(reference.size());
}

/// 10 log10(1 / MSE) with unit peak; +infinity for identical images.
inline double psnr(const ContrastImage& reference, const ContrastImage& estimate) {
  const double mse = mean_squared_error(reference, estimate);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

struct ResidualMap {
  ContrastImage absolute;  // |reference - estimate|
  ContrastImage display;   // absolute scaled so its maximum is 1 (all zeros if identical)
};

inline ResidualMap residual_map(const ContrastImage& reference, const ContrastImage& estimate) {
  require_same_shape(reference, estimate, "residual_map");
  ResidualMap out{ContrastImage(reference.rows(), reference.cols()), ContrastImage(reference.rows(), reference.cols())};
  double peak = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = std::abs(reference.values()[i] - estimate.values()[i]);
    out.absolute.values()[i] = d;
    peak = std::max(peak, d);
  }
  if (peak > 0.0)
    for (std::size_t i = 0; i < reference.size(); ++i) out.display.values()[i] = out.absolute.values()[i] / peak;
  return out;
}

/// Binary edge map: central-difference gradient magnitude above `threshold`.
inline std::vector<std::uint8_t> edge_map(const ContrastImage& img, double threshold) {
  const std::size_t R = img.rows(), C = img.cols();
  std::vector<std::uint8_t> edges(R * C, 0);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) {
      const double gx = img(r, (c + 1) % C) - img(r, (c + C - 1) % C);
      const double gy = img((r + 1) % R, c) - img((r + R - 1) % R, c);
      edges[r * C + c] = std::hypot(gx, gy) > threshold ? 1 : 0;
    }
  return edges;
}

struct PhantomPair {
  ContrastImage target;    // T1-like contrast
  ContrastImage guidance;  // T2-like contrast, registered to the target
  std::uint64_t seed = 0;
  std::string description;
  // Pixels of the features present in only one contrast (1 = unique region).
  std::vector<std::uint8_t> unique_mask;
};

namespace detail {

struct Ellipse {
  double cy, cx, ry, rx, angle;

  bool contains(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double u = (dx * ca + dy * sa) / rx;
    const double v = (-dx * sa + dy * ca) / ry;
    return u * u + v * v <= 1.0;
  }
};

// Tissue-class intensity in the guidance contrast as a decreasing function of
// the target intensity (fluid dark in one, bright in the other).
inline double guidance_intensity(double target_value) { return 0.95 - 0.85 * target_value; }

}  // namespace detail

/// Head-like layout of nested ellipses, fluid compartments, thin stripes and
/// small lesions. Both contrasts share every boundary; the guidance value of
/// each region is a decreasing remap of its target value. One lesion exists
/// only in the target and one only in the guidance. A smooth shared bias
/// field makes regions piecewise smooth rather than flat.
inline PhantomPair make_phantom_pair(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  if (rows < 32 || cols < 32) throw std::invalid_argument("make_phantom_pair: dimensions must be >= 32");
  std::mt19937_64 gen(seed);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * (static_cast<double>(gen() >> 11) * 0x1.0p-53); };

  const double H = static_cast<double>(rows), W = static_cast<double>(cols);
  const double cy = H / 2.0, cx = W / 2.0;

  // Region label per pixel; label value -> target intensity.
  std::vector<double> region_value{0.0};  // 0 = background
  std::vector<int> label(rows * cols, 0);
  auto paint = [&](const detail::Ellipse& e, double value) {
    region_value.push_back(value);
    const int id = static_cast<int>(region_value.size()) - 1;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        if (e.contains(static_cast<double>(r) + 0.5, static_cast<double>(c) + 0.5)) label[r * cols + c] = id;
    return id;
  };

  paint({cy, cx, 0.44 * H, 0.36 * W, 0.0}, 0.85);                       // scalp / skull
  paint({cy, cx, 0.40 * H, 0.32 * W, 0.0}, 0.35);                       // cortex
  paint({cy, cx, 0.33 * H, 0.26 * W, 0.0}, 0.62);                       // white matter
  paint({cy - 0.06 * H, cx - 0.07 * W, 0.12 * H, 0.035 * W, 0.25}, 0.08);  // ventricles
  paint({cy - 0.06 * H, cx + 0.07 * W, 0.12 * H, 0.035 * W, -0.25}, 0.08);
  paint({cy + 0.14 * H, cx, 0.05 * H, 0.10 * W, 0.0}, 0.45);            // deep nucleus

  // Thin radial sulci crossing the cortex (fluid filled).
  const int sulci = 10;
  for (int s = 0; s < sulci; ++s) {
    const double a = 2.0 * M_PI * (s + uni(0.1, 0.9)) / sulci;
    const double rad = uni(0.33, 0.37);
    paint({cy + rad * H * std::sin(a), cx + rad * W * 0.8 * std::cos(a), 0.055 * H, 0.012 * W, a}, 0.12);
  }

  // Small lesions with random contrast.
  for (int s = 0; s < 6; ++s) {
    const double a = uni(0.0, 2.0 * M_PI), rr = uni(0.05, 0.22);
    paint({cy + rr * H * std::sin(a), cx + rr * W * std::cos(a), uni(0.015, 0.04) * H, uni(0.015, 0.04) * W,
           uni(0.0, M_PI)},
          uni(0.05, 0.95));
  }

  PhantomPair pair{ContrastImage(rows, cols), ContrastImage(rows, cols), seed,
                   "nested-ellipse head phantom with inverted fluid contrast", std::vector<std::uint8_t>(rows * cols, 0)};

  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const int id = label[r * cols + c];
      const double v = region_value[static_cast<std::size_t>(id)];
      pair.target(r, c) = v;
      pair.guidance(r, c) = id == 0 ? 0.0 : detail::guidance_intensity(v);
    }

  // Contrast-specific features: each is drawn into one image only.
  const detail::Ellipse target_only{cy + 0.02 * H, cx + 0.15 * W, 0.035 * H, 0.05 * W, 0.6};
  const detail::Ellipse guidance_only{cy + 0.02 * H, cx - 0.16 * W, 0.05 * H, 0.03 * W, -0.4};
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double y = static_cast<double>(r) + 0.5, x = static_cast<double>(c) + 0.5;
      if (target_only.contains(y, x)) {
        pair.target(r, c) = 0.95;
        pair.unique_mask[r * cols + c] = 1;
      }
      if (guidance_only.contains(y, x)) {
        pair.guidance(r, c) = 0.98;
        pair.unique_mask[r * cols + c] = 1;
      }
    }

  // Shared smooth bias field.
  const double fy = uni(0.5, 1.5), fx = uni(0.5, 1.5), ph = uni(0.0, 2.0 * M_PI);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double b = 1.0 + 0.12 * std::sin(2.0 * M_PI * (fy * static_cast<double>(r) / H + fx * static_cast<double>(c) / W) + ph);
      pair.target(r, c) *= b;
      pair.guidance(r, c) *= b;
    }

  pair.target = normalize(pair.target);
  pair.guidance = normalize(pair.guidance);
  return pair;
}

}  // namespace cdlmri

#endif  // CDLMRI_EVAL_HPP
