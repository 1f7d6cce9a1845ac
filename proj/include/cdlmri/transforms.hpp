#ifndef CDLMRI_TRANSFORMS_HPP
#define CDLMRI_TRANSFORMS_HPP

// Unitary 2D DFT, Cartesian sampling masks and the undersampling operator.
//
// k-space is stored unshifted: DC sits at (0,0) and frequency index p maps to
// the signed frequency p for p < rows/2 and p - rows otherwise.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <mutex>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <fftw3.h>

#include "cdlmri/image.hpp"

namespace cdlmri {

using Complex = std::complex<double>;

/// Row-major complex grid; used both for k-space and for complex images.
struct ComplexGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Complex> values;

  ComplexGrid() = default;
  ComplexGrid(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c) {}

  Complex& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  Complex operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::size_t size() const { return values.size(); }
};

using KSpaceGrid = ComplexGrid;

inline double energy(const ComplexGrid& g) {
  double e = 0.0;
  for (const auto& v : g.values) e += std::norm(v);
  return e;
}

inline ComplexGrid to_complex(const ContrastImage& img) {
  ComplexGrid g(img.rows(), img.cols());
  for (std::size_t i = 0; i < img.size(); ++i) g.values[i] = img.values()[i];
  return g;
}

inline ContrastImage magnitude(const ComplexGrid& g) {
  ContrastImage out(g.rows, g.cols);
  for (std::size_t i = 0; i < g.size(); ++i) out.values()[i] = std::abs(g.values[i]);
  return out;
}

inline ContrastImage real_part(const ComplexGrid& g) {
  ContrastImage out(g.rows, g.cols);
  for (std::size_t i = 0; i < g.size(); ++i) out.values()[i] = g.values[i].real();
  return out;
}

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// Buffers come from fftw_malloc so alignment, and therefore the chosen
// codelets, never vary between calls.
inline ComplexGrid fft2_unitary(const ComplexGrid& in, int sign) {
  if (in.rows == 0 || in.cols == 0)
    throw std::invalid_argument("dft2: empty grid");
  const std::size_t n = in.size();
  auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
  if (buf == nullptr) throw std::bad_alloc();
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    plan = fftw_plan_dft_2d(static_cast<int>(in.rows), static_cast<int>(in.cols), buf, buf, sign,
                            FFTW_ESTIMATE);
  }
  for (std::size_t i = 0; i < n; ++i) {
    buf[i][0] = in.values[i].real();
    buf[i][1] = in.values[i].imag();
  }
  fftw_execute(plan);
  ComplexGrid out(in.rows, in.cols);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) out.values[i] = Complex(buf[i][0], buf[i][1]) * scale;
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(buf);
  return out;
}

}  // namespace detail

/// Orthonormal forward DFT.
inline KSpaceGrid dft2(const ComplexGrid& x) { return detail::fft2_unitary(x, FFTW_FORWARD); }
inline KSpaceGrid dft2(const ContrastImage& x) { return dft2(to_complex(x)); }

/// Orthonormal inverse DFT.
inline ComplexGrid idft2(const KSpaceGrid& k) { return detail::fft2_unitary(k, FFTW_BACKWARD); }

enum class MaskKind { cartesian1d, random2d };

inline std::string to_string(MaskKind k) { return k == MaskKind::cartesian1d ? "cartesian1d" : "random2d"; }

inline MaskKind parse_mask_kind(const std::string& s) {
  if (s == "cartesian1d") return MaskKind::cartesian1d;
  if (s == "random2d") return MaskKind::random2d;
  throw std::invalid_argument("unknown mask kind '" + s + "'");
}

/// Variable-density law: weight (1 - d/d_max)^power, plus an always-sampled
/// central band (fraction of lines) or disc (radius as fraction of the
/// shorter side).
struct DensityProfile {
  double power = 6.0;
  double center_fraction = 0.04;

  friend bool operator==(const DensityProfile&, const DensityProfile&) = default;
};

struct SamplingMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  MaskKind kind = MaskKind::cartesian1d;
  std::vector<std::uint8_t> sampled;  // row-major, 1 = in Omega

  bool operator()(std::size_t r, std::size_t c) const { return sampled[r * cols + c] != 0; }
  std::size_t count() const { return static_cast<std::size_t>(std::count(sampled.begin(), sampled.end(), 1)); }
  double fold() const { return static_cast<double>(rows * cols) / static_cast<double>(count()); }

  friend bool operator==(const SamplingMask&, const SamplingMask&) = default;
};

namespace detail {

inline double signed_frequency(std::size_t index, std::size_t extent) {
  return index < (extent + 1) / 2 ? static_cast<double>(index)
                                   : static_cast<double>(index) - static_cast<double>(extent);
}

inline double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

// Picks `budget` of the candidates: all `forced` ones first (closest to the
// center), then a weighted sample without replacement of the rest using the
// exponential-key method, so the count is exact and the draw is seeded.
inline std::vector<std::size_t> pick_samples(const std::vector<double>& distance, double d_max,
                                             double center_radius, std::size_t budget,
                                             const DensityProfile& profile, std::uint64_t seed) {
  const std::size_t m = distance.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return distance[a] < distance[b]; });

  std::vector<std::size_t> chosen;
  std::vector<std::uint8_t> taken(m, 0);
  for (std::size_t idx : order) {
    if (chosen.size() >= budget || distance[idx] > center_radius) break;
    chosen.push_back(idx);
    taken[idx] = 1;
  }

  std::mt19937_64 gen(seed);
  std::vector<std::pair<double, std::size_t>> keys;
  keys.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double u = uniform01(gen);
    if (taken[i]) continue;
    const double w = std::pow(std::max(1.0 - distance[i] / d_max, 1e-12), profile.power);
    // log(u)/w orders identically to u^(1/w) without underflow.
    keys.emplace_back(std::log(std::max(u, 1e-300)) / w, i);
  }
  const std::size_t remaining = budget - chosen.size();
  std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(std::min(remaining, keys.size())),
                    keys.end(), [](const auto& a, const auto& b) {
                      return a.first > b.first || (a.first == b.first && a.second < b.second);
                    });
  for (std::size_t i = 0; i < remaining && i < keys.size(); ++i) chosen.push_back(keys[i].second);
  return chosen;
}

}  // namespace detail

/// Seeded variable-density Cartesian mask with exactly round(total/fold)
/// samples (lines for cartesian1d, points for random2d).
inline SamplingMask make_mask(MaskKind kind, std::size_t rows, std::size_t cols, double fold, std::uint64_t seed,
                              const DensityProfile& profile = {}) {
  if (rows == 0 || cols == 0)
    throw std::invalid_argument("make_mask: dimensions must be positive");
  if (!(fold >= 1.0))
    throw std::invalid_argument("make_mask: fold must be >= 1");
  if (fold > static_cast<double>(rows * cols))
    throw std::invalid_argument("make_mask: fold exceeds the number of k-space locations");

  SamplingMask mask{rows, cols, kind, std::vector<std::uint8_t>(rows * cols, 0)};
  if (kind == MaskKind::cartesian1d) {
    // Whole phase-encode rows; each selected row is fully sampled along the readout axis.
    const auto lines = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(rows) / fold)));
    std::vector<double> dist(rows);
    for (std::size_t p = 0; p < rows; ++p) dist[p] = std::abs(detail::signed_frequency(p, rows));
    const double band = std::max(1.0, std::round(profile.center_fraction * static_cast<double>(rows)));
    // Lines with |f| <= (band-1)/2 form the central band.
    const double radius = (band - 1.0) / 2.0;
    const auto picked = detail::pick_samples(dist, static_cast<double>(rows) / 2.0 + 1.0, radius, lines, profile, seed);
    for (std::size_t p : picked)
      std::fill_n(mask.sampled.begin() + static_cast<std::ptrdiff_t>(p * cols), cols, std::uint8_t{1});
  } else {
    const auto points = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(static_cast<double>(rows * cols) / fold)));
    std::vector<double> dist(rows * cols);
    for (std::size_t p = 0; p < rows; ++p) {
      const double fy = detail::signed_frequency(p, rows);
      for (std::size_t q = 0; q < cols; ++q) {
        const double fx = detail::signed_frequency(q, cols);
        dist[p * cols + q] = std::hypot(fy, fx);
      }
    }
    const double d_max = std::hypot(rows / 2.0, cols / 2.0) + 1.0;
    const double radius = profile.center_fraction * static_cast<double>(std::min(rows, cols));
    for (std::size_t i : detail::pick_samples(dist, d_max, radius, points, profile, seed)) mask.sampled[i] = 1;
  }
  return mask;
}

/// k-space values on Omega, in row-major order of the mask.
struct Measurements {
  SamplingMask mask;
  std::vector<Complex> values;
};

inline Measurements undersample(const KSpaceGrid& k, const SamplingMask& mask) {
  if (k.rows != mask.rows || k.cols != mask.cols)
    throw std::invalid_argument("undersample: k-space and mask shapes differ");
  Measurements y{mask, {}};
  y.values.reserve(mask.count());
  for (std::size_t i = 0; i < k.size(); ++i)
    if (mask.sampled[i]) y.values.push_back(k.values[i]);
  return y;
}

/// F F_u^H y: measurements placed on Omega, zeros elsewhere.
inline KSpaceGrid embed(const Measurements& y) {
  if (y.values.size() != y.mask.count())
    throw std::invalid_argument("embed: measurement count does not match the mask");
  KSpaceGrid k(y.mask.rows, y.mask.cols);
  std::size_t j = 0;
  for (std::size_t i = 0; i < k.size(); ++i)
    if (y.mask.sampled[i]) k.values[i] = y.values[j++];
  return k;
}

/// F_u^H y as a complex image.
inline ComplexGrid zero_filled_complex(const Measurements& y) { return idft2(embed(y)); }

/// Magnitude of the zero-filled inverse DFT.
inline ContrastImage zero_filled_recon(const Measurements& y) { return magnitude(zero_filled_complex(y)); }

}  // namespace cdlmri

#endif  // CDLMRI_TRANSFORMS_HPP
