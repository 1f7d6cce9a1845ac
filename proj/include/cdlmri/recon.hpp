#ifndef CDLMRI_RECON_HPP
#define CDLMRI_RECON_HPP

// Guided reconstruction loop. Each cycle:
//   1. learn coupled dictionaries on a subset of (target, guidance) patches,
//   2. code every target patch jointly with its guidance patch, with error
//      thresholds that shrink linearly over the cycles, and average the
//      denoised patches back into an image,
//   3. restore agreement with the measured k-space samples.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cdlmri/cdl.hpp"
#include "cdlmri/eval.hpp"
#include "cdlmri/image.hpp"
#include "cdlmri/parallel.hpp"
#include "cdlmri/sparse.hpp"
#include "cdlmri/transforms.hpp"

namespace cdlmri {

inline constexpr double kInfiniteWeight = std::numeric_limits<double>::infinity();

/// Linearly decreasing threshold: start at cycle 1, end at cycle T.
struct EpsSchedule {
  double start = 0.0;
  double end = 0.0;

  friend bool operator==(const EpsSchedule&, const EpsSchedule&) = default;
};

struct ReconConfig {
  std::size_t patch_side = 8;
  Eigen::Index K = 512;
  int s_c = 6;
  int s_1 = 2;
  int s_2 = 2;
  int L = 50;
  int T = 60;
  std::size_t stride = 1;
  double nu1 = kInfiniteWeight;  // data-consistency weight; infinity = exact replacement
  EpsSchedule eps_c{0.1, 0.005};
  EpsSchedule eps_1{0.09, 0.004};
  std::size_t training_subset = 0;  // 0 = min(total patches, 10 K)
  std::uint64_t seed = 0;
  OmpMode omp_mode = OmpMode::correlation;
  bool warm_start = true;           // reuse the previous cycle's dictionaries
  int single_sparsity = 0;          // cap for the guidance-free baseline; 0 = s_c + s_1

  std::size_t beta() const { return overlap_count(patch_side, stride); }

  std::size_t effective_subset(std::size_t total) const {
    const std::size_t want = training_subset ? training_subset : static_cast<std::size_t>(10 * K);
    return std::min(want, total);
  }

  int effective_single_sparsity() const { return single_sparsity > 0 ? single_sparsity : s_c + s_1; }

  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("ReconConfig: " + m); };
    if (patch_side == 0 || stride == 0) fail("patch_side and stride must be positive");
    if (patch_side % stride != 0) fail("stride must divide patch_side");
    if (K <= 0) fail("K must be positive");
    if (s_c < 0 || s_1 < 0 || s_2 < 0 || single_sparsity < 0) fail("sparsity caps must be >= 0");
    if (L < 0) fail("L must be >= 0");
    if (T < 1) fail("T must be >= 1");
    if (!(nu1 >= 0.0)) fail("nu1 must be >= 0 or infinite");
    for (const auto& s : {eps_c, eps_1})
      if (!(s.start >= s.end && s.end >= 0.0)) fail("threshold schedules need start >= end >= 0");
  }

  friend bool operator==(const ReconConfig&, const ReconConfig&) = default;
};

/// start + (t-1)/(T-1) (end - start); the start value when T == 1.
inline double epsilon_at(const EpsSchedule& s, int t, int T) {
  if (T < 1 || t < 1 || t > T) throw std::invalid_argument("epsilon_at: cycle index out of range");
  if (T == 1) return s.start;
  if (t == T) return s.end;
  return s.start + (static_cast<double>(t - 1) / static_cast<double>(T - 1)) * (s.end - s.start);
}

struct DenoiseResult {
  ContrastImage image;                 // averaged denoised patches
  std::vector<double> patch_residual;  // ||target patch - denoised patch||^2
  std::vector<StopReason> target_stop; // stop reason of the last OMP run on each target patch

  double mean_residual() const {
    double s = 0.0;
    for (double r : patch_residual) s += r;
    return patch_residual.empty() ? 0.0 : s / static_cast<double>(patch_residual.size());
  }
};

/// Codes every patch of the target with its guidance partner: z by joint OMP
/// under (s_c, eps_c), then u by OMP on the target residual under
/// (s_1, eps_1). Denoised patches Psi_c z + Psi u are averaged into an image.
inline DenoiseResult denoise_stage(const ContrastImage& x1, const ContrastImage& x2, const CoupledDictionary& dict,
                                   const ReconConfig& cfg, double eps_c, double eps_1) {
  require_same_shape(x1, x2, "denoise_stage");
  detail::check_patch_geometry(x1.rows(), x1.cols(), cfg.patch_side, cfg.stride);
  const auto n = static_cast<Eigen::Index>(cfg.patch_side * cfg.patch_side);
  if (!dict.shapes_consistent() || dict.n() != n)
    throw std::invalid_argument("denoise_stage: dictionary does not match the patch size");

  const SparseCoder common(dict.stacked_common(), cfg.omp_mode);
  const SparseCoder unique(dict.psi, cfg.omp_mode);

  PatchMatrix pm;
  pm.patch_side = cfg.patch_side;
  pm.stride = cfg.stride;
  pm.source_rows = x1.rows();
  pm.source_cols = x1.cols();
  const std::size_t count = (x1.rows() / cfg.stride) * (x1.cols() / cfg.stride);
  pm.columns.resize(n, static_cast<Eigen::Index>(count));

  DenoiseResult out;
  out.patch_residual.resize(count);
  out.target_stop.resize(count);
  parallel_for(count, [&](std::size_t p) {
    const auto [r0, c0] = pm.corner(p);
    Eigen::VectorXd pair(2 * n);
    read_patch(x1, r0, c0, cfg.patch_side, pair.head(n));
    read_patch(x2, r0, c0, cfg.patch_side, pair.tail(n));
    const Eigen::VectorXd z = common.code(pair, cfg.s_c, eps_c).dense();
    const Eigen::VectorXd target_residual = pair.head(n) - dict.psi_c * z;
    Eigen::VectorXd left;
    const SparseCode u = unique.code(target_residual, cfg.s_1, eps_1, &left);
    pm.columns.col(static_cast<Eigen::Index>(p)) = pair.head(n) - left;
    out.patch_residual[p] = u.residual_energy;
    out.target_stop[p] = u.stop;
  });
  out.image = aggregate_patches(pm);
  return out;
}

/// Closed-form data-consistency update in k-space. Off Omega the DFT of the
/// denoised image passes through; on Omega it is blended with the
/// measurements using weight nu1 / beta (replaced outright when nu1 is
/// infinite). Returns the complex image before taking the magnitude.
inline ComplexGrid kspace_consistency_complex(const ContrastImage& x_hat, const Measurements& y, double nu1,
                                              std::size_t beta) {
  if (!(nu1 >= 0.0)) throw std::invalid_argument("kspace_consistency: nu1 must be >= 0");
  if (beta == 0) throw std::invalid_argument("kspace_consistency: beta must be positive");
  if (x_hat.rows() != y.mask.rows || x_hat.cols() != y.mask.cols)
    throw std::invalid_argument("kspace_consistency: image and mask shapes differ");
  if (y.values.size() != y.mask.count())
    throw std::invalid_argument("kspace_consistency: measurement count does not match the mask");

  KSpaceGrid k = dft2(x_hat);
  const double w = nu1 / static_cast<double>(beta);
  std::size_t j = 0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    if (!y.mask.sampled[i]) continue;
    const Complex m = y.values[j++];
    k.values[i] = std::isinf(w) ? m : (k.values[i] + w * m) / (1.0 + w);
  }
  return idft2(k);
}

inline ContrastImage kspace_consistency(const ContrastImage& x_hat, const Measurements& y, double nu1,
                                        std::size_t beta) {
  return magnitude(kspace_consistency_complex(x_hat, y, nu1, beta));
}

/// Largest |(F x)_pq - y_pq| over the sampled locations.
inline double max_consistency_error(const ComplexGrid& x, const Measurements& y) {
  const KSpaceGrid k = dft2(x);
  double worst = 0.0;
  std::size_t j = 0;
  for (std::size_t i = 0; i < k.size(); ++i)
    if (y.mask.sampled[i]) worst = std::max(worst, std::abs(k.values[i] - y.values[j++]));
  return worst;
}

struct CycleRecord {
  int cycle = 0;
  double eps_c = 0.0;
  double eps_1 = 0.0;
  double psnr = std::numeric_limits<double>::quiet_NaN();  // NaN without ground truth
  double residual = 0.0;           // mean squared patch residual after denoising
  double consistency_error = 0.0;  // max k-space mismatch on Omega, pre-magnitude
  double millis = 0.0;
};

using ReconTrace = std::vector<CycleRecord>;

struct ReconResult {
  ContrastImage image;    // final magnitude reconstruction
  ComplexGrid complex_image;  // final reconstruction before the magnitude
  ReconTrace trace;
  CoupledDictionary dictionary;     // guided runs
  Eigen::MatrixXd single_dictionary;  // guidance-free runs
};

/// Per-cycle seed for the training subset.
inline std::uint64_t cycle_seed(std::uint64_t seed, int t) {
  return seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(t);
}

/// Guided reconstruction from target measurements and a fully sampled,
/// registered guidance image. `ground_truth`, when given, only feeds the
/// PSNR column of the trace.
inline ReconResult reconstruct(const Measurements& y, const ContrastImage& guidance, const ReconConfig& cfg,
                               const ContrastImage* ground_truth = nullptr) {
  cfg.validate();
  if (guidance.rows() != y.mask.rows || guidance.cols() != y.mask.cols)
    throw std::invalid_argument("reconstruct: guidance and measurement shapes differ");
  if (ground_truth) require_same_shape(*ground_truth, guidance, "reconstruct");

  const ContrastImage x2 = normalize(guidance);
  const std::size_t beta = cfg.beta();
  const std::size_t lattice = (guidance.rows() / cfg.stride) * (guidance.cols() / cfg.stride);

  ReconResult result;
  result.complex_image = zero_filled_complex(y);
  result.image = magnitude(result.complex_image);

  TrainConfig tc;
  tc.K = cfg.K;
  tc.s_c = cfg.s_c;
  tc.s_1 = cfg.s_1;
  tc.s_2 = cfg.s_2;
  tc.iterations = cfg.L;
  tc.mode = cfg.omp_mode;

  for (int t = 1; t <= cfg.T; ++t) {
    const auto start = std::chrono::steady_clock::now();
    CycleRecord rec;
    rec.cycle = t;
    rec.eps_c = epsilon_at(cfg.eps_c, t, cfg.T);
    rec.eps_1 = epsilon_at(cfg.eps_1, t, cfg.T);

    const auto seed = cycle_seed(cfg.seed, t);
    const TrainingSet ts = make_training_set(result.image, x2, cfg.patch_side, cfg.stride,
                                             cfg.effective_subset(lattice), seed);
    tc.seed = seed;
    const bool warm = cfg.warm_start && t > 1;
    result.dictionary = train(ts, tc, warm ? &result.dictionary : nullptr).dictionary;

    const DenoiseResult dn = denoise_stage(result.image, x2, result.dictionary, cfg, rec.eps_c, rec.eps_1);
    rec.residual = dn.mean_residual();

    result.complex_image = kspace_consistency_complex(dn.image, y, cfg.nu1, beta);
    result.image = magnitude(result.complex_image);
    rec.consistency_error = max_consistency_error(result.complex_image, y);
    if (ground_truth) rec.psnr = psnr(*ground_truth, result.image);
    rec.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.trace.push_back(rec);
  }
  return result;
}

/// Same loop without guidance: one dictionary Psi, patches coded against it
/// alone with cap effective_single_sparsity() and the eps_1 schedule.
inline ReconResult reconstruct_single_contrast(const Measurements& y, const ReconConfig& cfg,
                                               const ContrastImage* ground_truth = nullptr) {
  cfg.validate();
  if (ground_truth && (ground_truth->rows() != y.mask.rows || ground_truth->cols() != y.mask.cols))
    throw std::invalid_argument("reconstruct_single_contrast: ground truth shape differs");

  const std::size_t beta = cfg.beta();
  const std::size_t rows = y.mask.rows, cols = y.mask.cols;
  const std::size_t lattice = (rows / cfg.stride) * (cols / cfg.stride);
  const int sparsity = cfg.effective_single_sparsity();

  ReconResult result;
  result.complex_image = zero_filled_complex(y);
  result.image = magnitude(result.complex_image);

  for (int t = 1; t <= cfg.T; ++t) {
    const auto start = std::chrono::steady_clock::now();
    CycleRecord rec;
    rec.cycle = t;
    rec.eps_c = 0.0;
    rec.eps_1 = epsilon_at(cfg.eps_1, t, cfg.T);

    const auto seed = cycle_seed(cfg.seed, t);
    const TrainingSet ts = make_training_set(result.image, result.image, cfg.patch_side, cfg.stride,
                                             cfg.effective_subset(lattice), seed);
    const bool warm = cfg.warm_start && t > 1;
    result.single_dictionary =
        train_single(ts.X1, cfg.K, sparsity, cfg.L, cfg.omp_mode, seed, warm ? &result.single_dictionary : nullptr)
            .dictionary;

    const SparseCoder coder(result.single_dictionary, cfg.omp_mode);
    PatchMatrix pm = extract_patches(result.image, cfg.patch_side, cfg.stride);
    std::vector<double> residual(pm.count());
    parallel_for(pm.count(), [&](std::size_t p) {
      Eigen::VectorXd left;
      const auto col = static_cast<Eigen::Index>(p);
      const SparseCode c = coder.code(pm.columns.col(col), sparsity, rec.eps_1, &left);
      pm.columns.col(col) -= left;
      residual[p] = c.residual_energy;
    });
    double total = 0.0;
    for (double r : residual) total += r;
    rec.residual = residual.empty() ? 0.0 : total / static_cast<double>(residual.size());

    result.complex_image = kspace_consistency_complex(aggregate_patches(pm), y, cfg.nu1, beta);
    result.image = magnitude(result.complex_image);
    rec.consistency_error = max_consistency_error(result.complex_image, y);
    if (ground_truth) rec.psnr = psnr(*ground_truth, result.image);
    rec.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.trace.push_back(rec);
  }
  return result;
}

}  // namespace cdlmri

#endif  // CDLMRI_RECON_HPP
