#include <random>

#include <gtest/gtest.h>

#include "cdlmri/recon.hpp"
#include "oracles.hpp"

using namespace cdlmri;

namespace {

ContrastImage random_image(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ContrastImage img(rows, cols);
  for (auto& v : img.values()) v = u(gen);
  return img;
}

ReconConfig small_config() {
  ReconConfig cfg;
  cfg.patch_side = 4;
  cfg.K = 16;
  cfg.s_c = 3;
  cfg.s_1 = cfg.s_2 = 1;
  cfg.L = 2;
  cfg.T = 2;
  cfg.training_subset = 200;
  cfg.seed = 3;
  return cfg;
}

// psi_c = phi_c = I / sqrt(2), psi = phi = I: every patch pair is exactly
// representable with n common atoms plus n unique ones.
CoupledDictionary identity_dictionary(Eigen::Index n) {
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  return {I / std::sqrt(2.0), I / std::sqrt(2.0), I, I};
}

}  // namespace

TEST(EpsilonAt, Endpoints) {
  const EpsSchedule c{0.1, 0.005}, one{0.09, 0.004};
  EXPECT_EQ(epsilon_at(c, 1, 60), 0.1);
  EXPECT_EQ(epsilon_at(c, 60, 60), 0.005);
  EXPECT_EQ(epsilon_at(one, 1, 60), 0.09);
  EXPECT_EQ(epsilon_at(one, 60, 60), 0.004);
}

TEST(EpsilonAt, Midpoint) {
  EXPECT_NEAR(epsilon_at({0.09, 0.004}, 30, 60), 0.09 + (29.0 / 59.0) * (-0.086), 1e-15);
  EXPECT_NEAR(epsilon_at({0.09, 0.004}, 30, 60), 0.047728813559322, 1e-12);
}

TEST(EpsilonAt, SingleCycleAndRange) {
  EXPECT_EQ(epsilon_at({0.1, 0.005}, 1, 1), 0.1);
  EXPECT_THROW(epsilon_at({0.1, 0.005}, 0, 5), std::invalid_argument);
  EXPECT_THROW(epsilon_at({0.1, 0.005}, 6, 5), std::invalid_argument);
}

TEST(EpsilonAt, NonIncreasing) {
  for (int t = 2; t <= 60; ++t) EXPECT_LE(epsilon_at({0.1, 0.005}, t, 60), epsilon_at({0.1, 0.005}, t - 1, 60));
}

TEST(ReconConfig, PublishedDefaults) {
  const ReconConfig cfg;
  EXPECT_EQ(cfg.patch_side, 8u);
  EXPECT_EQ(cfg.K, 512);
  EXPECT_EQ(cfg.L, 50);
  EXPECT_EQ(cfg.T, 60);
  EXPECT_EQ(cfg.s_c, 6);
  EXPECT_EQ(cfg.s_1, 2);
  EXPECT_EQ(cfg.s_2, 2);
  EXPECT_EQ(cfg.beta(), 64u);
  EXPECT_TRUE(std::isinf(cfg.nu1));
  EXPECT_EQ(cfg.effective_subset(65536), 5120u);
  EXPECT_EQ(cfg.effective_single_sparsity(), 8);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(ReconConfig, Validation) {
  auto bad = [](auto mutate) {
    ReconConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), std::invalid_argument);
  };
  bad([](ReconConfig& c) { c.T = 0; });
  bad([](ReconConfig& c) { c.nu1 = -1.0; });
  bad([](ReconConfig& c) { c.eps_c = {0.001, 0.01}; });
  bad([](ReconConfig& c) { c.eps_1 = {0.1, -0.01}; });
  bad([](ReconConfig& c) { c.stride = 3; });
  bad([](ReconConfig& c) { c.K = 0; });
  bad([](ReconConfig& c) { c.s_1 = -1; });
}

TEST(DenoiseStage, HugeThresholdsGiveZeroImage) {
  const ContrastImage x1 = random_image(8, 8, 1), x2 = random_image(8, 8, 2);
  ReconConfig cfg;
  cfg.patch_side = 2;
  const DenoiseResult r = denoise_stage(x1, x2, identity_dictionary(4), cfg, 1e6, 1e6);
  for (double v : r.image.values()) EXPECT_EQ(v, 0.0);
}

TEST(DenoiseStage, RepresentablePatchesReturnInput) {
  const ContrastImage x1 = random_image(8, 8, 3);
  ReconConfig cfg;
  cfg.patch_side = 2;
  cfg.s_c = 4;
  cfg.s_1 = 4;
  // Same guidance: the common code alone is exact.
  const DenoiseResult same = denoise_stage(x1, x1, identity_dictionary(4), cfg, 0.0, 0.0);
  EXPECT_LE((same.image.vec() - x1.vec()).lpNorm<Eigen::Infinity>(), 1e-9);
  // Different guidance: the unique code takes up what the common part misses.
  const DenoiseResult other = denoise_stage(x1, random_image(8, 8, 4), identity_dictionary(4), cfg, 0.0, 0.0);
  EXPECT_LE((other.image.vec() - x1.vec()).lpNorm<Eigen::Infinity>(), 1e-9);
}

TEST(DenoiseStage, MatchesPerPatchCodingAndRespectsThreshold) {
  std::mt19937_64 gen(5);
  const ContrastImage x1 = random_image(12, 12, 6), x2 = random_image(12, 12, 7);
  ReconConfig cfg;
  cfg.patch_side = 3;
  cfg.s_c = 2;
  cfg.s_1 = 2;
  const Eigen::MatrixXd S = oracle::random_dictionary(gen, 18, 20);
  const CoupledDictionary d{S.topRows(9), S.bottomRows(9), oracle::random_dictionary(gen, 9, 20), Eigen::MatrixXd::Zero(9, 20)};
  const double eps_c = 0.5, eps_1 = 0.25;
  const DenoiseResult r = denoise_stage(x1, x2, d, cfg, eps_c, eps_1);
  const PatchMatrix p1 = extract_patches(x1, 3, 1), p2 = extract_patches(x2, 3, 1);
  ASSERT_EQ(r.patch_residual.size(), p1.count());
  int thresholded = 0, capped = 0;
  for (std::size_t p = 0; p < p1.count(); ++p) {
    const auto col = static_cast<Eigen::Index>(p);
    const SparseCode z = joint_omp(p1.columns.col(col), p2.columns.col(col), d.psi_c, d.phi_c, 2, eps_c);
    const Eigen::VectorXd rest = p1.columns.col(col) - d.psi_c * z.dense();
    const SparseCode u = omp(rest, d.psi, 2, eps_1);
    EXPECT_NEAR(r.patch_residual[p], u.residual_energy, 1e-12);
    if (r.target_stop[p] == StopReason::threshold) {
      EXPECT_LE(r.patch_residual[p], eps_1);
      ++thresholded;
    } else {
      EXPECT_EQ(u.support.size(), 2u);
      ++capped;
    }
  }
  EXPECT_GT(thresholded, 0);
  EXPECT_GT(capped, 0);
}

TEST(DenoiseStage, RejectsMismatchedDictionary) {
  ReconConfig cfg;
  cfg.patch_side = 2;
  EXPECT_THROW(denoise_stage(random_image(8, 8, 1), random_image(8, 8, 2), identity_dictionary(9), cfg, 0.0, 0.0),
               std::invalid_argument);
  EXPECT_THROW(denoise_stage(random_image(8, 8, 1), random_image(8, 4, 2), identity_dictionary(4), cfg, 0.0, 0.0),
               std::invalid_argument);
}

TEST(KSpaceConsistency, InfiniteWeightMatchesMeasurements) {
  const ContrastImage truth = random_image(16, 16, 8);
  const Measurements y = undersample(dft2(truth), make_mask(MaskKind::random2d, 16, 16, 3.0, 1));
  const ComplexGrid out = kspace_consistency_complex(random_image(16, 16, 9), y, kInfiniteWeight, 4);
  EXPECT_LE(max_consistency_error(out, y), 1e-10);
}

TEST(KSpaceConsistency, ZeroWeightIsIdentity) {
  const ContrastImage x_hat = random_image(16, 16, 10);
  const Measurements y = undersample(dft2(random_image(16, 16, 11)), make_mask(MaskKind::cartesian1d, 16, 16, 2.0, 1));
  const ContrastImage out = kspace_consistency(x_hat, y, 0.0, 64);
  EXPECT_LE((out.vec() - x_hat.vec()).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(KSpaceConsistency, FiniteWeightSolvesNormalEquations) {
  // min_x sum_ij |R_ij x - p_ij|^2 + nu |F_u x - y|^2, solved densely with the
  // explicit patch operators and DFT matrix.
  std::mt19937_64 gen(12);
  for (std::size_t N : {4u, 8u}) {
    const std::size_t side = 2, n = side * side, pix = N * N;
    const Eigen::MatrixXcd F = oracle::dft_matrix(N, N);
    const SamplingMask mask = make_mask(MaskKind::random2d, N, N, 2.0, N);
    const Measurements y = undersample(dft2(random_image(N, N, N + 1)), mask);
    // Inconsistent patch estimates, as after sparse coding.
    const Eigen::MatrixXd patches = oracle::random_matrix(gen, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(pix));

    for (double nu : {0.5, 7.0, 300.0}) {
      Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(pix, pix);
      Eigen::VectorXcd b = Eigen::VectorXcd::Zero(pix);
      for (std::size_t r0 = 0; r0 < N; ++r0)
        for (std::size_t c0 = 0; c0 < N; ++c0) {
          const Eigen::MatrixXd R = oracle::patch_operator(N, N, r0, c0, side);
          A += (R.transpose() * R).cast<oracle::Complex>();
          b += (R.transpose() * patches.col(static_cast<Eigen::Index>(r0 * N + c0))).cast<oracle::Complex>();
        }
      std::size_t j = 0;
      for (std::size_t i = 0; i < pix; ++i) {
        if (!mask.sampled[i]) continue;
        const Eigen::RowVectorXcd row = F.row(static_cast<Eigen::Index>(i));
        A += nu * row.adjoint() * row;
        b += nu * row.adjoint() * y.values[j++];
      }
      const Eigen::VectorXcd expect = A.partialPivLu().solve(b);

      PatchMatrix pm = extract_patches(ContrastImage(N, N), side, 1);
      pm.columns = patches;
      const ComplexGrid got = kspace_consistency_complex(aggregate_patches(pm), y, nu, overlap_count(side, 1));
      Eigen::VectorXcd g(pix);
      for (std::size_t i = 0; i < pix; ++i) g(static_cast<Eigen::Index>(i)) = got.values[i];
      EXPECT_LE((g - expect).norm() / expect.norm(), 1e-8) << N << " nu " << nu;
    }
  }
}

TEST(KSpaceConsistency, RejectsBadInput) {
  const Measurements y = undersample(dft2(random_image(8, 8, 1)), make_mask(MaskKind::random2d, 8, 8, 2.0, 1));
  EXPECT_THROW(kspace_consistency(random_image(8, 8, 2), y, -1.0, 4), std::invalid_argument);
  EXPECT_THROW(kspace_consistency(random_image(8, 4, 2), y, 1.0, 4), std::invalid_argument);
}

TEST(Reconstruct, HugeThresholdsSingleCycleGiveZeroFilled) {
  const ContrastImage truth = random_image(16, 16, 13), guide = random_image(16, 16, 14);
  const Measurements y = undersample(dft2(truth), make_mask(MaskKind::cartesian1d, 16, 16, 3.0, 2));
  ReconConfig cfg = small_config();
  cfg.T = 1;
  cfg.eps_c = {1e6, 1e6};
  cfg.eps_1 = {1e6, 1e6};
  const ContrastImage zf = zero_filled_recon(y);
  const ReconResult g = reconstruct(y, guide, cfg);
  EXPECT_LE((g.image.vec() - zf.vec()).lpNorm<Eigen::Infinity>(), 1e-12);
  const ReconResult s = reconstruct_single_contrast(y, cfg);
  EXPECT_LE((s.image.vec() - zf.vec()).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(Reconstruct, FullySampledReturnsTruthEveryCycle) {
  const ContrastImage truth = random_image(16, 16, 15), guide = random_image(16, 16, 16);
  const Measurements y = undersample(dft2(truth), make_mask(MaskKind::random2d, 16, 16, 1.0, 2));
  ReconConfig cfg = small_config();
  cfg.T = 3;
  for (int t = 1; t <= 3; ++t) {
    cfg.T = t;
    const ReconResult g = reconstruct(y, guide, cfg, &truth);
    EXPECT_LE((g.image.vec() - truth.vec()).lpNorm<Eigen::Infinity>(), 1e-10);
    const ReconResult s = reconstruct_single_contrast(y, cfg, &truth);
    EXPECT_LE((s.image.vec() - truth.vec()).lpNorm<Eigen::Infinity>(), 1e-10);
  }
}

TEST(Reconstruct, TraceRecordsEveryCycle) {
  const ContrastImage truth = random_image(16, 16, 17), guide = random_image(16, 16, 18);
  const Measurements y = undersample(dft2(truth), make_mask(MaskKind::random2d, 16, 16, 3.0, 2));
  ReconConfig cfg = small_config();
  cfg.T = 4;
  const ReconResult g = reconstruct(y, guide, cfg, &truth);
  ASSERT_EQ(g.trace.size(), 4u);
  for (std::size_t i = 0; i < g.trace.size(); ++i) {
    const auto& rec = g.trace[i];
    EXPECT_EQ(rec.cycle, static_cast<int>(i) + 1);
    EXPECT_EQ(rec.eps_c, epsilon_at(cfg.eps_c, rec.cycle, 4));
    EXPECT_EQ(rec.eps_1, epsilon_at(cfg.eps_1, rec.cycle, 4));
    EXPECT_TRUE(std::isfinite(rec.psnr));
    EXPECT_LE(rec.consistency_error, 1e-10);
    if (i > 0) EXPECT_LE(rec.eps_c, g.trace[i - 1].eps_c);
  }
  EXPECT_DOUBLE_EQ(g.trace.back().psnr, psnr(truth, g.image));
  for (double v : g.image.values()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_TRUE(std::isnan(reconstruct(y, guide, cfg).trace[0].psnr));
}

TEST(Reconstruct, Deterministic) {
  const ContrastImage truth = random_image(16, 16, 19), guide = random_image(16, 16, 20);
  const Measurements y = undersample(dft2(truth), make_mask(MaskKind::random2d, 16, 16, 3.0, 2));
  const ReconConfig cfg = small_config();
  const ReconResult a = reconstruct(y, guide, cfg), b = reconstruct(y, guide, cfg);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.dictionary, b.dictionary);
  const ReconResult c = reconstruct_single_contrast(y, cfg), d = reconstruct_single_contrast(y, cfg);
  EXPECT_EQ(c.image, d.image);
}

TEST(Reconstruct, RejectsShapeMismatch) {
  const Measurements y = undersample(dft2(random_image(16, 16, 1)), make_mask(MaskKind::random2d, 16, 16, 3.0, 2));
  EXPECT_THROW(reconstruct(y, random_image(16, 8, 2), small_config()), std::invalid_argument);
  ReconConfig bad = small_config();
  bad.T = 0;
  EXPECT_THROW(reconstruct(y, random_image(16, 16, 2), bad), std::invalid_argument);
  EXPECT_THROW(reconstruct_single_contrast(y, bad), std::invalid_argument);
}
