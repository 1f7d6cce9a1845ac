// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "cdlmri/cdl.hpp"
#include "cdlmri/eval.hpp"
#include "cdlmri/io.hpp"
#include "cdlmri/parallel.hpp"
#include "cdlmri/recon.hpp"
#include "oracles.hpp"

using namespace cdlmri;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a = 0, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

ContrastImage random_image(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ContrastImage img(rows, cols);
  for (auto& v : img.values()) v = u(gen);
  return img;
}

Outcome omp_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(20240);
  std::uniform_int_distribution<int> nd(4, 8), kd(1, 10), sd(0, 3);
  double worst = 0.0;
  int mismatched = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const int n = nd(gen), K = kd(gen), s = sd(gen);
    const Eigen::MatrixXd D = oracle::random_dictionary(gen, n, K, 0.3);
    const Eigen::VectorXd x = oracle::random_matrix(gen, n, 1).col(0);
    const auto ref = oracle::greedy_ls(x, D, s, 0.0);
    const SparseCode got = omp(x, D, s, 0.0, OmpMode::exact_ls);
    if (got.support != ref.support) {
      ++mismatched;
      continue;
    }
    for (std::size_t i = 0; i < ref.support.size(); ++i)
      worst = std::max(worst, std::abs(got.coefficients[i] - ref.coefficients(static_cast<Eigen::Index>(i))));
  }
  const double secs = seconds_since(t0);
  return {mismatched == 0 && worst <= 1e-9 && secs < 10.0,
          fmt("support mismatches %.0f, max coefficient error %.2e, %.2f s", mismatched, worst, secs)};
}

Outcome kspace_oracle() {
  std::mt19937_64 gen(12);
  double worst = 0.0;
  for (std::size_t N : {4u, 8u}) {
    const std::size_t side = 2, n = side * side, pix = N * N;
    const Eigen::MatrixXcd F = oracle::dft_matrix(N, N);
    const SamplingMask mask = make_mask(MaskKind::random2d, N, N, 2.0, N);
    const Measurements y = undersample(dft2(random_image(N, N, N + 1)), mask);
    const Eigen::MatrixXd patches =
        oracle::random_matrix(gen, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(pix));
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
      worst = std::max(worst, (g - expect).norm() / expect.norm());
    }
  }
  return {worst <= 1e-8, fmt("max relative error %.2e over 4x4 and 8x8, nu in {0.5, 7, 300}", worst)};
}

ReconConfig desk_config() {
  ReconConfig cfg;
  cfg.K = 64;
  cfg.L = 5;
  cfg.T = 5;
  cfg.training_subset = 2000;
  return cfg;
}

// Naive separable DFT of the sampled entries, independent of the FFT path.
double naive_consistency_error(const ComplexGrid& x, const Measurements& y) {
  const std::size_t R = x.rows, C = x.cols;
  const double scale = 1.0 / std::sqrt(static_cast<double>(R * C));
  std::vector<oracle::Complex> rows_done(R * C);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t q = 0; q < C; ++q) {
      oracle::Complex s = 0.0;
      for (std::size_t c = 0; c < C; ++c)
        s += x.values[r * C + c] * std::polar(1.0, -2.0 * M_PI * static_cast<double>(q * c) / static_cast<double>(C));
      rows_done[r * C + q] = s;
    }
  double worst = 0.0;
  std::size_t j = 0;
  for (std::size_t p = 0; p < R; ++p)
    for (std::size_t q = 0; q < C; ++q) {
      if (!y.mask(p, q)) continue;
      oracle::Complex s = 0.0;
      for (std::size_t r = 0; r < R; ++r)
        s += rows_done[r * C + q] * std::polar(1.0, -2.0 * M_PI * static_cast<double>(p * r) / static_cast<double>(R));
      worst = std::max(worst, std::abs(scale * s - y.values[j++]));
    }
  return worst;
}

Outcome data_consistency() {
  const PhantomPair p = make_phantom_pair(64, 64, 0);
  const Measurements y = undersample(dft2(p.target), make_mask(MaskKind::cartesian1d, 64, 64, 4.0, 0));
  const ReconResult r = reconstruct(y, p.guidance, desk_config(), &p.target);
  double worst = 0.0;
  for (const auto& c : r.trace) worst = std::max(worst, c.consistency_error);
  const double naive = naive_consistency_error(r.complex_image, y);
  return {r.trace.size() == 5 && worst <= 1e-10 && naive <= 1e-10,
          fmt("%.0f cycles, max per-cycle error %.2e, final image by naive DFT %.2e",
              static_cast<double>(r.trace.size()), worst, naive)};
}

struct TrainingRun {
  double worst_violation = -1.0;
  double worst_increase = -1.0;  // relative
  int sweeps = 0;
};

// A full 20-iteration training run driven step by step so both invariants
// can be checked after every sweep.
TrainingRun training_run() {
  const PhantomPair p = make_phantom_pair(64, 64, 0);
  const Measurements y = undersample(dft2(p.target), make_mask(MaskKind::cartesian1d, 64, 64, 4.0, 0));
  const TrainingSet ts = make_training_set(zero_filled_recon(y), p.guidance, 8, 1, 3000, 7);
  CoupledDictionary dict = init_dictionaries(ts, 128, 7);

  auto violation = [](const CoupledDictionary& d) {
    double worst = -1.0;
    for (Eigen::Index k = 0; k < d.K(); ++k) {
      const double joint = std::sqrt(d.psi_c.col(k).squaredNorm() + d.phi_c.col(k).squaredNorm());
      worst = std::max({worst, joint - 1.0, d.psi.col(k).norm() - 1.0, d.phi.col(k).norm() - 1.0});
    }
    return worst;
  };
  auto increase = [](double before, double after) { return (after - before) / std::max(before, 1e-300); };

  TrainingRun out;
  for (int l = 0; l < 20; ++l) {
    const SparseCodeSet codes = sparse_coding_step(ts, dict, 6, 2, 2, OmpMode::correlation);
    const double f0 = fit_objective(ts, dict, codes);
    dict = update_common_atoms(std::move(dict), ts, codes);
    const double f1 = fit_objective(ts, dict, codes);
    out.worst_violation = std::max(out.worst_violation, violation(dict));
    dict = update_unique_atoms(std::move(dict), ts, codes);
    const double f2 = fit_objective(ts, dict, codes);
    out.worst_violation = std::max(out.worst_violation, violation(dict));
    out.worst_increase = std::max({out.worst_increase, increase(f0, f1), increase(f1, f2)});
    dict = replace_dead_atoms(std::move(dict), ts, codes, 1000u + static_cast<std::uint64_t>(l));
    out.worst_violation = std::max(out.worst_violation, violation(dict));
    out.sweeps += 2;
  }
  return out;
}

Outcome guidance_benefit() {
  const auto t0 = Clock::now();
  const PhantomPair p = make_phantom_pair(128, 128, 0);
  const Measurements y = undersample(dft2(p.target), make_mask(MaskKind::cartesian1d, 128, 128, 4.0, 0));
  ReconConfig cfg;
  cfg.K = 128;
  cfg.L = 15;
  cfg.T = 15;
  const double zf = psnr(p.target, zero_filled_recon(y));
  const double guided = psnr(p.target, reconstruct(y, p.guidance, cfg, &p.target).image);
  const double single = psnr(p.target, reconstruct_single_contrast(y, cfg, &p.target).image);
  const double secs = seconds_since(t0);
  return {guided >= single + 1.0 && guided >= zf + 3.0 && secs <= 600.0,
          fmt("guided %.2f dB, single-contrast %.2f dB, zero-filled %.2f dB, %.0f s", guided, single, zf, secs)};
}

Outcome exact_recovery() {
  const PhantomPair p = make_phantom_pair(64, 64, 3);
  const Measurements y = undersample(dft2(p.target), make_mask(MaskKind::cartesian1d, 64, 64, 1.0, 0));
  ReconConfig cfg = desk_config();
  cfg.T = 1;
  const ReconResult r = reconstruct(y, p.guidance, cfg, &p.target);
  const double err = (r.image.vec() - p.target.vec()).lpNorm<Eigen::Infinity>();
  return {err <= 1e-10, fmt("max abs error %.2e after one cycle", err)};
}

Outcome patch_algebra() {
  double worst = 0.0;
  for (std::size_t side : {2u, 5u, 8u}) {
    const ContrastImage img = random_image(64, 48, side);
    worst = std::max(worst, (aggregate_patches(extract_patches(img, side, 1)).vec() - img.vec()).lpNorm<Eigen::Infinity>());
  }
  const std::size_t beta = overlap_count(8, 1);
  return {worst <= 1e-12 && beta == 64, fmt("identity error %.2e, overlap_count(8,1) = %.0f", worst, static_cast<double>(beta))};
}

Outcome schedule_endpoints() {
  const EpsSchedule c{0.1, 0.005}, one{0.09, 0.004};
  const bool ok = epsilon_at(c, 1, 60) == 0.1 && epsilon_at(c, 60, 60) == 0.005 && epsilon_at(one, 1, 60) == 0.09 &&
                  epsilon_at(one, 60, 60) == 0.004;
  return {ok, "eps_c 0.1 -> 0.005, eps_1 0.09 -> 0.004 at t = 1 and t = 60"};
}

Outcome determinism() {
  const PhantomPair p = make_phantom_pair(64, 64, 1);
  const Measurements y = undersample(dft2(p.target), make_mask(MaskKind::random2d, 64, 64, 4.0, 2));
  ReconConfig cfg = desk_config();
  cfg.T = 3;
  const int before = thread_count();
  std::string csv[2];
  std::vector<double> pixels[2];
  for (int i = 0; i < 2; ++i) {
    set_thread_count(i + 1);
    const ReconResult r = reconstruct(y, p.guidance, cfg, &p.target);
    std::ostringstream os;
    write_trace_csv(os, r.trace, false);
    csv[i] = os.str();
    pixels[i] = r.image.values();
  }
  set_thread_count(before);
  const bool same_trace = csv[0] == csv[1];
  const bool same_image = std::memcmp(pixels[0].data(), pixels[1].data(), pixels[0].size() * sizeof(double)) == 0;
  return {same_trace && same_image, std::string("1 vs 2 threads: trace ") + (same_trace ? "identical" : "differs") +
                                        ", image " + (same_image ? "identical" : "differs")};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& ex) {
      o = {false, std::string("exception: ") + ex.what()};
    }
    failures += !o.pass;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "OMP exact_ls matches greedy oracle", omp_oracle);
  report(2, "k-space update matches dense normal equations", kspace_oracle);
  report(3, "measured k-space reproduced every cycle", data_consistency);
  const TrainingRun tr = training_run();
  report(4, "atom norm constraints", [&] {
    return Outcome{tr.worst_violation <= 1e-12, fmt("max norm excess %.2e over %.0f sweeps", tr.worst_violation,
                                                    static_cast<double>(tr.sweeps))};
  });
  report(5, "dictionary sweeps never increase the fit", [&] {
    return Outcome{tr.worst_increase <= 1e-9, fmt("max relative increase %.2e over %.0f sweeps", tr.worst_increase,
                                                  static_cast<double>(tr.sweeps))};
  });
  report(6, "guidance improves reconstruction", guidance_benefit);
  report(7, "fully sampled input returns the truth", exact_recovery);
  report(8, "patch extract/aggregate identity", patch_algebra);
  report(9, "threshold schedule endpoints", schedule_endpoints);
  report(10, "results independent of thread count", determinism);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
