#ifndef CDLMRI_CDL_HPP
#define CDLMRI_CDL_HPP

// Coupled dictionary learning.
//
// Each target/guidance patch pair is modelled as
//   x1 = Psi_c z + Psi u,   x2 = Phi_c z + Phi v
// with a shared sparse code z and contrast-specific codes u, v. Training
// alternates OMP coding with block coordinate descent over atoms:
// every atom update is the exact minimiser of the fit in that atom followed
// by projection onto the unit ball, so a sweep with fixed codes never
// increases the fit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "cdlmri/image.hpp"
#include "cdlmri/sparse.hpp"

namespace cdlmri {

struct CoupledDictionary {
  Eigen::MatrixXd psi_c;  // common, target
  Eigen::MatrixXd phi_c;  // common, guidance
  Eigen::MatrixXd psi;    // unique, target
  Eigen::MatrixXd phi;    // unique, guidance

  Eigen::Index n() const { return psi_c.rows(); }
  Eigen::Index K() const { return psi_c.cols(); }

  Eigen::MatrixXd stacked_common() const { return stack_rows(psi_c, phi_c); }

  void set_stacked_common(const Eigen::MatrixXd& d) {
    psi_c = d.topRows(n());
    phi_c = d.bottomRows(d.rows() - n());
  }

  /// Largest violation of the norm constraints; <= 0 means feasible.
  double max_constraint_violation() const {
    double worst = -1.0;
    for (Eigen::Index k = 0; k < K(); ++k) {
      const double joint = std::sqrt(psi_c.col(k).squaredNorm() + phi_c.col(k).squaredNorm());
      worst = std::max({worst, joint - 1.0, psi.col(k).norm() - 1.0, phi.col(k).norm() - 1.0});
    }
    return worst;
  }

  bool shapes_consistent() const {
    return psi_c.rows() == phi_c.rows() && psi_c.rows() == psi.rows() && psi_c.rows() == phi.rows() &&
           psi_c.cols() == phi_c.cols() && psi_c.cols() == psi.cols() && psi_c.cols() == phi.cols();
  }

  friend bool operator==(const CoupledDictionary& a, const CoupledDictionary& b) {
    auto same = [](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
      return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
    };
    return same(a.psi_c, b.psi_c) && same(a.phi_c, b.phi_c) && same(a.psi, b.psi) && same(a.phi, b.phi);
  }
};

/// Positionally paired target/guidance training patches.
struct TrainingSet {
  Eigen::MatrixXd X1;  // n x P
  Eigen::MatrixXd X2;  // n x P
  std::vector<std::size_t> patch_indices;  // indices into the full stride lattice
  std::uint64_t seed = 0;

  Eigen::Index size() const { return X1.cols(); }
};

struct SparseCodeSet {
  Eigen::MatrixXd Z;  // K x P common codes
  Eigen::MatrixXd U;  // K x P target-unique codes
  Eigen::MatrixXd V;  // K x P guidance-unique codes
};

namespace detail {

// Uniform index in [0, bound) from raw 64-bit draws, identical on every
// standard library (unlike std::uniform_int_distribution).
inline std::size_t draw_index(std::mt19937_64& gen, std::size_t bound) {
  return static_cast<std::size_t>(gen() % bound);
}

// First `count` entries of a seeded Fisher-Yates shuffle of [0, total).
inline std::vector<std::size_t> sample_without_replacement(std::mt19937_64& gen, std::size_t total,
                                                           std::size_t count) {
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  count = std::min(count, total);
  for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + draw_index(gen, total - i)]);
  idx.resize(count);
  return idx;
}

inline void project_to_unit_ball(Eigen::Ref<Eigen::VectorXd> d) {
  const double nrm = d.norm();
  if (nrm > 1.0) d /= nrm;
}

}  // namespace detail

/// Training subset: `subset` corners drawn uniformly without replacement
/// from the stride lattice (all of them when subset is 0 or too large),
/// kept in lattice order.
inline TrainingSet make_training_set(const ContrastImage& target, const ContrastImage& guidance,
                                     std::size_t patch_side, std::size_t stride, std::size_t subset,
                                     std::uint64_t seed) {
  require_same_shape(target, guidance, "make_training_set");
  detail::check_patch_geometry(target.rows(), target.cols(), patch_side, stride);
  const std::size_t total = (target.rows() / stride) * (target.cols() / stride);
  if (subset == 0 || subset > total) subset = total;

  std::mt19937_64 gen(seed);
  auto chosen = detail::sample_without_replacement(gen, total, subset);
  std::sort(chosen.begin(), chosen.end());

  TrainingSet ts;
  ts.seed = seed;
  ts.patch_indices = chosen;
  const auto n = static_cast<Eigen::Index>(patch_side * patch_side);
  ts.X1.resize(n, static_cast<Eigen::Index>(subset));
  ts.X2.resize(n, static_cast<Eigen::Index>(subset));
  const std::size_t per_row = target.cols() / stride;
  for (std::size_t j = 0; j < chosen.size(); ++j) {
    const std::size_t r0 = (chosen[j] / per_row) * stride, c0 = (chosen[j] % per_row) * stride;
    read_patch(target, r0, c0, patch_side, ts.X1.col(static_cast<Eigen::Index>(j)));
    read_patch(guidance, r0, c0, patch_side, ts.X2.col(static_cast<Eigen::Index>(j)));
  }
  return ts;
}

/// Atoms drawn from training columns: common pairs share a column and are
/// projected jointly; unique atoms come from independent draws.
inline CoupledDictionary init_dictionaries(const TrainingSet& ts, Eigen::Index K, std::uint64_t seed) {
  if (K <= 0) throw std::invalid_argument("init_dictionaries: K must be positive");
  const auto P = static_cast<std::size_t>(ts.size());
  if (P == 0) throw std::invalid_argument("init_dictionaries: empty training set");
  const auto k = static_cast<std::size_t>(K);
  std::mt19937_64 gen(seed);
  auto draw = [&] {
    if (P >= k) return detail::sample_without_replacement(gen, P, k);
    std::vector<std::size_t> idx(k);
    for (auto& i : idx) i = detail::draw_index(gen, P);
    return idx;
  };
  const auto common = draw();
  const auto uniq1 = draw();
  const auto uniq2 = draw();

  const Eigen::Index n = ts.X1.rows();
  CoupledDictionary d{Eigen::MatrixXd(n, K), Eigen::MatrixXd(n, K), Eigen::MatrixXd(n, K), Eigen::MatrixXd(n, K)};
  for (Eigen::Index a = 0; a < K; ++a) {
    const auto ia = static_cast<std::size_t>(a);
    Eigen::VectorXd pair(2 * n);
    pair << ts.X1.col(static_cast<Eigen::Index>(common[ia])), ts.X2.col(static_cast<Eigen::Index>(common[ia]));
    detail::project_to_unit_ball(pair);
    d.psi_c.col(a) = pair.head(n);
    d.phi_c.col(a) = pair.tail(n);
    d.psi.col(a) = ts.X1.col(static_cast<Eigen::Index>(uniq1[ia]));
    d.phi.col(a) = ts.X2.col(static_cast<Eigen::Index>(uniq2[ia]));
    detail::project_to_unit_ball(d.psi.col(a));
    detail::project_to_unit_ball(d.phi.col(a));
  }
  return d;
}

/// Z by joint OMP on (X1, X2), then U and V on what the common part leaves.
/// No error threshold during training: only the support caps stop OMP.
inline SparseCodeSet sparse_coding_step(const TrainingSet& ts, const CoupledDictionary& dict, int s_c, int s_1,
                                        int s_2, OmpMode mode = OmpMode::correlation) {
  if (!dict.shapes_consistent() || dict.n() != ts.X1.rows())
    throw std::invalid_argument("sparse_coding_step: dictionary and training set shapes differ");
  SparseCodeSet codes;
  codes.Z = codes_to_matrix(batch_code_joint(ts.X1, ts.X2, dict.psi_c, dict.phi_c, s_c, 0.0, mode), dict.K());
  Eigen::MatrixXd R1 = ts.X1 - dict.psi_c * codes.Z;
  Eigen::MatrixXd R2 = ts.X2 - dict.phi_c * codes.Z;
  // Pairs the common part already represents exactly leave round-off only.
  for (Eigen::Index p = 0; p < R1.cols(); ++p) {
    const double floor = kRelativeZeroEnergy * (ts.X1.col(p).squaredNorm() + ts.X2.col(p).squaredNorm());
    if (R1.col(p).squaredNorm() <= floor) R1.col(p).setZero();
    if (R2.col(p).squaredNorm() <= floor) R2.col(p).setZero();
  }
  codes.U = codes_to_matrix(batch_code(R1, dict.psi, s_1, 0.0, mode), dict.K());
  codes.V = codes_to_matrix(batch_code(R2, dict.phi, s_2, 0.0, mode), dict.K());
  return codes;
}

/// ||X1 - Psi_c Z - Psi U||_F^2 + ||X2 - Phi_c Z - Phi V||_F^2
inline double fit_objective(const TrainingSet& ts, const CoupledDictionary& dict, const SparseCodeSet& codes) {
  return (ts.X1 - dict.psi_c * codes.Z - dict.psi * codes.U).squaredNorm() +
         (ts.X2 - dict.phi_c * codes.Z - dict.phi * codes.V).squaredNorm();
}

/// One ascending sweep of block coordinate descent over the columns of
/// `atoms`. `residual` must equal data - atoms * codes on entry and is kept
/// current. Atoms with an all-zero code row are left untouched.
inline void bcd_sweep(Eigen::MatrixXd& atoms, Eigen::MatrixXd& residual, const Eigen::MatrixXd& codes) {
  std::vector<Eigen::Index> used;
  for (Eigen::Index k = 0; k < atoms.cols(); ++k) {
    used.clear();
    double energy = 0.0;
    for (Eigen::Index j = 0; j < codes.cols(); ++j) {
      const double c = codes(k, j);
      if (c != 0.0) {
        used.push_back(j);
        energy += c * c;
      }
    }
    if (energy == 0.0) continue;

    Eigen::VectorXd g = Eigen::VectorXd::Zero(atoms.rows());
    for (Eigen::Index j : used) g.noalias() += codes(k, j) * residual.col(j);
    Eigen::VectorXd d = g / energy + atoms.col(k);
    detail::project_to_unit_ball(d);
    const Eigen::VectorXd delta = d - atoms.col(k);
    for (Eigen::Index j : used) residual.col(j).noalias() -= codes(k, j) * delta;
    atoms.col(k) = d;
  }
}

/// Sequential update of the stacked common atom pairs [psi_ck; phi_ck].
inline CoupledDictionary update_common_atoms(CoupledDictionary dict, const TrainingSet& ts,
                                             const SparseCodeSet& codes) {
  Eigen::MatrixXd atoms = dict.stacked_common();
  Eigen::MatrixXd residual = stack_rows(ts.X1 - dict.psi * codes.U, ts.X2 - dict.phi * codes.V) - atoms * codes.Z;
  bcd_sweep(atoms, residual, codes.Z);
  dict.set_stacked_common(atoms);
  return dict;
}

/// Sequential update of Psi (with U) and of Phi (with V); the two are independent.
inline CoupledDictionary update_unique_atoms(CoupledDictionary dict, const TrainingSet& ts,
                                             const SparseCodeSet& codes) {
  Eigen::MatrixXd r1 = ts.X1 - dict.psi_c * codes.Z - dict.psi * codes.U;
  bcd_sweep(dict.psi, r1, codes.U);
  Eigen::MatrixXd r2 = ts.X2 - dict.phi_c * codes.Z - dict.phi * codes.V;
  bcd_sweep(dict.phi, r2, codes.V);
  return dict;
}

namespace detail {

// Replaces each atom whose code row is all zero with a distinct residual
// column, largest norm first, scaled to unit norm. Equal norms are ordered by
// a seeded permutation.
inline void replace_dead(Eigen::MatrixXd& atoms, const Eigen::MatrixXd& residual, const Eigen::MatrixXd& codes,
                         std::mt19937_64& gen) {
  std::vector<Eigen::Index> dead;
  for (Eigen::Index k = 0; k < atoms.cols(); ++k)
    if ((codes.row(k).array() == 0.0).all()) dead.push_back(k);
  if (dead.empty() || residual.cols() == 0) return;

  const auto P = static_cast<std::size_t>(residual.cols());
  std::vector<std::size_t> rank_order = sample_without_replacement(gen, P, P);
  std::vector<std::size_t> tie_rank(P);
  for (std::size_t i = 0; i < P; ++i) tie_rank[rank_order[i]] = i;
  const Eigen::VectorXd norms = residual.colwise().norm().transpose();
  std::vector<std::size_t> order(P);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double na = norms(static_cast<Eigen::Index>(a)), nb = norms(static_cast<Eigen::Index>(b));
    return na > nb || (na == nb && tie_rank[a] < tie_rank[b]);
  });

  for (std::size_t i = 0; i < dead.size() && i < P; ++i) {
    const auto col = static_cast<Eigen::Index>(order[i]);
    const double nrm = norms(col);
    if (!(nrm > 0.0)) break;
    atoms.col(dead[i]) = residual.col(col) / nrm;
  }
}

}  // namespace detail

/// Re-seeds unused atoms from the worst-represented training pairs.
inline CoupledDictionary replace_dead_atoms(CoupledDictionary dict, const TrainingSet& ts,
                                            const SparseCodeSet& codes, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  const Eigen::MatrixXd r1 = ts.X1 - dict.psi_c * codes.Z - dict.psi * codes.U;
  const Eigen::MatrixXd r2 = ts.X2 - dict.phi_c * codes.Z - dict.phi * codes.V;
  Eigen::MatrixXd common = dict.stacked_common();
  detail::replace_dead(common, stack_rows(r1, r2), codes.Z, gen);
  dict.set_stacked_common(common);
  detail::replace_dead(dict.psi, r1, codes.U, gen);
  detail::replace_dead(dict.phi, r2, codes.V, gen);
  return dict;
}

struct TrainConfig {
  Eigen::Index K = 512;
  int s_c = 6;
  int s_1 = 2;
  int s_2 = 2;
  int iterations = 50;  // L
  OmpMode mode = OmpMode::correlation;
  std::uint64_t seed = 0;
};

/// Fit objective at each half-step of one training iteration.
struct TrainStep {
  double after_coding = 0.0;
  double after_common = 0.0;
  double after_unique = 0.0;
  double max_constraint_violation = 0.0;  // after the unique sweep
};

struct TrainResult {
  CoupledDictionary dictionary;
  std::vector<TrainStep> trace;
};

/// L rounds of coding, common sweep, unique sweep and dead-atom
/// replacement. Starts from `warm` when given, otherwise from
/// init_dictionaries.
inline TrainResult train(const TrainingSet& ts, const TrainConfig& cfg, const CoupledDictionary* warm = nullptr) {
  if (cfg.iterations < 0 || cfg.s_c < 0 || cfg.s_1 < 0 || cfg.s_2 < 0)
    throw std::invalid_argument("train: negative iteration count or sparsity cap");
  TrainResult result;
  if (warm) {
    if (!warm->shapes_consistent() || warm->n() != ts.X1.rows() || warm->K() != cfg.K)
      throw std::invalid_argument("train: warm-start dictionary has the wrong shape");
    result.dictionary = *warm;
  } else {
    result.dictionary = init_dictionaries(ts, cfg.K, cfg.seed);
  }
  CoupledDictionary& dict = result.dictionary;
  for (int l = 0; l < cfg.iterations; ++l) {
    const SparseCodeSet codes = sparse_coding_step(ts, dict, cfg.s_c, cfg.s_1, cfg.s_2, cfg.mode);
    TrainStep step;
    step.after_coding = fit_objective(ts, dict, codes);
    dict = update_common_atoms(std::move(dict), ts, codes);
    step.after_common = fit_objective(ts, dict, codes);
    dict = update_unique_atoms(std::move(dict), ts, codes);
    step.after_unique = fit_objective(ts, dict, codes);
    step.max_constraint_violation = dict.max_constraint_violation();
    dict = replace_dead_atoms(std::move(dict), ts, codes, cfg.seed + 1000003ULL * static_cast<std::uint64_t>(l + 1));
    result.trace.push_back(step);
  }
  return result;
}

// Single-dictionary learning for the guidance-free baseline.

/// Columns drawn from the training patches, projected onto the unit ball.
inline Eigen::MatrixXd init_single_dictionary(const Eigen::MatrixXd& X, Eigen::Index K, std::uint64_t seed) {
  if (K <= 0) throw std::invalid_argument("init_single_dictionary: K must be positive");
  const auto P = static_cast<std::size_t>(X.cols());
  if (P == 0) throw std::invalid_argument("init_single_dictionary: empty training set");
  std::mt19937_64 gen(seed);
  const auto k = static_cast<std::size_t>(K);
  std::vector<std::size_t> idx;
  if (P >= k) {
    idx = detail::sample_without_replacement(gen, P, k);
  } else {
    idx.resize(k);
    for (auto& i : idx) i = detail::draw_index(gen, P);
  }
  Eigen::MatrixXd D(X.rows(), K);
  for (Eigen::Index a = 0; a < K; ++a) {
    D.col(a) = X.col(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(a)]));
    detail::project_to_unit_ball(D.col(a));
  }
  return D;
}

struct SingleTrainResult {
  Eigen::MatrixXd dictionary;
  std::vector<double> objective;  // after each dictionary sweep
};

inline SingleTrainResult train_single(const Eigen::MatrixXd& X, Eigen::Index K, int sparsity, int iterations,
                                      OmpMode mode, std::uint64_t seed, const Eigen::MatrixXd* warm = nullptr) {
  SingleTrainResult result;
  result.dictionary = warm ? *warm : init_single_dictionary(X, K, seed);
  Eigen::MatrixXd& D = result.dictionary;
  for (int l = 0; l < iterations; ++l) {
    const Eigen::MatrixXd codes = codes_to_matrix(batch_code(X, D, sparsity, 0.0, mode), D.cols());
    Eigen::MatrixXd residual = X - D * codes;
    bcd_sweep(D, residual, codes);
    result.objective.push_back(residual.squaredNorm());
    std::mt19937_64 gen(seed + 1000003ULL * static_cast<std::uint64_t>(l + 1));
    detail::replace_dead(D, residual, codes, gen);
  }
  return result;
}

}  // namespace cdlmri

#endif  // CDLMRI_CDL_HPP
