#ifndef CDLMRI_SPARSE_HPP
#define CDLMRI_SPARSE_HPP

// Orthogonal matching pursuit with a support cap and a squared-error
// threshold, plus the stacked (joint) variant used for the common code.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cdlmri/parallel.hpp"

namespace cdlmri {

/// Atom selection rule.
///   exact_ls:    pick the atom whose inclusion gives the smallest
///                least-squares residual (orthogonal least squares).
///   correlation: pick argmax |<residual, atom>|, then refit.
enum class OmpMode { exact_ls, correlation };

inline std::string to_string(OmpMode m) { return m == OmpMode::exact_ls ? "exact_ls" : "correlation"; }

inline OmpMode parse_omp_mode(const std::string& s) {
  if (s == "exact_ls") return OmpMode::exact_ls;
  if (s == "correlation") return OmpMode::correlation;
  throw std::invalid_argument("unknown OMP mode '" + s + "'");
}

enum class StopReason {
  threshold,  // residual energy <= eps
  cap,        // support reached s_max
  exhausted,  // no remaining atom reduces the residual
};

struct SparseCode {
  std::vector<Eigen::Index> support;  // in selection order
  std::vector<double> coefficients;   // aligned with support
  Eigen::Index dim = 0;
  double residual_energy = 0.0;       // squared l2 norm of the final residual
  StopReason stop = StopReason::threshold;

  Eigen::VectorXd dense() const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
    for (std::size_t i = 0; i < support.size(); ++i) v(support[i]) += coefficients[i];
    return v;
  }
};

/// Tolerance on dictionary column norms.
inline constexpr double kAtomNormTolerance = 1e-9;

// Residual energies below this fraction of the signal energy count as zero,
// so exact representations do not keep picking up round-off atoms.
inline constexpr double kRelativeZeroEnergy = 1e-24;

inline void validate_dictionary(const Eigen::MatrixXd& dict) {
  for (Eigen::Index k = 0; k < dict.cols(); ++k)
    if (dict.col(k).norm() > 1.0 + kAtomNormTolerance)
      throw std::invalid_argument("dictionary column " + std::to_string(k) + " has l2 norm > 1");
}

/// Sparse coder bound to one dictionary. The dictionary is validated once on
/// construction; code() is const and safe to call concurrently.
class SparseCoder {
public:
  SparseCoder(const Eigen::MatrixXd& dict, OmpMode mode) : dict_(dict), mode_(mode) {
    validate_dictionary(dict_);
  }

  const Eigen::MatrixXd& dictionary() const { return dict_; }
  OmpMode mode() const { return mode_; }

  template <typename Signal>
  SparseCode code(const Signal& signal, int s_max, double eps, Eigen::VectorXd* residual_out = nullptr) const {
    if (s_max < 0) throw std::invalid_argument("omp: s_max must be >= 0");
    if (!(eps >= 0.0)) throw std::invalid_argument("omp: eps must be >= 0");
    if (signal.size() != dict_.rows()) throw std::invalid_argument("omp: signal length does not match dictionary");
    return run(Eigen::VectorXd(signal), s_max, eps, residual_out);
  }

private:
  SparseCode run(const Eigen::VectorXd& x, int s_max, double eps, Eigen::VectorXd* residual_out) const {
    const Eigen::Index n = dict_.rows();
    const Eigen::Index K = dict_.cols();
    SparseCode out;
    out.dim = K;

    Eigen::VectorXd r = x;
    double r_energy = r.squaredNorm();
    const double zero_floor = kRelativeZeroEnergy * r_energy;
    std::vector<char> active(static_cast<std::size_t>(K), 0);
    Eigen::MatrixXd basis(n, std::min<Eigen::Index>(n, s_max));  // orthonormal span of the active atoms
    Eigen::Index rank = 0;
    Eigen::MatrixXd selected(n, 0);

    while (true) {
      if (r_energy <= eps || r_energy <= zero_floor) {
        out.stop = StopReason::threshold;
        break;
      }
      if (static_cast<int>(out.support.size()) >= s_max) {
        out.stop = StopReason::cap;
        break;
      }

      Eigen::Index best = -1;
      double best_score = 0.0;
      if (mode_ == OmpMode::correlation) {
        const Eigen::VectorXd corr = dict_.transpose() * r;
        for (Eigen::Index k = 0; k < K; ++k) {
          if (active[static_cast<std::size_t>(k)]) continue;
          const double s = std::abs(corr(k));
          if (s > best_score) { best_score = s; best = k; }
        }
        if (best_score * best_score <= 1e-28 * r_energy) best = -1;
      } else {
        // Energy removed by adding atom k is <r, q>^2 / |q|^2 with q the part
        // of the atom orthogonal to the current span.
        const auto Q = basis.leftCols(rank);
        for (Eigen::Index k = 0; k < K; ++k) {
          if (active[static_cast<std::size_t>(k)]) continue;
          const auto a = dict_.col(k);
          const double a2 = a.squaredNorm();
          if (a2 == 0.0) continue;
          Eigen::VectorXd q = a - Q * (Q.transpose() * a);
          const double q2 = q.squaredNorm();
          if (q2 <= 1e-20 * a2) continue;
          const double rq = r.dot(q);
          const double s = rq * rq / q2;
          if (s > best_score) { best_score = s; best = k; }
        }
        if (best_score <= 1e-28 * r_energy) best = -1;
      }
      if (best < 0) {
        out.stop = StopReason::exhausted;
        break;
      }

      active[static_cast<std::size_t>(best)] = 1;
      out.support.push_back(best);
      selected.conservativeResize(n, selected.cols() + 1);
      selected.col(selected.cols() - 1) = dict_.col(best);

      // Extend the orthonormal basis (two Gram-Schmidt passes).
      if (rank < basis.cols()) {
        Eigen::VectorXd q = dict_.col(best);
        const double a_norm = q.norm();
        for (int pass = 0; pass < 2; ++pass) q -= basis.leftCols(rank) * (basis.leftCols(rank).transpose() * q);
        const double qn = q.norm();
        if (qn > 1e-10 * a_norm) basis.col(rank++) = q / qn;
      }

      // Least squares refit on the active set, minimum-norm if rank deficient.
      const Eigen::VectorXd alpha = selected.completeOrthogonalDecomposition().solve(x);
      out.coefficients.assign(alpha.data(), alpha.data() + alpha.size());
      r = x - selected * alpha;
      r_energy = r.squaredNorm();
    }

    out.residual_energy = r_energy;
    if (residual_out) *residual_out = std::move(r);
    return out;
  }

  Eigen::MatrixXd dict_;
  OmpMode mode_;
};

/// Single-dictionary OMP.
inline SparseCode omp(const Eigen::VectorXd& signal, const Eigen::MatrixXd& dict, int s_max, double eps,
                      OmpMode mode = OmpMode::correlation) {
  return SparseCoder(dict, mode).code(signal, s_max, eps);
}

inline Eigen::MatrixXd stack_rows(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
  if (top.cols() != bottom.cols()) throw std::invalid_argument("stack_rows: column counts differ");
  Eigen::MatrixXd s(top.rows() + bottom.rows(), top.cols());
  s << top, bottom;
  return s;
}

/// Joint OMP over a contrast pair: OMP on the stacked signal [x1; x2] with
/// the stacked dictionary [psi_c; phi_c]. eps bounds the sum of both
/// contrasts' squared residuals.
inline SparseCode joint_omp(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2, const Eigen::MatrixXd& psi_c,
                            const Eigen::MatrixXd& phi_c, int s_c, double eps_c, OmpMode mode = OmpMode::correlation) {
  if (x1.size() != x2.size() || psi_c.rows() != phi_c.rows() || psi_c.cols() != phi_c.cols())
    throw std::invalid_argument("joint_omp: contrast shapes differ");
  return omp(stack_rows(x1, x2), stack_rows(psi_c, phi_c), s_c, eps_c, mode);
}

/// Codes every column of `signals`; patches are independent so the result
/// does not depend on the schedule.
inline std::vector<SparseCode> batch_code(const Eigen::MatrixXd& signals, const SparseCoder& coder, int s_max,
                                          double eps) {
  if (signals.rows() != coder.dictionary().rows())
    throw std::invalid_argument("batch_code: signal length does not match dictionary");
  if (s_max < 0 || !(eps >= 0.0)) throw std::invalid_argument("batch_code: invalid cap or threshold");
  std::vector<SparseCode> codes(static_cast<std::size_t>(signals.cols()));
  parallel_for(codes.size(), [&](std::size_t p) {
    codes[p] = coder.code(signals.col(static_cast<Eigen::Index>(p)), s_max, eps);
  });
  return codes;
}

inline std::vector<SparseCode> batch_code(const Eigen::MatrixXd& signals, const Eigen::MatrixXd& dict, int s_max,
                                          double eps, OmpMode mode = OmpMode::correlation) {
  return batch_code(signals, SparseCoder(dict, mode), s_max, eps);
}

/// Joint batch: columns of x1 and x2 are paired positionally.
inline std::vector<SparseCode> batch_code_joint(const Eigen::MatrixXd& x1, const Eigen::MatrixXd& x2,
                                                const Eigen::MatrixXd& psi_c, const Eigen::MatrixXd& phi_c, int s_c,
                                                double eps_c, OmpMode mode = OmpMode::correlation) {
  if (x1.rows() != x2.rows() || x1.cols() != x2.cols())
    throw std::invalid_argument("batch_code_joint: patch matrices differ in shape");
  return batch_code(stack_rows(x1, x2), stack_rows(psi_c, phi_c), s_c, eps_c, mode);
}

/// K x P dense coefficient matrix from per-patch codes.
inline Eigen::MatrixXd codes_to_matrix(const std::vector<SparseCode>& codes, Eigen::Index K) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(K, static_cast<Eigen::Index>(codes.size()));
  for (std::size_t p = 0; p < codes.size(); ++p)
    for (std::size_t i = 0; i < codes[p].support.size(); ++i)
      m(codes[p].support[i], static_cast<Eigen::Index>(p)) = codes[p].coefficients[i];
  return m;
}

}  // namespace cdlmri

#endif  // CDLMRI_SPARSE_HPP
