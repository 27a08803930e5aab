#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <sstream>
#include <utility>

#include "gpforecast/errors.hpp"

namespace gpforecast {

// Dense symmetric matrix. The lower triangle is authoritative; the upper
// triangle is mirrored on construction so callers can read either half.
class SymmetricMatrix {
 public:
  explicit SymmetricMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols() || m_.rows() < 1) {
      std::ostringstream os;
      os << "SymmetricMatrix: expected square input, got " << m_.rows() << "x"
         << m_.cols();
      throw DimensionMismatch(os.str());
    }
    if (!m_.allFinite()) {
      throw Error("SymmetricMatrix: non-finite entry");
    }
    m_.triangularView<Eigen::StrictlyUpper>() =
        m_.triangularView<Eigen::StrictlyLower>().transpose();
  }

  Eigen::Index order() const { return m_.rows(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }
  const Eigen::MatrixXd& mat() const { return m_; }

  double mean_diagonal() const { return m_.diagonal().mean(); }

 private:
  Eigen::MatrixXd m_;
};

// Lower-triangular Cholesky factor of A + jitter_used * I.
struct CholeskyFactor {
  Eigen::MatrixXd lower;
  double jitter_used = 0.0;

  Eigen::Index order() const { return lower.rows(); }
};

namespace detail {

inline bool try_llt(const Eigen::MatrixXd& a, Eigen::MatrixXd& lower) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) return false;
  lower = llt.matrixL();
  // LLT can report success with a degenerate pivot on the edge of
  // representability; require a usable factor.
  for (Eigen::Index i = 0; i < lower.rows(); ++i) {
    const double d = lower(i, i);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
  }
  return true;
}

}  // namespace detail

// Factorizes A + jitter * I = L * L^T, escalating jitter through the ladder
// {0, 1e-10, 1e-8, 1e-6, 1e-4} * mean(diag(A)) until the factorization
// succeeds. Throws NotPositiveDefinite once the ladder exceeds max_jitter.
inline CholeskyFactor cholesky(const SymmetricMatrix& a, double max_jitter) {
  static constexpr double kLadder[] = {0.0, 1e-10, 1e-8, 1e-6, 1e-4};
  const double scale = a.mean_diagonal();
  Eigen::MatrixXd lower;
  for (double rung : kLadder) {
    const double jitter = rung * scale;
    if (jitter > max_jitter) break;
    Eigen::MatrixXd shifted = a.mat();
    shifted.diagonal().array() += jitter;
    if (detail::try_llt(shifted, lower)) {
      return CholeskyFactor{std::move(lower), jitter};
    }
  }
  throw NotPositiveDefinite(
      "cholesky: matrix not positive definite within jitter budget");
}

// Solves L x = b by forward substitution.
inline Eigen::VectorXd solve_lower(const CholeskyFactor& factor,
                                   const Eigen::VectorXd& b) {
  if (b.size() != factor.order()) {
    throw DimensionMismatch("solve_lower: vector length does not match order");
  }
  return factor.lower.triangularView<Eigen::Lower>().solve(b);
}

// Column-wise variant of solve_lower.
inline Eigen::MatrixXd solve_lower_cols(const CholeskyFactor& factor,
                                        const Eigen::MatrixXd& b) {
  if (b.rows() != factor.order()) {
    throw DimensionMismatch("solve_lower: row count does not match order");
  }
  return factor.lower.triangularView<Eigen::Lower>().solve(b);
}

// Solves (L L^T) x = b via two triangular solves.
inline Eigen::VectorXd solve_system(const CholeskyFactor& factor,
                                    const Eigen::VectorXd& b) {
  if (b.size() != factor.order()) {
    throw DimensionMismatch("solve_system: vector length does not match order");
  }
  Eigen::VectorXd y = factor.lower.triangularView<Eigen::Lower>().solve(b);
  return factor.lower.transpose().triangularView<Eigen::Upper>().solve(y);
}

// Column-wise variant of solve_system.
inline Eigen::MatrixXd solve_system_cols(const CholeskyFactor& factor,
                                         const Eigen::MatrixXd& b) {
  if (b.rows() != factor.order()) {
    throw DimensionMismatch("solve_system: row count does not match order");
  }
  Eigen::MatrixXd y = factor.lower.triangularView<Eigen::Lower>().solve(b);
  return factor.lower.transpose().triangularView<Eigen::Upper>().solve(y);
}

// log |L L^T| = 2 * sum_i log L_ii
inline double log_det(const CholeskyFactor& factor) {
  return 2.0 * factor.lower.diagonal().array().log().sum();
}

}  // namespace gpforecast
