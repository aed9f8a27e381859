#pragma once

#include <string>

#include <Eigen/Dense>

namespace sosctl {

inline Eigen::MatrixXd sym(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

/// Smallest eigenvalue of the symmetric part of m.
double min_eig(const Eigen::MatrixXd& m);

/// True if the symmetric part of m has all eigenvalues above tol.
inline bool is_pd(const Eigen::MatrixXd& m, double tol = 1e-12) { return min_eig(m) > tol; }

/// LDLT factorization of a symmetric matrix that must be positive definite
/// (smallest pivot above `pivot_tol`). Throws SingularFit otherwise.
class SpdSolver {
 public:
  SpdSolver(const Eigen::MatrixXd& m, double pivot_tol, std::string what);
  /// Solves with one step of iterative refinement and enforces a relative
  /// residual below `rel_tol` (SingularFit if not met).
  Eigen::VectorXd solve(const Eigen::VectorXd& b, double rel_tol) const;
  /// ln det of the matrix.
  double log_det() const;

 private:
  Eigen::MatrixXd m_;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
  std::string what_;
};

/// ln det of a symmetric positive definite matrix via Cholesky.
/// Returns false if the factorization fails.
bool log_det_spd(const Eigen::MatrixXd& m, double* out);

}  // namespace sosctl
