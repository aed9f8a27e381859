#include "sosctl/linalg.hpp"

#include <cmath>
#include <sstream>

#include "sosctl/errors.hpp"

namespace sosctl {

double min_eig(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym(m), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  return es.eigenvalues().minCoeff();
}

SpdSolver::SpdSolver(const Eigen::MatrixXd& m, double pivot_tol, std::string what)
    : m_(m), ldlt_(m), what_(std::move(what)) {
  if (!m.allFinite()) throw NonFinite(what_ + " is not finite");
  if (ldlt_.info() != Eigen::Success || !(ldlt_.vectorD().minCoeff() > pivot_tol)) {
    std::ostringstream os;
    os << what_ << " is not positive definite (smallest pivot "
       << (ldlt_.info() == Eigen::Success ? ldlt_.vectorD().minCoeff() : NAN) << ")";
    throw SingularFit(os.str());
  }
}

Eigen::VectorXd SpdSolver::solve(const Eigen::VectorXd& b, double rel_tol) const {
  Eigen::VectorXd x = ldlt_.solve(b);
  Eigen::VectorXd r = b - m_ * x;
  x += ldlt_.solve(r);
  r = b - m_ * x;
  const double scale = std::max(b.norm(), (m_ * x).norm());
  if (scale > 0.0 && !(r.norm() <= rel_tol * scale)) {
    std::ostringstream os;
    os << what_ << ": linear solve residual " << r.norm() / scale << " exceeds " << rel_tol;
    throw SingularFit(os.str());
  }
  return x;
}

double SpdSolver::log_det() const { return ldlt_.vectorD().array().log().sum(); }

bool log_det_spd(const Eigen::MatrixXd& m, double* out) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) return false;
  *out = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return true;
}

}  // namespace sosctl
