#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sosctl/polyalg.hpp"
#include "sosctl/sysmodel.hpp"

namespace sosctl {

/// Running cost q(x) + u^T R(x) u / 2, value features phi, and the controller
/// structure Phi(x) = z(x) (x) Z(x)^T, so that u = Phi^T w = Z inv_vec(w) z.
struct CostModel {
  poly::Polynomial q;
  poly::PolyMatrix R;        // d_u x d_u
  poly::MonomialBasis phi;   // value features, no constant entry
  poly::MonomialBasis z;     // same as the plant's z
  poly::PolyMatrix Z;        // d_u x d_Zr
  double eta = 0.0;

  int dv() const { return phi.size(); }
  int dz() const { return z.size(); }
  int dZr() const { return Z.cols(); }
  int du() const { return Z.rows(); }
  int dw() const { return dz() * dZr(); }

  /// Throws ConfigError on inconsistent shapes or a constant feature.
  void validate() const;
  /// Phi(x), shape d_w x d_u.
  Eigen::MatrixXd Phi(const Eigen::VectorXd& x) const;
  /// u = Phi(x)^T w.
  Eigen::VectorXd control(const Eigen::VectorXd& x, const Eigen::VectorXd& w) const;
  /// Running cost q + u^T R u / 2.
  double running_cost(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
  PolynomialController controller(const Eigen::VectorXd& w) const;
};

/// Cost model used with benchmark_system(): q = |x|^2, R = 10, phi = all
/// monomials of degree 1..6, Z = all monomials of degree 0..2.
CostModel benchmark_cost_model();

/// Dirac-sum weight measure M[pi] = sum_m weight_m pi(x_m).
struct WeightMeasure {
  std::vector<Eigen::VectorXd> points;
  std::vector<double> weights;

  /// Uniform grid with the given step over [lo, hi]^dim, unit weights.
  static WeightMeasure grid(int dim, double lo, double hi, double step);
  static WeightMeasure from_points(std::vector<Eigen::VectorXd> pts);
  int size() const { return static_cast<int>(points.size()); }
};

/// psi_0(x) = [q(x); vec(Phi R Phi^T / 2)], length 1 + d_w^2.
Eigen::VectorXd psi0(const CostModel& model, const Eigen::VectorXd& x);
/// psi_k(x) = vec(dphi/dx^T [f_k(x), G_k(x) Phi(x)^T]), length d_v (1 + d_w).
Eigen::VectorXd psik(const CostModel& model, const PolytopicSystem& sys, int k,
                     const Eigen::VectorXd& x);

/// Moment matrices of the feature vectors under the weight measure.
struct MomentCache {
  int K = 0;
  int dv = 0;
  int dw = 0;
  std::vector<Eigen::MatrixXd> A;  // A[k*K+l] = M[psi_k psi_l^T], n1 x n1
  std::vector<Eigen::MatrixXd> B;  // B[k] = M[psi_k psi_0^T], n1 x n0
  Eigen::VectorXd Ephi0;           // E[phi(x0)]
  /// M[(psi_0)(psi_0)^T], used to evaluate the fit objective exactly.
  Eigen::MatrixXd C00;
  std::uint64_t key = 0;

  int n1() const { return dv * (1 + dw); }
  int n0() const { return 1 + dw * dw; }
  const Eigen::MatrixXd& Akl(int k, int l) const { return A[k * K + l]; }

  void save(const std::string& path) const;
  /// Returns false if the file is missing or was built for a different key.
  bool load(const std::string& path, std::uint64_t expected_key);
};

/// Fingerprint of everything the moments depend on.
std::uint64_t moment_key(const CostModel& model, const PolytopicSystem& sys,
                         const WeightMeasure& measure);

/// Grid summation is done in blocks that are reduced pairwise. Throws
/// NonFinite if any feature evaluation overflows.
MomentCache compute_moments(const CostModel& model, const PolytopicSystem& sys,
                            const WeightMeasure& measure);

/// Loads the cache from `path` when its key matches, otherwise computes and
/// (if `path` is non-empty) writes it.
MomentCache load_or_compute_moments(const CostModel& model, const PolytopicSystem& sys,
                                    const WeightMeasure& measure, const std::string& path,
                                    bool* loaded = nullptr);

Eigen::MatrixXd L_matrix(const MomentCache& cache, const Eigen::VectorXd& w, int k, int l,
                         double eta);
Eigen::VectorXd l_vector(const MomentCache& cache, const Eigen::VectorXd& w, int k);

struct CostParameters {
  Eigen::VectorXd v;
};

CostParameters fit_cost_parameters(const MomentCache& cache, const PolytopicSystem& sys,
                                   const Eigen::VectorXd& w, const Eigen::VectorXd& theta,
                                   double eta);

/// Gradient of E_x0[phi(x0)^T v(w, theta)] with respect to w.
Eigen::VectorXd cost_gradient(const MomentCache& cache, const PolytopicSystem& sys,
                              const Eigen::VectorXd& w, const Eigen::VectorXd& theta, double eta);

/// Expected fitted cost over the parameter and initial-state distributions,
/// optionally with its gradient. All w-dependent contractions are shared
/// across parameter points.
struct ExpectedCost {
  double value = 0.0;
  Eigen::VectorXd gradient;               // empty unless requested
  std::vector<Eigen::VectorXd> v;         // per parameter point
  std::vector<double> per_theta;          // E_x0[J_hat] per parameter point
};

ExpectedCost expected_fitted_cost(const MomentCache& cache, const PolytopicSystem& sys,
                                  const Eigen::VectorXd& w, double eta, bool with_gradient);

/// q + u^T R u / 2 + dJ/dx^T (f + G u) with J = phi^T v and u = Phi^T w.
double bellman_residual(const CostModel& model, const PolytopicSystem& sys,
                        const Eigen::VectorXd& x, const Eigen::VectorXd& v,
                        const Eigen::VectorXd& w, const Eigen::VectorXd& theta);

/// Same quantity through the feature vectors.
double bellman_residual_vectorized(const CostModel& model, const PolytopicSystem& sys,
                                   const Eigen::VectorXd& x, const Eigen::VectorXd& v,
                                   const Eigen::VectorXd& w, const Eigen::VectorXd& theta);

/// Sampled residual bound: beta_hat = max |B| / (q + u^T R u / 2) over the
/// samples (points where the denominator vanishes are skipped). The bound is
/// only certified on the samples.
struct BellmanBound {
  double beta_hat = 0.0;
  int samples_used = 0;
  int samples_skipped = 0;
  Eigen::VectorXd argmax;
};

BellmanBound bellman_bound_diagnostic(const CostModel& model, const PolytopicSystem& sys,
                                      const Eigen::VectorXd& v, const Eigen::VectorXd& w,
                                      const Eigen::VectorXd& theta,
                                      const std::vector<Eigen::VectorXd>& sample_xs);

/// Fit objective M[B^2] + eta |v|^2 evaluated directly on the measure points.
double fit_objective_direct(const CostModel& model, const PolytopicSystem& sys,
                            const WeightMeasure& measure, const Eigen::VectorXd& v,
                            const Eigen::VectorXd& w, const Eigen::VectorXd& theta, double eta);

}  // namespace sosctl
