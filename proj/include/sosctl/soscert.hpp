#pragma once

#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sosctl/polyalg.hpp"
#include "sosctl/sysmodel.hpp"

namespace sosctl {

/// Monomial bases of the stability certificate.
struct SosBases {
  poly::MonomialBasis z;      // strict, Lyapunov basis V = z^T P z
  poly::MonomialBasis zeta;   // first entry 1
  poly::PolyMatrix Z;         // d_u x d_Zr input structure
  poly::NonRedundantForm xi;  // non-redundant form of zeta (x) z
  poly::NonRedundantForm zt;  // non-redundant form of vech(xi xi^T)
  poly::NonRedundantForm zz;  // non-redundant form of zeta (x) zeta

  int dz() const { return z.size(); }
  int dzeta() const { return zeta.size(); }
  int dxi() const { return xi.basis.size(); }
  int dzt() const { return zt.basis.size(); }
  int dZr() const { return Z.cols(); }
  int dw() const { return dz() * dZr(); }
};

/// Builds xi, z-tilde and the zeta products. Throws ConfigError if z is not
/// strict or zeta does not start with the constant monomial.
SosBases make_sos_bases(poly::MonomialBasis z, poly::MonomialBasis zeta, poly::PolyMatrix Z);

/// z = [x1, x2], zeta = [1, x1, x2], Z = [1, x1, x2, x1^2, x1 x2, x2^2].
SosBases benchmark_sos_bases();

/// Index maps that turn the polynomial identity xi^T T xi = z^T U z into a
/// square linear system for vech(T).
///
/// Ma scales vech entries (1 on diagonal positions, 2 elsewhere); Mb selects
/// the z-tilde monomial of every vech entry; Mc permutes vech positions so
/// that one representative per z-tilde monomial comes first, followed by the
/// free positions; Mb = [I, Md] Mc and Me = [[I, Md], [0, I]]. The free
/// positions are pinned by Cr vech(T) = cr r with Cr = [0, I] Mc, so each
/// free entry of T equals one component of r.
struct SosStructure {
  int dxi = 0;
  int dvech = 0;
  int dzt = 0;
  int dr = 0;
  int cr = 0;
  Eigen::VectorXd Ma;  // diagonal
  Eigen::MatrixXd Mb;  // dzt x dvech
  Eigen::MatrixXd Mc;  // dvech x dvech permutation
  Eigen::MatrixXd Md;  // dzt x dr
  Eigen::MatrixXd Me;  // dvech x dvech
  Eigen::MatrixXd Cr;  // dr x dvech
  std::vector<std::pair<int, int>> free_entries;  // (row, col), zero-based
  /// vech(T) = Sc c + Sr r, with c the z-tilde coefficients of z^T U z.
  Eigen::MatrixXd Sc;  // dvech x dzt
  Eigen::MatrixXd Sr;  // dvech x dr
};

/// Representative of each duplicate group is its diagonal entry when one
/// exists, otherwise its first vech position. The remaining positions are
/// free, ordered by decreasing monomial degree and then by vech position.
SosStructure build_structure(const SosBases& bases);

/// U_k = -((P+P^T)/2) dz/dx^T (F_k + G_k Z inv_vec(w)). Throws BasisOverflow
/// if an entry has a monomial outside zeta (x) zeta.
poly::PolyMatrix build_U_k(const SosBases& bases, const PolytopicSystem& sys,
                           const Eigen::MatrixXd& P, const Eigen::VectorXd& w, int k);

/// Precomputed linear maps for one system: the z-tilde coefficients of
/// z^T U_k z are c_k = (CF_k + sum_j w_j CG_kj) vec((P+P^T)/2).
class SosModel {
 public:
  SosModel(SosBases bases, const PolytopicSystem& sys);

  const SosBases& bases() const { return bases_; }
  const SosStructure& structure() const { return st_; }
  int K() const { return K_; }
  int dz() const { return bases_.dz(); }
  int dw() const { return bases_.dw(); }
  int dr() const { return st_.dr; }
  int dxi() const { return st_.dxi; }

  /// dzt x dz^2 map from vec(Ps) to c_k.
  Eigen::MatrixXd coefficient_map(int k, const Eigen::VectorXd& w) const;
  const Eigen::MatrixXd& CF(int k) const { return CF_[k]; }
  const Eigen::MatrixXd& CG(int k, int j) const { return CG_[k * dw() + j]; }

  Eigen::VectorXd coefficients(int k, const Eigen::VectorXd& w, const Eigen::MatrixXd& P) const;
  /// T_k(w, P, r_k), symmetric dxi x dxi.
  Eigen::MatrixXd T(int k, const Eigen::VectorXd& w, const Eigen::MatrixXd& P,
                    const Eigen::VectorXd& r_k) const;
  std::vector<Eigen::MatrixXd> T_all(const Eigen::VectorXd& w, const Eigen::MatrixXd& P,
                                     const Eigen::MatrixXd& r) const;

 private:
  SosBases bases_;
  SosStructure st_;
  int K_ = 0;
  std::vector<Eigen::MatrixXd> CF_;  // K
  std::vector<Eigen::MatrixXd> CG_;  // K * dw
};

/// T_k through the precomputed maps (r_k is column k of r).
Eigen::MatrixXd solve_T_k(const SosModel& model, const Eigen::VectorXd& w,
                          const Eigen::MatrixXd& P, const Eigen::VectorXd& r_k, int k);

/// T_k by explicit coefficient matching of the polynomial z^T U_k z.
Eigen::MatrixXd solve_T_k_direct(const SosModel& model, const PolytopicSystem& sys,
                                 const Eigen::VectorXd& w, const Eigen::MatrixXd& P,
                                 const Eigen::VectorXd& r_k, int k);

/// z-tilde coefficients of xi^T T xi - z^T U_k z; zero when T_k is exact.
Eigen::VectorXd identity_defect(const SosModel& model, const PolytopicSystem& sys,
                                const Eigen::MatrixXd& T, const Eigen::VectorXd& w,
                                const Eigen::MatrixXd& P, int k);

struct PenaltyEval {
  double value = 0.0;
  bool feasible = false;
  double min_eig_P = 0.0;
  double min_eig_T = 0.0;  // smallest over vertices
};

/// -kappa (ln det Ps + sum_k ln det T_k) when Ps and every T_k are positive
/// definite (smallest eigenvalue above 1e-12), otherwise rho_ub.
PenaltyEval penalty(const SosModel& model, const Eigen::VectorXd& w, const Eigen::MatrixXd& P,
                    const Eigen::MatrixXd& r, double kappa, double rho_ub);

struct PenaltyGradient {
  Eigen::VectorXd w;
  Eigen::MatrixXd P;  // symmetric
  Eigen::MatrixXd r;  // dr x K
};

/// Gradient of the feasible branch. Throws InfeasiblePoint otherwise.
PenaltyGradient penalty_gradient(const SosModel& model, const Eigen::VectorXd& w,
                                 const Eigen::MatrixXd& P, const Eigen::MatrixXd& r, double kappa);

double lyapunov_eval(const SosBases& bases, const Eigen::MatrixXd& P, const Eigen::VectorXd& x);

/// dV/dt along the closed loop, -2 sum_k h_k z^T U_k z.
double lyapunov_rate(const SosBases& bases, const PolytopicSystem& sys, const Eigen::VectorXd& w,
                     const Eigen::MatrixXd& P, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& theta);

/// Certificate summary for export.
struct Certificate {
  Eigen::MatrixXd P;
  Eigen::MatrixXd r;
  std::vector<Eigen::MatrixXd> T;
  double min_eig_P = 0.0;
  std::vector<double> min_eig_T;
};

Certificate make_certificate(const SosModel& model, const Eigen::VectorXd& w,
                             const Eigen::MatrixXd& P, const Eigen::MatrixXd& r);

}  // namespace sosctl
