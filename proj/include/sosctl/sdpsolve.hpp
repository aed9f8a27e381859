#pragma once

#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sosctl/soscert.hpp"
#include "sosctl/sysmodel.hpp"

namespace sosctl {

/// maximize c^T y  s.t.  A y = b,  F_j(y) = F_j0 + sum_i y_i F_ji >= 0.
///
/// Variables are scalars; symmetric and rectangular matrix variables are
/// registered as named blocks that map entries to scalar indices.
class SdpProblem {
 public:
  struct Block {
    std::string name;
    int rows = 0;
    int cols = 0;
    bool symmetric = false;
    int offset = 0;
  };
  struct Lmi {
    std::string name;
    int size = 0;
    Eigen::MatrixXd constant;
    std::vector<std::pair<int, Eigen::MatrixXd>> terms;  // (variable, coefficient matrix)
  };

  int add_symmetric(const std::string& name, int n);
  int add_matrix(const std::string& name, int rows, int cols);
  int add_scalar(const std::string& name);

  /// Scalar index of entry (i, j) of a block (symmetric blocks store the lower
  /// triangle; (i, j) and (j, i) share an index).
  int index(int block, int i, int j = 0) const;
  const Block& block(int b) const { return blocks_.at(b); }
  int num_blocks() const { return static_cast<int>(blocks_.size()); }
  int num_vars() const { return nvars_; }

  void add_equality(const Eigen::VectorXd& row, double rhs);
  void set_objective(const Eigen::VectorXd& c) { c_ = c; }

  /// Adds an empty LMI of the given size and returns its id.
  int add_lmi(const std::string& name, int size);
  Lmi& lmi(int id) { return lmis_.at(id); }
  const std::vector<Lmi>& lmis() const { return lmis_; }
  /// Adds coeff * (symmetric block variable) to the LMI at offset (r0, r0).
  void lmi_add_symmetric_block(int lmi, int block, double coeff, int r0 = 0);
  /// Adds coeff * var * I.
  void lmi_add_scaled_identity(int lmi, int var, double coeff);
  void lmi_add_term(int lmi, int var, const Eigen::MatrixXd& m);

  const Eigen::MatrixXd& A() const { return A_; }
  const Eigen::VectorXd& b() const { return b_; }
  const Eigen::VectorXd& c() const { return c_; }

  /// F_j(y) for every LMI.
  std::vector<Eigen::MatrixXd> evaluate(const Eigen::VectorXd& y) const;
  /// Extract a block as a dense matrix.
  Eigen::MatrixXd value(int block, const Eigen::VectorXd& y) const;

  /// Plain-text dump: variables, equality triplets, LMI terms.
  void dump(std::ostream& os) const;

 private:
  std::vector<Block> blocks_;
  int nvars_ = 0;
  Eigen::MatrixXd A_;
  Eigen::VectorXd b_;
  Eigen::VectorXd c_;
  std::vector<Lmi> lmis_;
};

struct SdpOptions {
  double eq_tol = 1e-10;
  double cone_margin = 1e-9;
  double gap_tol = 1e-8;
  int max_newton = 200;  // per centering step
  double mu = 10.0;
  /// Objective magnitude beyond which the problem is reported unbounded.
  double unbounded = 1e12;
};

struct SdpSolution {
  Eigen::VectorXd y;
  double objective = 0.0;
  double equality_residual = 0.0;
  double min_cone_eig = 0.0;
  int newton_iterations = 0;
  int outer_iterations = 0;
};

/// Log-det barrier path following on the null space of the equalities, with
/// a slack phase to find a strictly feasible start. Throws Infeasible if the
/// equalities are inconsistent or no strictly feasible point exists, and
/// MaxIterations if centering fails or the objective is unbounded.
SdpSolution solve_sdp(const SdpProblem& p, const SdpOptions& opts = {});

/// First initialization problem: find Q > 0, H, S_k >= eps I with
/// -dz/dx^T (F_k Q + G_k Z H) + (.)^T = (zeta (x) I)^T S_k (zeta (x) I)
/// and maximize eps. Because the constraints are homogeneous the blocks are
/// bounded: S_k <= bound I and Q <= bound I.
struct InitSdp {
  SdpProblem problem;
  int Q = -1;
  int H = -1;
  std::vector<int> S;
  int eps = -1;
};

InitSdp assemble_init_sdp(const SosBases& bases, const PolytopicSystem& sys, double bound = 1.0);

struct InitResult {
  Eigen::MatrixXd Q, H;
  std::vector<Eigen::MatrixXd> S;
  double eps1 = 0.0;
  double equality_residual = 0.0;
  Eigen::MatrixXd r;
  double eps2 = 0.0;
  Eigen::VectorXd w0;
  Eigen::MatrixXd P0;
  Eigen::MatrixXd r0;
};

/// Solves the first problem. Throws Infeasible when eps1 <= 1e-9.
InitResult solve_init_sdp(const SosBases& bases, const PolytopicSystem& sys,
                          const SdpOptions& opts = {}, double bound = 1.0);

/// maximize eps2  s.t.  T_k(W0, P0, r) >= eps2 I for every vertex.
struct RSdpResult {
  Eigen::MatrixXd r;  // d_r x K
  double eps2 = 0.0;
};
RSdpResult solve_r_sdp(const SosModel& model, const Eigen::VectorXd& w0, const Eigen::MatrixXd& P0,
                       const SdpOptions& opts = {});

struct InitialVariables {
  Eigen::VectorXd w;
  Eigen::MatrixXd P;
  Eigen::MatrixXd r;
};
/// W0 = vec(H Q^-1), P0 = Q^-1, r0 = r.
InitialVariables initial_variables(const Eigen::MatrixXd& Q, const Eigen::MatrixXd& H,
                                   const Eigen::MatrixXd& r);

/// Both stages in sequence.
InitResult initialize(const SosModel& model, const PolytopicSystem& sys, const SdpOptions& opts = {},
                      double bound = 1.0);

}  // namespace sosctl
