#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sosctl/polyalg.hpp"

namespace sosctl {

using Controller = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Finite list of weighted points. Used for both the parameter and the
/// initial-state distributions.
struct FiniteDistribution {
  std::vector<Eigen::VectorXd> points;
  std::vector<double> probs;

  static FiniteDistribution uniform(std::vector<Eigen::VectorXd> pts);
  /// Cartesian product of per-axis value lists, uniform weights.
  /// Points equal to `exclude` (if given) are dropped.
  static FiniteDistribution uniform_grid(const std::vector<std::vector<double>>& axes,
                                         const Eigen::VectorXd* exclude = nullptr);
  /// `n` equally weighted draws from `sampler`, reproducible through `seed`.
  static FiniteDistribution sampled(const std::function<Eigen::VectorXd(std::mt19937_64&)>& sampler,
                                    int n, std::uint64_t seed);

  int size() const { return static_cast<int>(points.size()); }
  int dim() const { return points.empty() ? 0 : static_cast<int>(points.front().size()); }
  /// Throws ConfigError unless probabilities are non-negative and sum to 1.
  void validate(const char* what) const;
};

using ThetaDistribution = FiniteDistribution;
using InitialStateDistribution = FiniteDistribution;

/// Simplex weight family h(theta) in R^K.
struct WeightFunction {
  std::string kind;  // "bilinear-corner" or "custom"
  int theta_dim = 0;
  int K = 0;
  Eigen::VectorXd lower, upper;  // box for bilinear-corner
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> fn;

  /// K = 2^p vertices of the box [lower, upper]. Vertex k has bit (p-1-i) of
  /// k selecting the upper end of coordinate i, so coordinate 1 varies slowest.
  static WeightFunction bilinear_corner(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper);
  static WeightFunction custom(int theta_dim, int K,
                               std::function<Eigen::VectorXd(const Eigen::VectorXd&)> fn);
  /// Corner point of vertex k (bilinear-corner only).
  Eigen::VectorXd vertex(int k) const;
};

/// Polytopic input-affine polynomial plant:
///   dx/dt = sum_k h_k(theta) (F_k(x) z(x) + G_k(x) u).
class PolytopicSystem {
 public:
  PolytopicSystem(poly::MonomialBasis z, std::vector<poly::PolyMatrix> F,
                  std::vector<poly::PolyMatrix> G, WeightFunction weights,
                  ThetaDistribution theta, InitialStateDistribution x0, std::string name = {});

  int dx() const { return dx_; }
  int du() const { return du_; }
  int K() const { return static_cast<int>(F_.size()); }
  const std::string& name() const { return name_; }
  const poly::MonomialBasis& z() const { return z_; }
  const poly::PolyMatrix& F(int k) const { return F_.at(k); }
  const poly::PolyMatrix& G(int k) const { return G_.at(k); }
  const WeightFunction& weight_function() const { return weights_; }
  const ThetaDistribution& theta() const { return theta_; }
  const InitialStateDistribution& x0() const { return x0_; }
  void set_theta(ThetaDistribution t);
  void set_x0(InitialStateDistribution d);

  /// h(theta). Throws SimplexViolation if the weights leave the simplex.
  Eigen::VectorXd weights(const Eigen::VectorXd& theta) const;
  /// f_k(x) = F_k(x) z(x).
  Eigen::VectorXd vertex_drift(int k, const Eigen::VectorXd& x) const;
  Eigen::MatrixXd vertex_input(int k, const Eigen::VectorXd& x) const;
  Eigen::VectorXd drift(const Eigen::VectorXd& x, const Eigen::VectorXd& theta) const;
  Eigen::MatrixXd input_matrix(const Eigen::VectorXd& x, const Eigen::VectorXd& theta) const;
  /// f + G u(x). Throws NonFinite when the result overflows.
  Eigen::VectorXd closed_loop_rhs(const Controller& u, const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& theta) const;
  /// Same, with precomputed weights (hot path for integration).
  Eigen::VectorXd closed_loop_rhs_h(const Controller& u, const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& h) const;

 private:
  int dx_ = 0;
  int du_ = 0;
  poly::MonomialBasis z_;
  std::vector<poly::PolyMatrix> F_;
  std::vector<poly::PolyMatrix> G_;
  WeightFunction weights_;
  ThetaDistribution theta_;
  InitialStateDistribution x0_;
  std::string name_;
};

/// Two-state, single-input benchmark with a two-dimensional parameter in
/// [0,1]^2 and four bilinear corner vertices.
PolytopicSystem benchmark_system();

/// The benchmark drift written out directly, for cross-checks.
Eigen::VectorXd benchmark_drift_formula(const Eigen::VectorXd& x, const Eigen::VectorXd& theta);

/// State-feedback law u(x) = Z(x) W z(x) with W of shape d_Zr x d_z.
struct PolynomialController {
  poly::MonomialBasis z;
  poly::PolyMatrix Z;  // d_u x d_Zr
  Eigen::MatrixXd W;

  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const;
  Controller as_function() const;
};

}  // namespace sosctl
