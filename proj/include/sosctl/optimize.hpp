#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sosctl/costfit.hpp"
#include "sosctl/soscert.hpp"
#include "sosctl/sysmodel.hpp"

namespace sosctl {

/// What the gradient loop minimizes.
///  - Proposed:     expected fitted cost + penalty
///  - NoOptimality: |w|^2 + penalty
///  - NoStability:  expected fitted cost alone, stopped once it turns negative
enum class ObjectiveKind { Proposed, NoOptimality, NoStability };

const char* to_string(ObjectiveKind k);
/// Accepts "proposed", "no-optimality", "no-stability".
ObjectiveKind objective_kind_from_string(const std::string& s);

struct OptimizerConfig {
  int N = 2000;
  double kappa = 0.1;
  double rho_ub = 1e20;
  double chi = 1e-4;
  double alpha_ini = 0.01;
  double gamma = 0.5;
  double eta = 0.0;
  double J_lb = -1e12;
  std::uint64_t seed = 0;
  /// 0 enumerates the parameter support exactly; otherwise this many points
  /// are drawn once (seeded) from it and reused at every iteration.
  int theta_samples = 0;
  ObjectiveKind objective = ObjectiveKind::Proposed;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

/// One accepted iterate (row 0 is the initial point, with alpha = 0).
struct IterationRecord {
  int iter = 0;
  double g = 0.0;
  double cost = 0.0;     // expected fitted cost, NaN in no-optimality mode
  double penalty = 0.0;  // NaN in no-stability mode
  double alpha = 0.0;
  double min_eig_P = 0.0;
  double min_eig_T = 0.0;
  double grad_norm2 = 0.0;
  double wall_time = 0.0;
  // Monitored stability-preservation conditions at this iterate.
  bool wolfe = true;
  bool monotone = true;    // g <= g at iteration 0
  bool above_lb = true;    // expected fitted cost >= J_lb
  bool p_pd = true;
  bool t_pd = true;
};

struct DecisionState {
  Eigen::VectorXd w;
  Eigen::MatrixXd P;
  Eigen::MatrixXd r;  // d_r x K
  int iteration = 0;
  std::vector<IterationRecord> history;
  bool step_underflow = false;
  bool stopped_negative = false;
  std::string stop_reason;

  /// Every recorded iterate satisfies all monitored conditions.
  bool conditions_hold() const;
};

struct ObjectiveValue {
  double g = 0.0;
  double cost = 0.0;
  double penalty = 0.0;
  bool feasible = true;
  double min_eig_P = 0.0;
  double min_eig_T = 0.0;
};

struct FullGradient {
  Eigen::VectorXd w;
  Eigen::MatrixXd P;
  Eigen::MatrixXd r;
  double norm2() const { return w.squaredNorm() + P.squaredNorm() + r.squaredNorm(); }
};

struct WolfeStep {
  bool accepted = false;
  double alpha = 0.0;
  int trials = 0;
  ObjectiveValue value;  // at the accepted point
};

/// Gradient loop over the stacked decision vector (w, P, r).
class Optimizer {
 public:
  /// The references must outlive the optimizer.
  Optimizer(const SosModel& model, const MomentCache& cache, const PolytopicSystem& sys,
            OptimizerConfig cfg);

  const OptimizerConfig& config() const { return cfg_; }
  /// Parameter support used for the expectation (possibly sampled).
  const PolytopicSystem& expectation_system() const { return sys_; }

  ObjectiveValue objective(const Eigen::VectorXd& w, const Eigen::MatrixXd& P,
                           const Eigen::MatrixXd& r) const;
  /// Requires a feasible point unless the objective ignores the penalty.
  FullGradient full_gradient(const Eigen::VectorXd& w, const Eigen::MatrixXd& P,
                             const Eigen::MatrixXd& r) const;
  /// First alpha in alpha_ini * gamma^j meeting the sufficient decrease
  /// condition; accepted = false once alpha drops below 1e-16.
  WolfeStep wolfe_backtrack(const DecisionState& s, double g, const FullGradient& grad) const;

  using Observer = std::function<void(const DecisionState&)>;
  /// Runs N iterations from (w0, P0, r0). Throws InfeasiblePoint when the
  /// start is infeasible or its objective is not below J_lb + rho_ub.
  DecisionState run(const Eigen::VectorXd& w0, const Eigen::MatrixXd& P0, const Eigen::MatrixXd& r0,
                    const Observer& observer = {}) const;

 private:
  bool uses_penalty() const { return cfg_.objective != ObjectiveKind::NoStability; }
  bool uses_cost() const { return cfg_.objective != ObjectiveKind::NoOptimality; }

  const SosModel& model_;
  const MomentCache& cache_;
  PolytopicSystem sys_;
  OptimizerConfig cfg_;
};

/// CSV with columns iter,g,expected_cost,penalty,alpha,min_eig_P,min_eig_T,wall_time.
/// Without timing the last column is written as 0 so reruns compare equal.
void write_iteration_csv(std::ostream& os, const std::vector<IterationRecord>& history,
                         bool with_timing = true);

}  // namespace sosctl
