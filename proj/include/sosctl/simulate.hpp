#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sosctl/costfit.hpp"
#include "sosctl/soscert.hpp"
#include "sosctl/sysmodel.hpp"

namespace sosctl {

struct SimConfig {
  double T = 30.0;
  double dt = 5e-4;
  double X_max = 1e6;
  double eps_conv = 1e-2;

  /// Throws ConfigError unless T > 0, dt > 0 and X_max > eps_conv > 0.
  void validate() const;
};

enum class TrajStatus { Converged, Bounded, Diverged };
const char* to_string(TrajStatus s);

struct Trajectory {
  std::vector<double> t;
  std::vector<Eigen::VectorXd> x;
  std::vector<Eigen::VectorXd> u;
  TrajStatus status = TrajStatus::Bounded;
};

/// Classic fourth-order Runge-Kutta with a fixed step, stopping early once
/// |x| exceeds X_max or the state stops being finite.
Trajectory integrate(const PolytopicSystem& sys, const Controller& u, const Eigen::VectorXd& x0,
                     const Eigen::VectorXd& theta, const SimConfig& cfg);

using RunningCost = std::function<double(const Eigen::VectorXd& x, const Eigen::VectorXd& u)>;

/// Composite trapezoidal integral of the running cost; +infinity when the
/// trajectory diverged.
double trajectory_cost(const Trajectory& traj, const RunningCost& running);
double trajectory_cost(const Trajectory& traj, const CostModel& model);

struct CellResult {
  Eigen::VectorXd theta;
  Eigen::VectorXd x0;
  double prob = 0.0;
  TrajStatus status = TrajStatus::Bounded;
  double cost = 0.0;
  double final_norm = 0.0;
  /// Largest increase of V between consecutive samples (only with a certificate).
  double max_lyapunov_increase = 0.0;
};

struct CostTable {
  std::vector<CellResult> cells;
  bool diverged = false;
  int n_diverged = 0;
  int n_converged = 0;
  /// Probability-weighted average; +infinity when any cell diverged.
  double expected = 0.0;
};

/// Rolls out every (theta, x0) pair of the system's supports.
CostTable expected_cost(const PolytopicSystem& sys, const Controller& u, const RunningCost& running,
                        const SimConfig& cfg);

struct LyapunovCertificate {
  SosBases bases;
  Eigen::MatrixXd P;
};

struct StabilityReport {
  std::vector<CellResult> cells;
  bool all_converged = false;
  bool any_diverged = false;
  bool lyapunov_checked = false;
  bool lyapunov_nonincreasing = false;
  double lyapunov_slack = 1e-8;
};

/// Status grid over both supports plus, when a certificate is given, a check
/// that V(x(t)) never increases by more than the slack between samples.
StabilityReport stability_report(const PolytopicSystem& sys, const Controller& u,
                                 const SimConfig& cfg,
                                 const std::optional<LyapunovCertificate>& cert = std::nullopt,
                                 double slack = 1e-8);

/// Both in one pass over the cells.
struct Evaluation {
  CostTable table;
  StabilityReport report;
};
/// Receives every rolled-out trajectory (cells in row-major (theta, x0) order).
using TrajectorySink = std::function<void(const CellResult&, const Trajectory&)>;
Evaluation evaluate_controller(const PolytopicSystem& sys, const Controller& u,
                               const RunningCost& running, const SimConfig& cfg,
                               const std::optional<LyapunovCertificate>& cert = std::nullopt,
                               double slack = 1e-8, const TrajectorySink& sink = {});

/// Sup-norm difference between runs with dt and dt/2 on the coarse grid.
double step_halving_error(const PolytopicSystem& sys, const Controller& u,
                          const Eigen::VectorXd& x0, const Eigen::VectorXd& theta,
                          const SimConfig& cfg);

/// t, x1..xd, u1..um rows, one per stored step (every `stride`-th).
void write_trajectory_csv(std::ostream& os, const Trajectory& traj, int stride = 1);

}  // namespace sosctl
