#pragma once

#include <string>
#include <vector>

#include "sosctl/io.hpp"

namespace sosctl {

/// Controller variants compared on the benchmark.
///  - Proposed:     gradient loop on expected fitted cost + penalty
///  - NoOpt:        the initialization output, no gradient loop
///  - NoOptimality: gradient loop on |w|^2 + penalty
///  - NoStability:  gradient loop on expected fitted cost alone
enum class Mode { Proposed, NoOpt, NoOptimality, NoStability };

const char* to_string(Mode m);
/// Accepts "proposed", "no-opt", "no-optimality", "no-stability".
Mode mode_from_string(const std::string& s);
std::vector<Mode> all_modes();

/// Shared state of one synthesis session: moments and the initialization
/// are computed once and reused by every mode.
struct Workspace {
  io::Problem problem;
  io::RunSettings settings;
  SosModel model;
  MomentCache moments;
  bool moments_loaded = false;
  InitResult init;
};

/// Builds the certificate model, loads or computes the moments (cached at
/// settings.moment_cache when non-empty) and solves both initialization SDPs.
Workspace prepare(io::Problem problem, io::RunSettings settings);

struct SynthResult {
  Mode mode = Mode::Proposed;
  DecisionState state;
  io::ControllerFile controller;
  io::json summary;
};

/// Runs one mode. NoOpt never enters the gradient loop.
SynthResult synthesize(const Workspace& ws, Mode mode,
                       const Optimizer::Observer& observer = {});

/// Per-cell comparison of the fitted cost phi(x0)^T v(w, theta) with the
/// simulated cost, against the sampled residual bound beta_hat(theta).
struct BoundCheck {
  Eigen::VectorXd theta;
  Eigen::VectorXd x0;
  double fitted = 0.0;
  double simulated = 0.0;
  double beta_hat = 0.0;
  bool holds = false;  // |fitted - simulated| <= beta_hat * simulated * slack
};

std::vector<BoundCheck> residual_bound_check(const io::Problem& problem,
                                             const MomentCache& moments, const Eigen::VectorXd& w,
                                             double eta, const CostTable& table,
                                             double slack = 1.1);

struct SimulationResult {
  Evaluation eval;
  io::json summary;
};

/// Rolls out a controller over every (theta, x0) cell and checks the
/// certificate when the controller file carries one.
SimulationResult simulate_controller(const io::Problem& problem, const io::ControllerFile& c,
                                     const SimConfig& cfg, const TrajectorySink& sink = {});

/// Summary JSON of an evaluation (expected cost, statuses, per-cell table).
io::json to_json(const Evaluation& ev);

}  // namespace sosctl
