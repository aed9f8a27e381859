#include "sosctl/optimize.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>

#include "sosctl/errors.hpp"

namespace sosctl {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kMinAlpha = 1e-16;

}  // namespace

const char* to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::Proposed: return "proposed";
    case ObjectiveKind::NoOptimality: return "no-optimality";
    case ObjectiveKind::NoStability: return "no-stability";
  }
  return "?";
}

ObjectiveKind objective_kind_from_string(const std::string& s) {
  if (s == "proposed") return ObjectiveKind::Proposed;
  if (s == "no-optimality") return ObjectiveKind::NoOptimality;
  if (s == "no-stability") return ObjectiveKind::NoStability;
  throw ConfigError("unknown objective '" + s + "'");
}

void OptimizerConfig::validate() const {
  if (N < 0) throw ConfigError("N must be non-negative");
  if (!(chi > 0.0 && chi < 1.0)) throw ConfigError("chi must lie in (0, 1)");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (!(alpha_ini > 0.0)) throw ConfigError("alpha_ini must be positive");
  if (!(kappa > 0.0)) throw ConfigError("kappa must be positive");
  if (!(rho_ub > 0.0)) throw ConfigError("rho_ub must be positive");
  if (!(eta >= 0.0)) throw ConfigError("eta must be non-negative");
  if (theta_samples < 0) throw ConfigError("theta_samples must be non-negative");
}

bool DecisionState::conditions_hold() const {
  for (const auto& h : history) {
    if (!(h.wolfe && h.monotone && h.above_lb && h.p_pd && h.t_pd)) return false;
  }
  return true;
}

Optimizer::Optimizer(const SosModel& model, const MomentCache& cache, const PolytopicSystem& sys,
                     OptimizerConfig cfg)
    : model_(model), cache_(cache), sys_(sys), cfg_(cfg) {
  cfg_.validate();
  if (cache_.K != sys.K() || cache_.dw != model.dw()) {
    throw DimensionMismatch("moment cache does not match the system");
  }
  if (cfg_.theta_samples > 0) {
    const auto& support = sys.theta();
    std::discrete_distribution<int> pick(support.probs.begin(), support.probs.end());
    auto draw = [&](std::mt19937_64& rng) { return support.points[pick(rng)]; };
    sys_.set_theta(FiniteDistribution::sampled(draw, cfg_.theta_samples, cfg_.seed));
  }
}

ObjectiveValue Optimizer::objective(const Eigen::VectorXd& w, const Eigen::MatrixXd& P,
                                    const Eigen::MatrixXd& r) const {
  ObjectiveValue out;
  out.cost = kNaN;
  out.penalty = kNaN;
  out.min_eig_P = kNaN;
  out.min_eig_T = kNaN;
  if (uses_penalty()) {
    const PenaltyEval pe = penalty(model_, w, P, r, cfg_.kappa, cfg_.rho_ub);
    out.penalty = pe.value;
    out.feasible = pe.feasible;
    out.min_eig_P = pe.min_eig_P;
    out.min_eig_T = pe.min_eig_T;
    if (!pe.feasible) {
      // The clamped branch dominates whatever the cost term would add.
      out.g = cfg_.rho_ub;
      return out;
    }
  }
  double g = 0.0;
  if (uses_cost()) {
    out.cost = expected_fitted_cost(cache_, sys_, w, cfg_.eta, false).value;
    g += out.cost;
  } else {
    g += w.squaredNorm();
  }
  if (uses_penalty()) g += out.penalty;
  out.g = g;
  return out;
}

FullGradient Optimizer::full_gradient(const Eigen::VectorXd& w, const Eigen::MatrixXd& P,
                                      const Eigen::MatrixXd& r) const {
  FullGradient out;
  if (uses_cost()) {
    out.w = expected_fitted_cost(cache_, sys_, w, cfg_.eta, true).gradient;
  } else {
    out.w = 2.0 * w;
  }
  if (uses_penalty()) {
    const PenaltyGradient pg = penalty_gradient(model_, w, P, r, cfg_.kappa);
    out.w += pg.w;
    out.P = pg.P;
    out.r = pg.r;
  } else {
    out.P = Eigen::MatrixXd::Zero(P.rows(), P.cols());
    out.r = Eigen::MatrixXd::Zero(r.rows(), r.cols());
  }
  return out;
}

WolfeStep Optimizer::wolfe_backtrack(const DecisionState& s, double g,
                                     const FullGradient& grad) const {
  WolfeStep step;
  const double nrm2 = grad.norm2();
  for (double alpha = cfg_.alpha_ini; alpha >= kMinAlpha; alpha *= cfg_.gamma) {
    ++step.trials;
    const ObjectiveValue trial =
        objective(s.w - alpha * grad.w, s.P - alpha * grad.P, s.r - alpha * grad.r);
    if (trial.g <= g - cfg_.chi * alpha * nrm2) {
      step.accepted = true;
      step.alpha = alpha;
      step.value = trial;
      return step;
    }
  }
  return step;
}

DecisionState Optimizer::run(const Eigen::VectorXd& w0, const Eigen::MatrixXd& P0,
                             const Eigen::MatrixXd& r0, const Observer& observer) const {
  if (w0.size() != model_.dw() || P0.rows() != model_.dz() || P0.cols() != model_.dz() ||
      r0.rows() != model_.dr() || r0.cols() != model_.K()) {
    throw DimensionMismatch("initial decision variables have wrong shape");
  }
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  DecisionState s;
  s.w = w0;
  s.P = P0;
  s.r = r0;

  ObjectiveValue cur = objective(s.w, s.P, s.r);
  if (uses_penalty() && !cur.feasible) {
    throw InfeasiblePoint("initial point violates the positive definiteness conditions");
  }
  if (!(cur.g < cfg_.J_lb + cfg_.rho_ub)) {
    throw InfeasiblePoint("initial objective is not below J_lb + rho_ub");
  }
  const double g0 = cur.g;

  auto record = [&](double alpha, double nrm2, bool wolfe) {
    IterationRecord h;
    h.iter = s.iteration;
    h.g = cur.g;
    h.cost = cur.cost;
    h.penalty = cur.penalty;
    h.alpha = alpha;
    h.min_eig_P = cur.min_eig_P;
    h.min_eig_T = cur.min_eig_T;
    h.grad_norm2 = nrm2;
    h.wall_time = elapsed();
    h.wolfe = wolfe;
    h.monotone = cur.g <= g0;
    h.above_lb = !uses_cost() || cur.cost >= cfg_.J_lb;
    h.p_pd = !uses_penalty() || cur.min_eig_P > 0.0;
    h.t_pd = !uses_penalty() || cur.min_eig_T > 0.0;
    s.history.push_back(h);
    if (observer) observer(s);
  };

  FullGradient grad = cfg_.N > 0 ? full_gradient(s.w, s.P, s.r) : FullGradient{};
  record(0.0, cfg_.N > 0 ? grad.norm2() : 0.0, true);
  if (cfg_.objective == ObjectiveKind::NoStability && cur.cost < 0.0) {
    s.stopped_negative = true;
    s.stop_reason = "negative fitted cost";
    return s;
  }

  for (int it = 0; it < cfg_.N; ++it) {
    const double nrm2 = grad.norm2();
    const WolfeStep step = wolfe_backtrack(s, cur.g, grad);
    if (!step.accepted) {
      s.step_underflow = true;
      s.stop_reason = "step underflow";
      return s;
    }
    s.w -= step.alpha * grad.w;
    s.P -= step.alpha * grad.P;
    s.r -= step.alpha * grad.r;
    ++s.iteration;
    const double g_prev = cur.g;
    cur = step.value;
    record(step.alpha, nrm2, cur.g <= g_prev - cfg_.chi * step.alpha * nrm2);
    if (cfg_.objective == ObjectiveKind::NoStability && cur.cost < 0.0) {
      s.stopped_negative = true;
      s.stop_reason = "negative fitted cost";
      return s;
    }
    if (it + 1 < cfg_.N) grad = full_gradient(s.w, s.P, s.r);
  }
  s.stop_reason = "iteration budget";
  return s;
}

void write_iteration_csv(std::ostream& os, const std::vector<IterationRecord>& history,
                         bool with_timing) {
  os << "iter,g,expected_cost,penalty,alpha,min_eig_P,min_eig_T,wall_time\n";
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << std::setprecision(17);
  for (const auto& h : history) {
    os << h.iter << ',' << h.g << ',' << h.cost << ',' << h.penalty << ',' << h.alpha << ','
       << h.min_eig_P << ',' << h.min_eig_T << ',' << std::setprecision(6) << (with_timing ? h.wall_time : 0.0)
       << std::setprecision(17) << '\n';
  }
  os.flags(flags);
  os.precision(prec);
}

}  // namespace sosctl
