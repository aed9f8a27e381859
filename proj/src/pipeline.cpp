#include "sosctl/pipeline.hpp"

#include <cmath>

#include "sosctl/errors.hpp"
#include "sosctl/linalg.hpp"

namespace sosctl {

using io::json;

const char* to_string(Mode m) {
  switch (m) {
    case Mode::Proposed: return "proposed";
    case Mode::NoOpt: return "no-opt";
    case Mode::NoOptimality: return "no-optimality";
    case Mode::NoStability: return "no-stability";
  }
  return "?";
}

Mode mode_from_string(const std::string& s) {
  for (Mode m : all_modes()) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError("unknown mode '" + s + "'");
}

std::vector<Mode> all_modes() {
  return {Mode::NoOpt, Mode::NoOptimality, Mode::NoStability, Mode::Proposed};
}

Workspace prepare(io::Problem problem, io::RunSettings settings) {
  SosModel model(problem.bases, problem.sys);
  bool loaded = false;
  MomentCache moments = load_or_compute_moments(problem.cost, problem.sys, problem.measure,
                                                settings.moment_cache, &loaded);
  InitResult init = initialize(model, problem.sys, settings.sdp, settings.sdp_bound);
  return Workspace{std::move(problem), std::move(settings), std::move(model), std::move(moments),
                   loaded, std::move(init)};
}

namespace {

std::string flag_string(const std::vector<IterationRecord>& h, bool IterationRecord::*flag) {
  std::string s;
  s.reserve(h.size());
  for (const auto& r : h) s.push_back(r.*flag ? '1' : '0');
  return s;
}

json init_summary(const Workspace& ws) {
  const auto pe = penalty(ws.model, ws.init.w0, ws.init.P0, ws.init.r0, ws.settings.opt.kappa,
                          ws.settings.opt.rho_ub);
  return {
      {"eps1", ws.init.eps1},
      {"eps2", ws.init.eps2},
      {"equality_residual", ws.init.equality_residual},
      {"min_eig_P0", pe.min_eig_P},
      {"min_eig_T0", pe.min_eig_T},
      {"penalty0", pe.value},
      {"sdp_bound", ws.settings.sdp_bound},
  };
}

}  // namespace

SynthResult synthesize(const Workspace& ws, Mode mode, const Optimizer::Observer& observer) {
  SynthResult out;
  out.mode = mode;
  OptimizerConfig cfg = ws.settings.opt;
  switch (mode) {
    case Mode::Proposed: cfg.objective = ObjectiveKind::Proposed; break;
    case Mode::NoOpt: cfg.objective = ObjectiveKind::Proposed; cfg.N = 0; break;
    case Mode::NoOptimality: cfg.objective = ObjectiveKind::NoOptimality; break;
    case Mode::NoStability: cfg.objective = ObjectiveKind::NoStability; break;
  }
  const Optimizer opt(ws.model, ws.moments, ws.problem.sys, cfg);
  out.state = opt.run(ws.init.w0, ws.init.P0, ws.init.r0, observer);
  const DecisionState& s = out.state;

  io::ControllerFile& c = out.controller;
  c.mode = to_string(mode);
  c.dx = ws.problem.sys.dx();
  c.du = ws.problem.sys.du();
  c.z = ws.problem.cost.z;
  c.Z = ws.problem.cost.Z;
  c.W = poly::inv_vec(s.w, ws.problem.cost.dZr(), ws.problem.cost.dz());
  if (mode != Mode::NoStability) {
    const Certificate cert = make_certificate(ws.model, s.w, s.P, s.r);
    c.certificate = io::ControllerFile::Cert{ws.problem.bases.zeta, cert.P, cert.r, cert.min_eig_P,
                                             cert.min_eig_T};
  }

  const IterationRecord& last = s.history.back();
  json flags = {
      {"wolfe", flag_string(s.history, &IterationRecord::wolfe)},
      {"monotone", flag_string(s.history, &IterationRecord::monotone)},
      {"above_lb", flag_string(s.history, &IterationRecord::above_lb)},
      {"p_pd", flag_string(s.history, &IterationRecord::p_pd)},
      {"t_pd", flag_string(s.history, &IterationRecord::t_pd)},
  };
  out.summary = {
      {"mode", to_string(mode)},
      {"system", ws.problem.source},
      {"iterations", s.iteration},
      {"budget", cfg.N},
      {"stop_reason", s.stop_reason},
      {"step_underflow", s.step_underflow},
      {"stopped_negative", s.stopped_negative},
      {"conditions_hold", s.conditions_hold()},
      {"condition_flags", flags},
      {"initialization", init_summary(ws)},
      {"initial", {{"g", s.history.front().g}, {"expected_fitted_cost", s.history.front().cost}}},
      {"final",
       {{"g", last.g},
        {"expected_fitted_cost", last.cost},
        {"penalty", last.penalty},
        {"min_eig_P", last.min_eig_P},
        {"min_eig_T", last.min_eig_T}}},
      {"settings", io::to_json(ws.settings)},
      {"moments_loaded", ws.moments_loaded},
  };
  return out;
}

std::vector<BoundCheck> residual_bound_check(const io::Problem& problem,
                                             const MomentCache& moments, const Eigen::VectorXd& w,
                                             double eta, const CostTable& table, double slack) {
  std::vector<BoundCheck> out;
  const auto& th = problem.sys.theta();
  std::vector<Eigen::VectorXd> v(th.size());
  std::vector<double> beta(th.size());
  for (int i = 0; i < th.size(); ++i) {
    v[i] = fit_cost_parameters(moments, problem.sys, w, th.points[i], eta).v;
    beta[i] = bellman_bound_diagnostic(problem.cost, problem.sys, v[i], w, th.points[i],
                                       problem.measure.points)
                  .beta_hat;
  }
  for (const auto& cell : table.cells) {
    int i = 0;
    while (i < th.size() && th.points[i] != cell.theta) ++i;
    if (i == th.size()) throw DimensionMismatch("cell parameter not in the support");
    BoundCheck b;
    b.theta = cell.theta;
    b.x0 = cell.x0;
    b.fitted = problem.cost.phi.eval(cell.x0).dot(v[i]);
    b.simulated = cell.cost;
    b.beta_hat = beta[i];
    b.holds = std::isfinite(b.simulated) &&
              std::abs(b.fitted - b.simulated) <= b.beta_hat * b.simulated * slack;
    out.push_back(std::move(b));
  }
  return out;
}

json to_json(const Evaluation& ev) {
  const CostTable& t = ev.table;
  const StabilityReport& r = ev.report;
  json cells = json::array();
  for (const auto& c : t.cells) {
    cells.push_back({
        {"theta", io::vector_to_json(c.theta)},
        {"x0", io::vector_to_json(c.x0)},
        {"prob", c.prob},
        {"status", to_string(c.status)},
        {"cost", std::isfinite(c.cost) ? json(c.cost) : json(nullptr)},
        {"final_norm", c.final_norm},
        {"max_lyapunov_increase", c.max_lyapunov_increase},
    });
  }
  return {
      {"expected_cost", t.diverged ? json("diverged") : json(t.expected)},
      {"diverged", t.diverged},
      {"n_cells", t.cells.size()},
      {"n_diverged", t.n_diverged},
      {"n_converged", t.n_converged},
      {"all_converged", r.all_converged},
      {"lyapunov_checked", r.lyapunov_checked},
      {"lyapunov_nonincreasing", r.lyapunov_nonincreasing},
      {"lyapunov_slack", r.lyapunov_slack},
      {"cells", cells},
  };
}

SimulationResult simulate_controller(const io::Problem& problem, const io::ControllerFile& c,
                                     const SimConfig& cfg, const TrajectorySink& sink) {
  if (c.dx != problem.sys.dx() || c.du != problem.sys.du()) {
    throw DimensionMismatch("controller does not match the system");
  }
  std::optional<LyapunovCertificate> cert;
  if (c.certificate) {
    cert = LyapunovCertificate{problem.bases, c.certificate->P};
  }
  const Controller u = c.controller().as_function();
  const CostModel& cm = problem.cost;
  SimulationResult out;
  out.eval = evaluate_controller(
      problem.sys, u,
      [&cm](const Eigen::VectorXd& x, const Eigen::VectorXd& uu) { return cm.running_cost(x, uu); },
      cfg, cert, 1e-8, sink);
  out.summary = to_json(out.eval);
  out.summary["mode"] = c.mode;
  return out;
}

}  // namespace sosctl
