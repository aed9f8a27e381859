#include "sosctl/simulate.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "sosctl/errors.hpp"

namespace sosctl {

void SimConfig::validate() const {
  if (!(T > 0.0)) throw ConfigError("horizon T must be positive");
  if (!(dt > 0.0)) throw ConfigError("step dt must be positive");
  if (!(eps_conv > 0.0)) throw ConfigError("convergence threshold must be positive");
  if (!(X_max > eps_conv)) throw ConfigError("divergence bound must exceed the convergence threshold");
}

const char* to_string(TrajStatus s) {
  switch (s) {
    case TrajStatus::Converged: return "converged";
    case TrajStatus::Bounded: return "bounded";
    case TrajStatus::Diverged: return "diverged";
  }
  return "?";
}

Trajectory integrate(const PolytopicSystem& sys, const Controller& u, const Eigen::VectorXd& x0,
                     const Eigen::VectorXd& theta, const SimConfig& cfg) {
  cfg.validate();
  if (x0.size() != sys.dx()) throw DimensionMismatch("initial state has wrong dimension");
  const Eigen::VectorXd h = sys.weights(theta);
  const long steps = std::lround(cfg.T / cfg.dt);
  const double dt = cfg.T / static_cast<double>(steps);
  std::vector<poly::PolyMatrix> Fs, Gs;
  for (int k = 0; k < sys.K(); ++k) {
    Fs.push_back(sys.F(k));
    Gs.push_back(sys.G(k));
  }
  const auto Fm = poly::FlatPolyMatrix::combination(Fs, h);
  const auto Gm = poly::FlatPolyMatrix::combination(Gs, h);
  const poly::FlatPolyMatrix zf(poly::PolyMatrix::from_basis_column(sys.z()));
  auto rhs = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    Eigen::VectorXd out = Fm.eval(x) * zf.eval(x) + Gm.eval(x) * u(x);
    if (!out.allFinite()) throw NonFinite("closed-loop right-hand side is not finite");
    return out;
  };

  Trajectory tr;
  tr.t.reserve(steps + 1);
  tr.x.reserve(steps + 1);
  tr.u.reserve(steps + 1);
  Eigen::VectorXd x = x0;
  tr.t.push_back(0.0);
  tr.x.push_back(x);
  tr.u.push_back(u(x));
  for (long i = 0; i < steps; ++i) {
    Eigen::VectorXd xn;
    try {
      const Eigen::VectorXd k1 = rhs(x);
      const Eigen::VectorXd k2 = rhs(x + 0.5 * dt * k1);
      const Eigen::VectorXd k3 = rhs(x + 0.5 * dt * k2);
      const Eigen::VectorXd k4 = rhs(x + dt * k3);
      xn = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    } catch (const NonFinite&) {
      tr.status = TrajStatus::Diverged;
      return tr;
    }
    if (!xn.allFinite() || xn.norm() > cfg.X_max) {
      tr.status = TrajStatus::Diverged;
      return tr;
    }
    x = std::move(xn);
    tr.t.push_back(static_cast<double>(i + 1) * dt);
    tr.x.push_back(x);
    tr.u.push_back(u(x));
  }
  tr.status = x.norm() < cfg.eps_conv ? TrajStatus::Converged : TrajStatus::Bounded;
  return tr;
}

double trajectory_cost(const Trajectory& traj, const RunningCost& running) {
  if (traj.status == TrajStatus::Diverged) return std::numeric_limits<double>::infinity();
  double acc = 0.0;
  double prev = traj.x.empty() ? 0.0 : running(traj.x[0], traj.u[0]);
  for (std::size_t i = 1; i < traj.x.size(); ++i) {
    const double cur = running(traj.x[i], traj.u[i]);
    acc += 0.5 * (traj.t[i] - traj.t[i - 1]) * (prev + cur);
    prev = cur;
  }
  return acc;
}

double trajectory_cost(const Trajectory& traj, const CostModel& model) {
  return trajectory_cost(traj, [&](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    return model.running_cost(x, u);
  });
}

namespace {

CellResult run_cell(const PolytopicSystem& sys, const Controller& u, const RunningCost* running,
                    const SimConfig& cfg, const std::optional<LyapunovCertificate>& cert,
                    const Eigen::VectorXd& theta, const Eigen::VectorXd& x0, double prob,
                    const TrajectorySink& sink) {
  CellResult c;
  c.theta = theta;
  c.x0 = x0;
  c.prob = prob;
  const Trajectory tr = integrate(sys, u, x0, theta, cfg);
  c.status = tr.status;
  c.final_norm = tr.x.back().norm();
  if (running) c.cost = trajectory_cost(tr, *running);
  if (cert) {
    double prev = lyapunov_eval(cert->bases, cert->P, tr.x.front());
    for (std::size_t i = 1; i < tr.x.size(); ++i) {
      const double v = lyapunov_eval(cert->bases, cert->P, tr.x[i]);
      c.max_lyapunov_increase = std::max(c.max_lyapunov_increase, v - prev);
      prev = v;
    }
  }
  if (sink) sink(c, tr);
  return c;
}

}  // namespace

Evaluation evaluate_controller(const PolytopicSystem& sys, const Controller& u,
                               const RunningCost& running, const SimConfig& cfg,
                               const std::optional<LyapunovCertificate>& cert, double slack,
                               const TrajectorySink& sink) {
  cfg.validate();
  Evaluation ev;
  CostTable& tab = ev.table;
  StabilityReport& rep = ev.report;
  rep.lyapunov_checked = cert.has_value();
  rep.lyapunov_slack = slack;
  const auto& th = sys.theta();
  const auto& xs = sys.x0();
  double acc = 0.0;
  for (int i = 0; i < th.size(); ++i) {
    for (int j = 0; j < xs.size(); ++j) {
      CellResult c = run_cell(sys, u, running ? &running : nullptr, cfg, cert, th.points[i],
                              xs.points[j], th.probs[i] * xs.probs[j], sink);
      if (c.status == TrajStatus::Diverged) ++tab.n_diverged;
      if (c.status == TrajStatus::Converged) ++tab.n_converged;
      if (c.status != TrajStatus::Diverged) acc += c.prob * c.cost;
      tab.cells.push_back(std::move(c));
    }
  }
  tab.diverged = tab.n_diverged > 0;
  tab.expected = tab.diverged ? std::numeric_limits<double>::infinity() : acc;
  rep.cells = tab.cells;
  rep.any_diverged = tab.diverged;
  rep.all_converged = tab.n_converged == static_cast<int>(tab.cells.size());
  rep.lyapunov_nonincreasing = rep.lyapunov_checked;
  for (const auto& c : rep.cells) {
    if (c.status == TrajStatus::Diverged || c.max_lyapunov_increase > slack) {
      rep.lyapunov_nonincreasing = false;
    }
  }
  return ev;
}

CostTable expected_cost(const PolytopicSystem& sys, const Controller& u, const RunningCost& running,
                        const SimConfig& cfg) {
  return evaluate_controller(sys, u, running, cfg).table;
}

StabilityReport stability_report(const PolytopicSystem& sys, const Controller& u,
                                 const SimConfig& cfg,
                                 const std::optional<LyapunovCertificate>& cert, double slack) {
  return evaluate_controller(sys, u, RunningCost{}, cfg, cert, slack).report;
}

double step_halving_error(const PolytopicSystem& sys, const Controller& u,
                          const Eigen::VectorXd& x0, const Eigen::VectorXd& theta,
                          const SimConfig& cfg) {
  SimConfig fine = cfg;
  fine.dt = cfg.dt / 2.0;
  const Trajectory a = integrate(sys, u, x0, theta, cfg);
  const Trajectory b = integrate(sys, u, x0, theta, fine);
  if (a.status == TrajStatus::Diverged || b.status == TrajStatus::Diverged) {
    return std::numeric_limits<double>::infinity();
  }
  double err = 0.0;
  for (std::size_t i = 0; i < a.x.size() && 2 * i < b.x.size(); ++i) {
    err = std::max(err, (a.x[i] - b.x[2 * i]).cwiseAbs().maxCoeff());
  }
  return err;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj, int stride) {
  if (stride < 1) stride = 1;
  const int dx = traj.x.empty() ? 0 : static_cast<int>(traj.x.front().size());
  const int du = traj.u.empty() ? 0 : static_cast<int>(traj.u.front().size());
  os << "t";
  for (int i = 0; i < dx; ++i) os << ",x" << i + 1;
  for (int i = 0; i < du; ++i) os << ",u" << i + 1;
  os << '\n';
  const auto prec = os.precision();
  os << std::setprecision(12);
  const std::size_t n = traj.x.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (i % stride != 0 && i + 1 != n) continue;
    os << traj.t[i];
    for (int j = 0; j < dx; ++j) os << ',' << traj.x[i][j];
    for (int j = 0; j < du; ++j) os << ',' << traj.u[i][j];
    os << '\n';
  }
  os.precision(prec);
}

}  // namespace sosctl
