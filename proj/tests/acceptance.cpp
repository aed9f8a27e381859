// End-to-end acceptance run on the built-in benchmark. Prints one PASS/FAIL
// line per criterion and exits nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sosctl/linalg.hpp"
#include "sosctl/pipeline.hpp"
#include "test_support.hpp"

using namespace sosctl;
using sosctl::testing::Benchmark;
using sosctl::testing::rel_err;
using sosctl::testing::vec1;
using sosctl::testing::vec2;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [violated: " << what << "]";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt_cost(const CostTable& t) {
  if (t.diverged) return "diverged(" + std::to_string(t.n_diverged) + " cells)";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", t.expected);
  return buf;
}

struct ModeRun {
  SynthResult synth;
  SimulationResult sim;
};

// Synthesis and simulation for every mode with the default settings.
struct PipelineRun {
  io::RunSettings settings;
  std::map<Mode, ModeRun> modes;
  double seconds = 0.0;
};

PipelineRun run_pipeline(int N) {
  const auto t0 = std::chrono::steady_clock::now();
  PipelineRun run;
  run.settings = io::settings_from_json(io::json::object());
  run.settings.opt.N = N;
  run.settings.moment_cache = SOSCTL_TEST_MOMENT_CACHE;
  const Workspace ws = prepare(io::benchmark_problem(), run.settings);
  for (Mode m : all_modes()) {
    ModeRun r;
    r.synth = synthesize(ws, m);
    r.sim = simulate_controller(ws.problem, r.synth.controller, run.settings.sim);
    std::cerr << "  N=" << N << " " << to_string(m) << ": " << r.synth.state.iteration
              << " iterations, expected cost " << fmt_cost(r.sim.eval.table) << "\n";
    run.modes.emplace(m, std::move(r));
  }
  run.seconds = seconds_since(t0);
  return run;
}

// ------------------------------------------------------------ criterion 1

Outcome benchmark_reproduction(const PipelineRun& full, const PipelineRun& ci) {
  Outcome o;
  const auto& P = full.modes.at(Mode::Proposed).sim.eval.table;
  const auto& A = full.modes.at(Mode::NoOpt).sim.eval.table;
  const auto& B = full.modes.at(Mode::NoOptimality).sim.eval.table;
  const auto& C = full.modes.at(Mode::NoStability).sim.eval.table;
  const auto& Pci = ci.modes.at(Mode::Proposed).sim.eval.table;
  const auto& Aci = ci.modes.at(Mode::NoOpt).sim.eval.table;
  o.detail << "proposed=" << fmt_cost(P) << " no-opt=" << fmt_cost(A) << " no-optimality=" << fmt_cost(B)
           << " no-stability=" << fmt_cost(C) << "; N=200 proposed=" << fmt_cost(Pci)
           << " no-opt=" << fmt_cost(Aci) << "; runtime " << static_cast<int>(full.seconds) << " s";
  o.require(!P.diverged && P.expected >= 50.0 && P.expected <= 110.0, "proposed in [50, 110]");
  o.require(!A.diverged && A.expected >= 900.0 && A.expected <= 1700.0, "no-opt in [900, 1700]");
  o.require(!B.diverged && B.expected >= 110.0 && B.expected <= 220.0, "no-optimality in [110, 220]");
  o.require(!P.diverged && !A.diverged && P.expected < A.expected, "proposed < no-opt");
  o.require(!P.diverged && !B.diverged && P.expected < B.expected, "proposed < no-optimality");
  o.require(C.n_diverged >= 1, "no-stability has a diverged cell");
  o.require(!Pci.diverged && !Aci.diverged && Pci.expected < Aci.expected, "N=200 proposed < no-opt");
  o.require(full.seconds <= 1800.0, "runtime <= 30 min");
  return o;
}

// ------------------------------------------------------------ criterion 2

Outcome stability(const PipelineRun& full) {
  Outcome o;
  for (Mode m : {Mode::Proposed, Mode::NoOpt}) {
    const Evaluation& ev = full.modes.at(m).sim.eval;
    double worst_norm = 0.0, worst_rise = -std::numeric_limits<double>::infinity();
    for (const auto& c : ev.table.cells) {
      worst_norm = std::max(worst_norm, c.final_norm);
      worst_rise = std::max(worst_rise, c.max_lyapunov_increase);
    }
    o.detail << to_string(m) << ": " << ev.table.n_converged << "/" << ev.table.cells.size()
             << " converged, max |x(T)|=" << worst_norm << ", max V rise=" << worst_rise << "; ";
    o.require(ev.table.cells.size() == 128 && ev.report.all_converged && worst_norm < 1e-2,
              std::string(to_string(m)) + " all cells converge");
    o.require(ev.report.lyapunov_checked && ev.report.lyapunov_nonincreasing,
              std::string(to_string(m)) + " V nonincreasing");
  }
  return o;
}

// ------------------------------------------------------------ criterion 3

Outcome gradients(const Benchmark& bm) {
  Outcome o;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> ut(0.0, 1.0);
  const int dw = bm.cost.dw();
  double worst_cost = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd w =
        bm.init.w0 + sosctl::testing::random_vector(dw, rng, 0.05 * bm.init.w0.norm() / std::sqrt(dw));
    const Eigen::VectorXd th = vec2(ut(rng), ut(rng));
    const Eigen::VectorXd g = cost_gradient(bm.moments, bm.sys, w, th, 0.0);
    auto J = [&](const Eigen::VectorXd& ww) {
      return bm.moments.Ephi0.dot(fit_cost_parameters(bm.moments, bm.sys, ww, th, 0.0).v);
    };
    Eigen::VectorXd fd(dw);
    for (int i = 0; i < dw; ++i) {
      const double h = 1e-5 * std::max(1.0, std::abs(w[i]));
      Eigen::VectorXd e = Eigen::VectorXd::Zero(dw);
      e[i] = h;
      fd[i] = (J(w + e) - J(w - e)) / (2 * h);
    }
    worst_cost = std::max(worst_cost, (g - fd).norm() / g.norm());
  }

  const SosModel& m = bm.model;
  const double kappa = 0.1, h = 1e-6;
  double worst_pen = 0.0;
  int checked = 0;
  while (checked < 10) {
    const Eigen::VectorXd w = bm.init.w0 + sosctl::testing::random_vector(m.dw(), rng, 0.02);
    Eigen::MatrixXd dP = sosctl::testing::random_matrix(m.dz(), m.dz(), rng, 0.02 * bm.init.P0.norm());
    const Eigen::MatrixXd P = bm.init.P0 + dP + dP.transpose();
    const Eigen::MatrixXd r = bm.init.r0 + sosctl::testing::random_matrix(m.dr(), m.K(), rng, 0.02);
    if (!penalty(m, w, P, r, kappa, 1e20).feasible) continue;
    ++checked;
    const PenaltyGradient g = penalty_gradient(m, w, P, r, kappa);
    auto f = [&](const Eigen::VectorXd& ww, const Eigen::MatrixXd& PP, const Eigen::MatrixXd& rr) {
      return penalty(m, ww, PP, rr, kappa, 1e20).value;
    };
    Eigen::VectorXd fw(m.dw());
    for (int j = 0; j < m.dw(); ++j) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(m.dw());
      e[j] = h;
      fw[j] = (f(w + e, P, r) - f(w - e, P, r)) / (2 * h);
    }
    Eigen::MatrixXd fP(m.dz(), m.dz());
    for (int a = 0; a < m.dz(); ++a) {
      for (int b = 0; b < m.dz(); ++b) {
        Eigen::MatrixXd E = Eigen::MatrixXd::Zero(m.dz(), m.dz());
        E(a, b) = h;
        fP(a, b) = (f(w, P + E, r) - f(w, P - E, r)) / (2 * h);
      }
    }
    Eigen::MatrixXd fr(m.dr(), m.K());
    for (int a = 0; a < m.dr(); ++a) {
      for (int b = 0; b < m.K(); ++b) {
        Eigen::MatrixXd E = Eigen::MatrixXd::Zero(m.dr(), m.K());
        E(a, b) = h;
        fr(a, b) = (f(w, P, r + E) - f(w, P, r - E)) / (2 * h);
      }
    }
    worst_pen = std::max({worst_pen, rel_err(g.w, fw), rel_err(g.P, fP), rel_err(g.r, fr)});
  }
  o.detail << "cost gradient max rel err " << worst_cost << " over 20 pairs; penalty gradient max rel err "
           << worst_pen << " over 10 points";
  o.require(worst_cost < 1e-4, "cost gradient < 1e-4");
  o.require(worst_pen < 1e-5, "penalty gradient < 1e-5");
  return o;
}

// ------------------------------------------------------------ criterion 4

Outcome fit_optimality() {
  Outcome o;
  // 1-D sandbox dx/dt = x + u with q = x^2, R = 1, phi = [x^2], u = w x.
  const PolytopicSystem ssys = sosctl::testing::scalar_linear_system(1.0, 1.0, {vec1(-1.0), vec1(2.0)});
  const CostModel scost = sosctl::testing::scalar_cost_model(1.0);
  const WeightMeasure smeas = WeightMeasure::grid(1, -1.0, 1.0, 0.1);
  const MomentCache smom = compute_moments(scost, ssys, smeas);
  double worst_sandbox = 0.0;
  for (double w : {-3.0, -2.0, -1.5, -5.0}) {
    const Eigen::VectorXd v = fit_cost_parameters(smom, ssys, vec1(w), vec1(0), 0.0).v;
    const Eigen::VectorXd bf = sosctl::testing::brute_force_fit(scost, ssys, smeas, vec1(w), vec1(0), 0.0);
    worst_sandbox = std::max(worst_sandbox, rel_err(v, bf));
  }

  // Benchmark on the 3 x 3 grid {-1, 0, 1}^2. With 27 features and 9 points
  // the normal equations are singular, so both sides use the same ridge.
  const PolytopicSystem bsys = benchmark_system();
  const CostModel bcost = benchmark_cost_model();
  const WeightMeasure bmeas = WeightMeasure::grid(2, -1.0, 1.0, 1.0);
  const MomentCache bmom = compute_moments(bcost, bsys, bmeas);
  const double eta = 1e-2;
  std::mt19937_64 rng(8);
  double worst_bench = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::VectorXd w = sosctl::testing::random_vector(bcost.dw(), rng, 0.5);
    const Eigen::VectorXd th = vec2(0.25 * trial, 1.0 - 0.2 * trial);
    const Eigen::VectorXd v = fit_cost_parameters(bmom, bsys, w, th, eta).v;
    const Eigen::VectorXd bf = sosctl::testing::brute_force_fit(bcost, bsys, bmeas, w, th, eta);
    worst_bench = std::max(worst_bench, rel_err(v, bf));
  }

  std::uniform_real_distribution<double> pm(-1e-3, 1e-3);
  int lowered = 0, tried = 0;
  {
    const Eigen::VectorXd w = sosctl::testing::random_vector(bcost.dw(), rng, 0.5);
    const Eigen::VectorXd th = vec2(0.1, 0.9);
    const Eigen::VectorXd v = fit_cost_parameters(bmom, bsys, w, th, eta).v;
    const double f0 = fit_objective_direct(bcost, bsys, bmeas, v, w, th, eta);
    for (int i = 0; i < 200; ++i, ++tried) {
      Eigen::VectorXd d(v.size());
      for (int j = 0; j < d.size(); ++j) d[j] = pm(rng);
      if (fit_objective_direct(bcost, bsys, bmeas, v + d, w, th, eta) < f0) ++lowered;
    }
  }
  {
    const Eigen::VectorXd v = fit_cost_parameters(smom, ssys, vec1(-2.0), vec1(0), 0.0).v;
    const double f0 = fit_objective_direct(scost, ssys, smeas, v, vec1(-2.0), vec1(0), 0.0);
    for (int i = 0; i < 50; ++i, ++tried) {
      if (fit_objective_direct(scost, ssys, smeas, v + vec1(pm(rng)), vec1(-2.0), vec1(0), 0.0) < f0) {
        ++lowered;
      }
    }
  }
  o.detail << "sandbox max rel err " << worst_sandbox << "; 9-point benchmark max rel err " << worst_bench
           << " (ridge " << eta << "); " << lowered << "/" << tried << " perturbations lowered the objective";
  o.require(worst_sandbox < 1e-8, "sandbox oracle < 1e-8");
  o.require(worst_bench < 1e-8, "benchmark oracle < 1e-8");
  o.require(lowered == 0, "no perturbation lowers the objective");
  return o;
}

// ------------------------------------------------------------ criterion 5

Outcome gram_reconstruction(const Benchmark& bm) {
  Outcome o;
  const SosModel& m = bm.model;
  std::mt19937_64 rng(50);
  double worst_defect = 0.0;
  bool symmetric = true, free_exact = true;
  struct Point {
    Eigen::VectorXd w;
    Eigen::MatrixXd P, r;
  };
  auto draw = [&] {
    return Point{sosctl::testing::random_vector(m.dw(), rng), sosctl::testing::random_spd(m.dz(), rng),
                 sosctl::testing::random_matrix(m.dr(), m.K(), rng)};
  };
  for (int trial = 0; trial < 50; ++trial) {
    const Point p = draw();
    for (int k = 0; k < m.K(); ++k) {
      const Eigen::VectorXd rk = p.r.col(k);
      const Eigen::MatrixXd T = solve_T_k(m, p.w, p.P, rk, k);
      symmetric = symmetric && (T - T.transpose()).norm() == 0.0;
      worst_defect = std::max(worst_defect, identity_defect(m, bm.sys, T, p.w, p.P, k).cwiseAbs().maxCoeff());
      free_exact = free_exact && T(4, 2) == rk[0] && T(2, 1) == rk[1] && T(3, 1) == rk[2];
    }
  }
  double worst_super = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const Point a = draw(), b = draw();
    const Eigen::VectorXd r0 = Eigen::VectorXd::Zero(m.dr());
    const Eigen::VectorXd wz = Eigen::VectorXd::Zero(m.dw());
    for (int k = 0; k < m.K(); ++k) {
      const Eigen::MatrixXd lin_P = solve_T_k(m, a.w, 2.0 * a.P - 0.5 * b.P, r0, k) -
                                    (2.0 * solve_T_k(m, a.w, a.P, r0, k) - 0.5 * solve_T_k(m, a.w, b.P, r0, k));
      const Eigen::MatrixXd aff_w = solve_T_k(m, a.w + b.w, a.P, r0, k) + solve_T_k(m, wz, a.P, r0, k) -
                                    solve_T_k(m, a.w, a.P, r0, k) - solve_T_k(m, b.w, a.P, r0, k);
      const Eigen::VectorXd ra = a.r.col(k), rb = b.r.col(k);
      const Eigen::MatrixXd dA = solve_T_k(m, a.w, a.P, ra, k) - solve_T_k(m, a.w, a.P, r0, k);
      const Eigen::MatrixXd dB = solve_T_k(m, b.w, b.P, rb, k) - solve_T_k(m, b.w, b.P, r0, k);
      const Eigen::MatrixXd dAB = solve_T_k(m, b.w, a.P, ra + 3.0 * rb, k) - solve_T_k(m, b.w, a.P, r0, k);
      const double scale = std::max(1.0, solve_T_k(m, a.w, a.P, ra, k).norm());
      worst_super = std::max({worst_super, lin_P.norm() / scale, aff_w.norm() / scale,
                              (dAB - dA - 3.0 * dB).norm() / scale});
    }
  }
  o.detail << "max identity defect " << worst_defect << " over 50 points x 4 vertices; symmetric="
           << (symmetric ? "yes" : "no") << "; free entries exact=" << (free_exact ? "yes" : "no")
           << "; superposition max rel residual " << worst_super;
  o.require(worst_defect < 1e-10, "identity defect < 1e-10");
  o.require(symmetric, "T symmetric");
  o.require(free_exact, "free entries equal r");
  o.require(worst_super < 1e-12, "bilinear in (w, P), linear in r");
  return o;
}

// ------------------------------------------------------------ criterion 6

Outcome initialization(const Benchmark& bm) {
  Outcome o;
  const InitResult& i = bm.init;
  double minT = std::numeric_limits<double>::infinity();
  for (const auto& T : bm.model.T_all(i.w0, i.P0, i.r0)) minT = std::min(minT, min_eig(T));
  const double minP = min_eig(sym(i.P0));
  o.detail << "eps1=" << i.eps1 << " eps2=" << i.eps2 << " min eig P0=" << minP << " min eig T=" << minT
           << " equality residual=" << i.equality_residual;
  o.require(i.eps1 > 0.0 && i.eps2 > 0.0, "both margins positive");
  o.require(minP > 0.0, "P0 positive definite");
  o.require(minT > 0.0, "all T_k positive definite");
  o.require(i.equality_residual < 1e-10, "equality residual < 1e-10");
  return o;
}

// ------------------------------------------------------------ criterion 7

Outcome monitoring(const PipelineRun& full) {
  Outcome o;
  const DecisionState& s = full.modes.at(Mode::Proposed).synth.state;
  int bad_wolfe = 0, bad_p = 0, bad_t = 0;
  for (const auto& h : s.history) {
    bad_wolfe += !h.wolfe;
    bad_p += !h.p_pd;
    bad_t += !h.t_pd;
  }
  o.detail << s.iteration << " iterations (" << s.stop_reason << "); violations: decrease " << bad_wolfe
           << ", P pd " << bad_p << ", T pd " << bad_t;
  o.require(s.iteration == full.settings.opt.N || s.step_underflow, "full run");
  o.require(bad_wolfe == 0, "decrease inequality");
  o.require(bad_p == 0 && bad_t == 0, "positive definiteness flags");
  return o;
}

// ------------------------------------------------------------ criterion 8

Outcome residual_bound(const PipelineRun& full, const Benchmark& bm) {
  Outcome o;
  const ModeRun& r = full.modes.at(Mode::Proposed);
  const io::Problem problem = io::benchmark_problem();
  const auto checks = residual_bound_check(problem, bm.moments, r.synth.controller.w(), full.settings.opt.eta,
                                           r.sim.eval.table, 1.1);
  int holds = 0;
  double worst_ratio = 0.0;
  for (const auto& c : checks) {
    holds += c.holds;
    worst_ratio = std::max(worst_ratio, std::abs(c.fitted - c.simulated) / (c.beta_hat * c.simulated));
  }
  o.detail << holds << "/" << checks.size() << " (theta, x0) cells within bound; max |J_fit - J_sim| / "
           << "(beta_hat J_sim) = " << worst_ratio;
  o.require(!checks.empty() && holds == static_cast<int>(checks.size()), "bound at every cell");
  return o;
}

// ------------------------------------------------------------ criterion 9

Outcome plumbing(const PipelineRun& full) {
  Outcome o;
  std::mt19937_64 rng(11);
  bool exact = true;
  for (int n = 1; n <= 8; ++n) {
    const Eigen::MatrixXd a = sosctl::testing::random_matrix(n, n + 2, rng);
    exact = exact && poly::inv_vec(poly::vec(a), n, n + 2) == a;
    const Eigen::MatrixXd s = a.leftCols(n) + a.leftCols(n).transpose();
    exact = exact && poly::inv_vech(poly::vech(s)) == s;
    const Eigen::VectorXd h = sosctl::testing::random_vector(n * (n + 1) / 2, rng);
    exact = exact && poly::vech(poly::inv_vech(h)) == h;
  }

  double worst_jac = 0.0;
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  const double step = 1e-6;
  for (const auto& b : {poly::graded_basis(2, 1, 6), poly::graded_basis(2, 1, 2), poly::graded_basis(2, 0, 2)}) {
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::VectorXd x = vec2(u(rng), u(rng));
      const Eigen::MatrixXd J = b.jacobian(x);
      for (int j = 0; j < 2; ++j) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(2);
        e[j] = step;
        const Eigen::VectorXd fd = (b.eval(x + e) - b.eval(x - e)) / (2 * step);
        for (int i = 0; i < b.size(); ++i) {
          worst_jac = std::max(worst_jac, std::abs(fd[i] - J(i, j)) / std::max(1.0, std::abs(J(i, j))));
        }
      }
    }
  }

  // Step halving on every converged benchmark trajectory of every mode.
  const PolytopicSystem sys = benchmark_system();
  double worst_step = 0.0;
  int cells = 0;
  for (const auto& [mode, run] : full.modes) {
    const Controller ctrl = run.synth.controller.controller().as_function();
    for (const auto& c : run.sim.eval.table.cells) {
      if (c.status != TrajStatus::Converged) continue;
      worst_step = std::max(worst_step, step_halving_error(sys, ctrl, c.x0, c.theta, full.settings.sim));
      ++cells;
    }
  }
  o.detail << "round trips exact=" << (exact ? "yes" : "no") << "; max Jacobian rel err " << worst_jac
           << "; step halving max " << worst_step << " over " << cells << " converged trajectories (dt="
           << full.settings.sim.dt << ")";
  o.require(exact, "exact round trips");
  o.require(worst_jac < 1e-6, "Jacobians < 1e-6");
  o.require(cells > 0 && worst_step < 1e-5, "step halving < 1e-5");
  return o;
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  std::cerr << "benchmark setup\n";
  const Benchmark& bm = Benchmark::get();
  std::cerr << "full run (N=2000)\n";
  const PipelineRun full = run_pipeline(2000);
  std::cerr << "CI-scale run (N=200)\n";
  const PipelineRun ci = run_pipeline(200);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"benchmark reproduction", [&] { return benchmark_reproduction(full, ci); }},
      {"closed-loop stability", [&] { return stability(full); }},
      {"gradient correctness", [&] { return gradients(bm); }},
      {"fit optimality", [&] { return fit_optimality(); }},
      {"Gram matrix reconstruction", [&] { return gram_reconstruction(bm); }},
      {"initialization chain", [&] { return initialization(bm); }},
      {"descent monitoring", [&] { return monitoring(full); }},
      {"residual bound diagnostic", [&] { return residual_bound(full, bm); }},
      {"numerical plumbing", [&] { return plumbing(full); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o = criteria[i].second();
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first
              << "): " << o.detail.str() << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed in "
            << static_cast<int>(seconds_since(t0)) << " s" << std::endl;
  return failed == 0 ? 0 : 1;
}
