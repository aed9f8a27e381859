#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sosctl/errors.hpp"
#include "sosctl/pipeline.hpp"

namespace fs = std::filesystem;
using sosctl::io::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInfeasible = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitConfig = 4;

int exit_code_for(const sosctl::Error& e) {
  const std::string k = e.kind();
  if (k == "Infeasible" || k == "InfeasiblePoint") return kExitInfeasible;
  if (k == "SingularFit" || k == "NonFinite" || k == "MaxIterations" || k == "BasisOverflow" ||
      k == "SimplexViolation") {
    return kExitNumerical;
  }
  return kExitConfig;
}

// Options shared by all subcommands; unset optionals leave the config value.
struct Common {
  std::string config;
  std::string out = "out";
  std::vector<std::string> modes;
  bool quiet = false;
};

struct SynthFlags {
  std::optional<int> N;
  std::optional<double> kappa, rho_ub, chi, alpha_ini, gamma, eta, J_lb, sdp_bound, grid_step;
  std::optional<std::uint64_t> seed;
  std::optional<int> theta_samples;
  std::optional<std::string> moment_cache;
  bool no_timing = false;
};

struct SimFlags {
  std::optional<double> T, dt, X_max, eps_conv;
  int stride = 100;
  bool no_trajectories = false;
  bool no_bound_check = false;
  std::optional<std::string> moment_cache;
};

json load_config(const Common& c) {
  if (c.config.empty()) return json::object();
  return sosctl::io::read_json_file(c.config);
}

template <class T>
void override_with(json& cfg, const char* section, const char* key, const std::optional<T>& v) {
  if (v) cfg[section][key] = *v;
}

std::vector<sosctl::Mode> selected_modes(const Common& c) {
  if (c.modes.empty() || (c.modes.size() == 1 && c.modes[0] == "all")) return sosctl::all_modes();
  std::vector<sosctl::Mode> out;
  for (const auto& m : c.modes) out.push_back(sosctl::mode_from_string(m));
  return out;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream f(p);
  if (!f) throw sosctl::ConfigError("cannot write '" + p.string() + "'");
  f << s;
}

// ------------------------------------------------------------------ synth

int cmd_synth(const Common& c, const SynthFlags& f) {
  json cfg = load_config(c);
  override_with(cfg, "optimizer", "N", f.N);
  override_with(cfg, "optimizer", "kappa", f.kappa);
  override_with(cfg, "optimizer", "rho_ub", f.rho_ub);
  override_with(cfg, "optimizer", "chi", f.chi);
  override_with(cfg, "optimizer", "alpha_ini", f.alpha_ini);
  override_with(cfg, "optimizer", "gamma", f.gamma);
  override_with(cfg, "optimizer", "eta", f.eta);
  override_with(cfg, "optimizer", "J_lb", f.J_lb);
  override_with(cfg, "optimizer", "seed", f.seed);
  override_with(cfg, "optimizer", "theta_samples", f.theta_samples);
  override_with(cfg, "sdp", "bound", f.sdp_bound);
  override_with(cfg, "measure", "step", f.grid_step);
  if (f.moment_cache) cfg["moment_cache"] = *f.moment_cache;

  const auto modes = selected_modes(c);
  fs::create_directories(c.out);
  auto problem = sosctl::io::problem_from_json(cfg);
  auto settings = sosctl::io::settings_from_json(cfg);
  if (!c.quiet) std::cerr << "preparing moments and initialization\n";
  const sosctl::Workspace ws = sosctl::prepare(std::move(problem), std::move(settings));
  if (!c.quiet) {
    std::cerr << "  eps1 = " << ws.init.eps1 << ", eps2 = " << ws.init.eps2
              << (ws.moments_loaded ? " (moments from cache)" : "") << '\n';
  }
  sosctl::io::write_json_file((fs::path(c.out) / "config.json").string(), cfg);

  for (const auto mode : modes) {
    const std::string name = sosctl::to_string(mode);
    const fs::path dir = fs::path(c.out) / name;
    fs::create_directories(dir);
    auto observer = [&](const sosctl::DecisionState& s) {
      const auto& h = s.history.back();
      if (!c.quiet && h.iter % 100 == 0) {
        std::cerr << "  [" << name << "] iter " << h.iter << "  g = " << h.g << "  alpha = " << h.alpha
                  << '\n';
      }
    };
    const auto res = sosctl::synthesize(ws, mode, observer);
    sosctl::io::write_json_file((dir / "controller.json").string(), sosctl::io::to_json(res.controller));
    std::ostringstream csv;
    sosctl::write_iteration_csv(csv, res.state.history, !f.no_timing);
    write_text(dir / "iterations.csv", csv.str());
    sosctl::io::write_json_file((dir / "summary.json").string(), res.summary);
    if (!c.quiet) {
      std::cerr << name << ": " << res.state.iteration << " iterations (" << res.state.stop_reason
                << "), final g = " << res.state.history.back().g << '\n';
    }
  }
  return kExitOk;
}

// --------------------------------------------------------------- simulate

int cmd_simulate(const Common& c, const SimFlags& f) {
  json cfg = load_config(c);
  const fs::path saved = fs::path(c.out) / "config.json";
  if (c.config.empty() && fs::exists(saved)) cfg = sosctl::io::read_json_file(saved.string());
  override_with(cfg, "simulation", "T", f.T);
  override_with(cfg, "simulation", "dt", f.dt);
  override_with(cfg, "simulation", "X_max", f.X_max);
  override_with(cfg, "simulation", "eps_conv", f.eps_conv);
  if (f.moment_cache) cfg["moment_cache"] = *f.moment_cache;
  const auto problem = sosctl::io::problem_from_json(cfg);
  const auto settings = sosctl::io::settings_from_json(cfg);

  std::vector<sosctl::Mode> modes;
  const bool explicit_modes = !(c.modes.empty() || (c.modes.size() == 1 && c.modes[0] == "all"));
  for (const auto m : selected_modes(c)) {
    const fs::path file = fs::path(c.out) / sosctl::to_string(m) / "controller.json";
    if (fs::exists(file)) {
      modes.push_back(m);
    } else if (explicit_modes) {
      throw sosctl::ConfigError("missing controller file '" + file.string() + "'");
    }
  }
  if (modes.empty()) {
    throw sosctl::ConfigError("no controller files under '" + c.out + "'; run synth first");
  }

  std::optional<sosctl::MomentCache> moments;
  for (const auto mode : modes) {
    const std::string name = sosctl::to_string(mode);
    const fs::path dir = fs::path(c.out) / name;
    const auto ctrl = sosctl::io::controller_from_json(sosctl::io::read_json_file((dir / "controller.json").string()));
    const fs::path tdir = dir / "trajectories";
    if (!f.no_trajectories) fs::create_directories(tdir);
    int cell = 0;
    auto sink = [&](const sosctl::CellResult&, const sosctl::Trajectory& tr) {
      if (f.no_trajectories) return;
      std::ostringstream os;
      sosctl::write_trajectory_csv(os, tr, f.stride);
      write_text(tdir / ("cell_" + std::to_string(cell++) + ".csv"), os.str());
    };
    if (!c.quiet) std::cerr << "simulating " << name << '\n';
    auto res = sosctl::simulate_controller(problem, ctrl, settings.sim, sink);
    if (!f.no_bound_check && !res.eval.table.diverged) {
      if (!moments) {
        moments = sosctl::load_or_compute_moments(problem.cost, problem.sys, problem.measure,
                                                  settings.moment_cache);
      }
      const auto checks = sosctl::residual_bound_check(problem, *moments, ctrl.w(),
                                                       settings.opt.eta, res.eval.table);
      json rows = json::array();
      bool all = true;
      for (const auto& b : checks) {
        all = all && b.holds;
        rows.push_back({{"theta", sosctl::io::vector_to_json(b.theta)},
                        {"x0", sosctl::io::vector_to_json(b.x0)},
                        {"fitted", b.fitted},
                        {"simulated", b.simulated},
                        {"beta_hat", b.beta_hat},
                        {"holds", b.holds}});
      }
      res.summary["residual_bound"] = {{"all_hold", all}, {"slack", 1.1}, {"cells", rows}};
    }
    sosctl::io::write_json_file((dir / "simulation.json").string(), res.summary);
    if (!c.quiet) {
      const auto& t = res.eval.table;
      std::cerr << name << ": expected cost "
                << (t.diverged ? std::string("diverged") : std::to_string(t.expected)) << ", "
                << t.n_converged << "/" << t.cells.size() << " converged\n";
    }
  }
  return kExitOk;
}

// ----------------------------------------------------------------- report

int cmd_report(const Common& c) {
  std::vector<std::string> missing;
  std::vector<sosctl::Mode> present;
  for (const auto m : selected_modes(c)) {
    const fs::path dir = fs::path(c.out) / sosctl::to_string(m);
    std::vector<std::string> need;
    for (const char* file : {"summary.json", "iterations.csv", "simulation.json"}) {
      if (!fs::exists(dir / file)) need.push_back((dir / file).string());
    }
    if (need.size() == 3 && c.modes.empty()) {
      // Mode not synthesized at all; only an error if nothing is present.
      for (auto& n : need) missing.push_back(n);
      continue;
    }
    if (!need.empty()) {
      json err = {{"error", "ConfigError"}, {"message", "missing report inputs"}, {"missing", need}};
      std::cerr << err.dump() << '\n';
      return kExitConfig;
    }
    present.push_back(m);
  }
  if (present.empty()) {
    json err = {{"error", "ConfigError"}, {"message", "missing report inputs"}, {"missing", missing}};
    std::cerr << err.dump() << '\n';
    return kExitConfig;
  }

  json rows = json::array();
  std::ostringstream objective;
  objective << "mode,iter,g\n";
  std::ostringstream table;
  table << "mode,expected_cost,n_converged,n_diverged,n_cells\n";
  for (const auto m : present) {
    const std::string name = sosctl::to_string(m);
    const fs::path dir = fs::path(c.out) / name;
    const json summary = sosctl::io::read_json_file((dir / "summary.json").string());
    json sim = sosctl::io::read_json_file((dir / "simulation.json").string());

    std::ifstream it(dir / "iterations.csv");
    std::string line;
    std::getline(it, line);
    while (std::getline(it, line)) {
      std::istringstream ls(line);
      std::string iter, g;
      std::getline(ls, iter, ',');
      std::getline(ls, g, ',');
      objective << name << ',' << iter << ',' << g << '\n';
    }

    const auto& ec = sim.at("expected_cost");
    table << name << ',' << (ec.is_string() ? ec.get<std::string>() : ec.dump()) << ','
          << sim.at("n_converged") << ',' << sim.at("n_diverged") << ',' << sim.at("n_cells") << '\n';

    // Phase-plane CSV from the stored trajectories, one block per cell.
    const fs::path tdir = dir / "trajectories";
    if (fs::exists(tdir)) {
      std::ostringstream phase;
      phase << "cell,theta1,theta2,t,x1,x2\n";
      const auto& cells = sim.at("cells");
      for (std::size_t k = 0; k < cells.size(); ++k) {
        std::ifstream tf(tdir / ("cell_" + std::to_string(k) + ".csv"));
        if (!tf) continue;
        const auto th = cells[k].at("theta");
        std::string tl;
        std::getline(tf, tl);
        while (std::getline(tf, tl)) {
          std::istringstream ts(tl);
          std::string t, x1, x2;
          std::getline(ts, t, ',');
          std::getline(ts, x1, ',');
          std::getline(ts, x2, ',');
          phase << k << ',' << th[0].dump() << ',' << (th.size() > 1 ? th[1].dump() : "") << ',' << t
                << ',' << x1 << ',' << x2 << '\n';
        }
      }
      write_text(fs::path(c.out) / ("phase_plane_" + name + ".csv"), phase.str());
    }

    sim.erase("cells");
    if (sim.contains("residual_bound")) sim["residual_bound"].erase("cells");
    rows.push_back({{"mode", name},
                    {"synthesis",
                     {{"iterations", summary.at("iterations")},
                      {"stop_reason", summary.at("stop_reason")},
                      {"conditions_hold", summary.at("conditions_hold")},
                      {"initial", summary.at("initial")},
                      {"final", summary.at("final")},
                      {"initialization", summary.at("initialization")}}},
                    {"simulation", sim}});
  }
  write_text(fs::path(c.out) / "objective.csv", objective.str());
  write_text(fs::path(c.out) / "cost_table.csv", table.str());
  sosctl::io::write_json_file((fs::path(c.out) / "report.json").string(), json{{"controllers", rows}});
  if (!c.quiet) std::cerr << "report written for " << present.size() << " controllers\n";
  return kExitOk;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON configuration file");
  app->add_option("--out", c.out, "Output directory")->capture_default_str();
  app->add_option("--mode", c.modes,
                  "Controller mode(s): proposed, no-opt, no-optimality, no-stability or all");
  app->add_flag("--quiet", c.quiet, "Suppress progress output");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stabilizing suboptimal controller synthesis for polytopic polynomial systems"};
  app.require_subcommand(1);

  Common common;
  SynthFlags sf;
  SimFlags mf;

  auto* synth = app.add_subcommand("synth", "Initialize and optimize controllers");
  add_common(synth, common);
  synth->add_option("--N", sf.N, "Iteration budget");
  synth->add_option("--kappa", sf.kappa, "Penalty weight");
  synth->add_option("--rho-ub", sf.rho_ub, "Penalty value outside the feasible set");
  synth->add_option("--chi", sf.chi, "Sufficient-decrease coefficient");
  synth->add_option("--alpha-ini", sf.alpha_ini, "Initial step size");
  synth->add_option("--gamma", sf.gamma, "Backtracking factor");
  synth->add_option("--eta", sf.eta, "Ridge weight of the cost fit");
  synth->add_option("--j-lb", sf.J_lb, "Lower bound on the expected fitted cost");
  synth->add_option("--seed", sf.seed, "Seed for sampled parameter expectations");
  synth->add_option("--theta-samples", sf.theta_samples, "Sampled parameter points (0 = exact)");
  synth->add_option("--sdp-bound", sf.sdp_bound, "Normalization bound of the first SDP");
  synth->add_option("--grid-step", sf.grid_step, "Step of the weight-measure grid");
  synth->add_option("--moment-cache", sf.moment_cache, "Moment cache file");
  synth->add_flag("--no-timing", sf.no_timing, "Write zeros in the wall-time column");

  auto* sim = app.add_subcommand("simulate", "Roll out synthesized controllers");
  add_common(sim, common);
  sim->add_option("--T", mf.T, "Horizon");
  sim->add_option("--dt", mf.dt, "Integration step");
  sim->add_option("--x-max", mf.X_max, "Divergence bound");
  sim->add_option("--eps-conv", mf.eps_conv, "Convergence threshold");
  sim->add_option("--stride", mf.stride, "Keep every k-th trajectory sample")->capture_default_str();
  sim->add_flag("--no-trajectories", mf.no_trajectories, "Skip per-cell trajectory files");
  sim->add_flag("--no-bound-check", mf.no_bound_check, "Skip the residual-bound comparison");
  sim->add_option("--moment-cache", mf.moment_cache, "Moment cache file");

  auto* rep = app.add_subcommand("report", "Merge synthesis and simulation artifacts");
  add_common(rep, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (synth->parsed()) return cmd_synth(common, sf);
    if (sim->parsed()) return cmd_simulate(common, mf);
    if (rep->parsed()) return cmd_report(common);
  } catch (const sosctl::Error& e) {
    std::cerr << json{{"error", e.kind()}, {"message", e.what()}}.dump() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "Error"}, {"message", e.what()}}.dump() << '\n';
    return kExitNumerical;
  }
  return kExitConfig;
}
