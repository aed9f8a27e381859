#include "sosctl/io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "sosctl/errors.hpp"

namespace sosctl::io {

using poly::Monomial;
using poly::MonomialBasis;
using poly::Polynomial;
using poly::PolyMatrix;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

std::vector<std::vector<int>> exponent_lists(const json& j) {
  try {
    return j.get<std::vector<std::vector<int>>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad exponent list: ") + e.what());
  }
}

FiniteDistribution distribution_from_json(const json& j, const std::string& where) {
  check_keys(j, {"points", "probs", "grid", "exclude_origin"}, where);
  if (j.contains("grid")) {
    std::vector<std::vector<double>> axes;
    try {
      axes = j.at("grid").get<std::vector<std::vector<double>>>();
    } catch (const json::exception& e) {
      throw ConfigError(where + ".grid: " + e.what());
    }
    if (get_or(j, "exclude_origin", false)) {
      const Eigen::VectorXd origin = Eigen::VectorXd::Zero(static_cast<int>(axes.size()));
      return FiniteDistribution::uniform_grid(axes, &origin);
    }
    return FiniteDistribution::uniform_grid(axes);
  }
  if (!j.contains("points")) throw ConfigError(where + " needs 'points' or 'grid'");
  std::vector<Eigen::VectorXd> pts;
  for (const auto& p : j.at("points")) pts.push_back(vector_from_json(p));
  FiniteDistribution d = FiniteDistribution::uniform(std::move(pts));
  if (j.contains("probs")) {
    d.probs = j.at("probs").get<std::vector<double>>();
  }
  d.validate(where.c_str());
  return d;
}

}  // namespace

// ------------------------------------------------------------ primitives

json to_json(const Polynomial& p) {
  json out = json::array();
  for (const auto& [m, c] : p.terms()) out.push_back({{"c", c}, {"e", m.exponents()}});
  return out;
}

Polynomial polynomial_from_json(const json& j, int dim) {
  if (j.is_number()) return Polynomial(dim, j.get<double>());
  if (!j.is_array()) throw ConfigError("polynomial must be a number or a list of terms");
  Polynomial p(dim);
  for (const auto& t : j) {
    if (!t.is_object() || !t.contains("c") || !t.contains("e")) {
      throw ConfigError("polynomial term needs 'c' and 'e'");
    }
    const auto e = t.at("e").get<std::vector<int>>();
    if (static_cast<int>(e.size()) != dim) throw ConfigError("polynomial term has wrong dimension");
    for (int a : e) {
      if (a < 0) throw ConfigError("negative exponent");
    }
    p.add_term(Monomial(e), t.at("c").get<double>());
  }
  return p;
}

json to_json(const PolyMatrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(to_json(m(i, j)));
    rows.push_back(row);
  }
  return rows;
}

PolyMatrix polymatrix_from_json(const json& j, int dim) {
  if (!j.is_array() || j.empty() || !j.front().is_array()) {
    throw ConfigError("polynomial matrix must be a non-empty list of rows");
  }
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j.front().size());
  PolyMatrix m(rows, cols, dim);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(j[i].size()) != cols) throw ConfigError("ragged polynomial matrix");
    for (int c = 0; c < cols; ++c) m(i, c) = polynomial_from_json(j[i][c], dim);
  }
  return m;
}

json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array()) throw ConfigError("matrix must be a list of rows");
  if (j.empty()) return Eigen::MatrixXd(0, 0);
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j.front().size());
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (!j[i].is_array() || static_cast<int>(j[i].size()) != cols) throw ConfigError("ragged matrix");
    for (int c = 0; c < cols; ++c) {
      if (!j[i][c].is_number()) throw ConfigError("matrix entries must be numbers");
      m(i, c) = j[i][c].get<double>();
    }
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from_json(const json& j) {
  std::vector<double> v;
  try {
    v = j.get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad vector: ") + e.what());
  }
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

MonomialBasis basis_from_json(const json& j, int dim, const std::string& name) {
  if (j.is_object()) {
    check_keys(j, {"min_degree", "max_degree"}, name);
    return poly::graded_basis(dim, get_or(j, "min_degree", 0), j.at("max_degree").get<int>(), name);
  }
  const auto exps = exponent_lists(j);
  for (const auto& e : exps) {
    if (static_cast<int>(e.size()) != dim) throw ConfigError(name + ": exponent tuple has wrong length");
  }
  return MonomialBasis::from_exponents(exps, name);
}

// --------------------------------------------------------------- problem

Problem benchmark_problem(double lo, double hi, double step) {
  return Problem{benchmark_system(), benchmark_cost_model(), benchmark_sos_bases(),
                 WeightMeasure::grid(2, lo, hi, step), "benchmark"};
}

Problem problem_from_json(const json& cfg) {
  const json empty = json::object();
  const json& sysj = cfg.contains("system") ? cfg.at("system") : empty;
  const json& measj = cfg.contains("measure") ? cfg.at("measure") : empty;

  auto measure_for = [&](int dim) {
    check_keys(measj, {"lo", "hi", "step", "points"}, "measure");
    if (measj.contains("points")) {
      std::vector<Eigen::VectorXd> pts;
      for (const auto& p : measj.at("points")) pts.push_back(vector_from_json(p));
      for (const auto& p : pts) {
        if (p.size() != dim) throw ConfigError("measure point has wrong dimension");
      }
      return WeightMeasure::from_points(std::move(pts));
    }
    return WeightMeasure::grid(dim, get_or(measj, "lo", -3.0), get_or(measj, "hi", 3.0),
                               get_or(measj, "step", 0.1));
  };

  if (sysj.is_string() || sysj.empty()) {
    const std::string id = sysj.is_string() ? sysj.get<std::string>() : "benchmark";
    if (id != "benchmark") throw ConfigError("unknown built-in system '" + id + "'");
    if (cfg.contains("cost")) throw ConfigError("the built-in benchmark has a fixed cost section");
    Problem p = benchmark_problem();
    p.measure = measure_for(2);
    return p;
  }

  check_keys(sysj, {"name", "dx", "z", "weights", "vertices", "theta", "x0"}, "system");
  const int dx = get_or(sysj, "dx", 0);
  if (dx <= 0) throw ConfigError("system.dx must be positive");
  MonomialBasis z = basis_from_json(sysj.at("z"), dx, "z");

  const json& wj = sysj.at("weights");
  check_keys(wj, {"kind", "lower", "upper"}, "system.weights");
  if (get_or<std::string>(wj, "kind", "bilinear-corner") != "bilinear-corner") {
    throw ConfigError("only bilinear-corner weights can be read from a config");
  }
  WeightFunction h = WeightFunction::bilinear_corner(vector_from_json(wj.at("lower")),
                                                     vector_from_json(wj.at("upper")));
  std::vector<PolyMatrix> F, G;
  for (const auto& v : sysj.at("vertices")) {
    check_keys(v, {"F", "G"}, "system.vertices[]");
    F.push_back(polymatrix_from_json(v.at("F"), dx));
    G.push_back(polymatrix_from_json(v.at("G"), dx));
  }
  PolytopicSystem sys(z, std::move(F), std::move(G), std::move(h),
                      distribution_from_json(sysj.at("theta"), "system.theta"),
                      distribution_from_json(sysj.at("x0"), "system.x0"),
                      get_or<std::string>(sysj, "name", "custom"));

  if (!cfg.contains("cost")) throw ConfigError("a custom system needs a cost section");
  const json& cj = cfg.at("cost");
  check_keys(cj, {"q", "R", "phi", "Z", "zeta"}, "cost");
  CostModel cost;
  cost.q = polynomial_from_json(cj.at("q"), dx);
  cost.R = polymatrix_from_json(cj.at("R"), dx);
  cost.phi = basis_from_json(cj.at("phi"), dx, "phi");
  cost.z = z;
  const json& Zj = cj.at("Z");
  if (Zj.is_object() && Zj.contains("matrix")) {
    cost.Z = polymatrix_from_json(Zj.at("matrix"), dx);
  } else {
    cost.Z = PolyMatrix::from_basis_row(basis_from_json(Zj, dx, "Z"));
  }
  cost.validate();
  if (cost.du() != sys.du()) throw ConfigError("cost.Z must have d_u rows");
  MonomialBasis zeta = cj.contains("zeta") ? basis_from_json(cj.at("zeta"), dx, "zeta")
                                           : poly::graded_basis(dx, 0, 1, "zeta");
  SosBases bases = make_sos_bases(z, std::move(zeta), cost.Z);
  WeightMeasure measure = measure_for(dx);
  std::string name = sys.name();
  return Problem{std::move(sys), std::move(cost), std::move(bases), std::move(measure),
                 std::move(name)};
}

// -------------------------------------------------------------- settings

RunSettings settings_from_json(const json& cfg) {
  RunSettings s;
  if (cfg.contains("optimizer")) {
    const json& o = cfg.at("optimizer");
    check_keys(o, {"N", "kappa", "rho_ub", "chi", "alpha_ini", "gamma", "eta", "J_lb", "seed",
                   "theta_samples"},
               "optimizer");
    s.opt.N = get_or(o, "N", s.opt.N);
    s.opt.kappa = get_or(o, "kappa", s.opt.kappa);
    s.opt.rho_ub = get_or(o, "rho_ub", s.opt.rho_ub);
    s.opt.chi = get_or(o, "chi", s.opt.chi);
    s.opt.alpha_ini = get_or(o, "alpha_ini", s.opt.alpha_ini);
    s.opt.gamma = get_or(o, "gamma", s.opt.gamma);
    s.opt.eta = get_or(o, "eta", s.opt.eta);
    s.opt.J_lb = get_or(o, "J_lb", s.opt.J_lb);
    s.opt.seed = get_or(o, "seed", s.opt.seed);
    s.opt.theta_samples = get_or(o, "theta_samples", s.opt.theta_samples);
  }
  if (cfg.contains("simulation")) {
    const json& o = cfg.at("simulation");
    check_keys(o, {"T", "dt", "X_max", "eps_conv"}, "simulation");
    s.sim.T = get_or(o, "T", s.sim.T);
    s.sim.dt = get_or(o, "dt", s.sim.dt);
    s.sim.X_max = get_or(o, "X_max", s.sim.X_max);
    s.sim.eps_conv = get_or(o, "eps_conv", s.sim.eps_conv);
  }
  if (cfg.contains("sdp")) {
    const json& o = cfg.at("sdp");
    check_keys(o, {"bound", "eq_tol", "cone_margin", "gap_tol", "max_newton", "mu"}, "sdp");
    s.sdp_bound = get_or(o, "bound", s.sdp_bound);
    s.sdp.eq_tol = get_or(o, "eq_tol", s.sdp.eq_tol);
    s.sdp.cone_margin = get_or(o, "cone_margin", s.sdp.cone_margin);
    s.sdp.gap_tol = get_or(o, "gap_tol", s.sdp.gap_tol);
    s.sdp.max_newton = get_or(o, "max_newton", s.sdp.max_newton);
    s.sdp.mu = get_or(o, "mu", s.sdp.mu);
  }
  s.moment_cache = get_or<std::string>(cfg, "moment_cache", "");
  s.opt.validate();
  s.sim.validate();
  if (!(s.sdp_bound > 0.0)) throw ConfigError("sdp.bound must be positive");
  return s;
}

json to_json(const RunSettings& s) {
  return {
      {"optimizer",
       {{"N", s.opt.N},
        {"kappa", s.opt.kappa},
        {"rho_ub", s.opt.rho_ub},
        {"chi", s.opt.chi},
        {"alpha_ini", s.opt.alpha_ini},
        {"gamma", s.opt.gamma},
        {"eta", s.opt.eta},
        {"J_lb", s.opt.J_lb},
        {"seed", s.opt.seed},
        {"theta_samples", s.opt.theta_samples}}},
      {"simulation",
       {{"T", s.sim.T}, {"dt", s.sim.dt}, {"X_max", s.sim.X_max}, {"eps_conv", s.sim.eps_conv}}},
      {"sdp",
       {{"bound", s.sdp_bound},
        {"eq_tol", s.sdp.eq_tol},
        {"cone_margin", s.sdp.cone_margin},
        {"gap_tol", s.sdp.gap_tol},
        {"max_newton", s.sdp.max_newton},
        {"mu", s.sdp.mu}}},
  };
}

// ------------------------------------------------------------ controller

Eigen::VectorXd ControllerFile::w() const { return poly::vec(W); }

PolynomialController ControllerFile::controller() const { return PolynomialController{z, Z, W}; }

json to_json(const ControllerFile& c) {
  json j = {
      {"format", "sosctl-controller/1"},
      {"mode", c.mode},
      {"dx", c.dx},
      {"du", c.du},
      {"dz", c.z.size()},
      {"dZr", c.Z.cols()},
      {"z", c.z.exponent_lists()},
      {"Z", to_json(c.Z)},
      {"W", to_json(c.W)},
  };
  if (c.certificate) {
    const auto& k = *c.certificate;
    j["certificate"] = {
        {"zeta", k.zeta.exponent_lists()},
        {"P", to_json(k.P)},
        {"r", to_json(k.r)},
        {"min_eig_P", k.min_eig_P},
        {"min_eig_T", k.min_eig_T},
    };
  }
  return j;
}

ControllerFile controller_from_json(const json& j) {
  try {
    if (j.value("format", "") != "sosctl-controller/1") throw ConfigError("not a controller file");
    ControllerFile c;
    c.mode = j.value("mode", "");
    c.dx = j.at("dx").get<int>();
    c.du = j.at("du").get<int>();
    c.z = basis_from_json(j.at("z"), c.dx, "z");
    c.Z = polymatrix_from_json(j.at("Z"), c.dx);
    c.W = matrix_from_json(j.at("W"));
    if (c.W.rows() != c.Z.cols() || c.W.cols() != c.z.size() || c.Z.rows() != c.du) {
      throw ConfigError("controller file dimensions disagree");
    }
    if (j.contains("certificate")) {
      const json& k = j.at("certificate");
      ControllerFile::Cert cert;
      cert.zeta = basis_from_json(k.at("zeta"), c.dx, "zeta");
      cert.P = matrix_from_json(k.at("P"));
      cert.r = matrix_from_json(k.at("r"));
      cert.min_eig_P = k.value("min_eig_P", 0.0);
      cert.min_eig_T = k.value("min_eig_T", std::vector<double>{});
      c.certificate = std::move(cert);
    }
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed controller file: ") + e.what());
  }
}

json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open '" + path + "'");
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse '" + path + "': " + e.what());
  }
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  f << j.dump(2) << '\n';
}

}  // namespace sosctl::io
