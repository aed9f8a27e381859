#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "sosctl/costfit.hpp"
#include "sosctl/optimize.hpp"
#include "sosctl/sdpsolve.hpp"
#include "sosctl/simulate.hpp"
#include "sosctl/soscert.hpp"
#include "sosctl/sysmodel.hpp"

namespace sosctl::io {

using json = nlohmann::json;

// Polynomials are lists of {"c": coefficient, "e": [exponents]} terms; a
// bare number is a constant. Matrices are lists of rows.
json to_json(const poly::Polynomial& p);
poly::Polynomial polynomial_from_json(const json& j, int dim);
json to_json(const poly::PolyMatrix& m);
poly::PolyMatrix polymatrix_from_json(const json& j, int dim);
json to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const json& j);
json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const json& j);
/// Either a list of exponent tuples or {"min_degree": a, "max_degree": b}.
poly::MonomialBasis basis_from_json(const json& j, int dim, const std::string& name);

/// Everything a synthesis run needs besides the tuning knobs.
struct Problem {
  PolytopicSystem sys;
  CostModel cost;
  SosBases bases;
  WeightMeasure measure;
  std::string source;
};

/// The built-in two-state benchmark with the weight grid [lo, hi]^2 at `step`.
Problem benchmark_problem(double lo = -3.0, double hi = 3.0, double step = 0.1);

/// Reads the "system", "cost" and "measure" sections. A missing or string
/// "system" entry selects the built-in benchmark. Throws ConfigError.
Problem problem_from_json(const json& cfg);

/// Tuning knobs with defaults for the benchmark.
struct RunSettings {
  OptimizerConfig opt;
  SimConfig sim;
  SdpOptions sdp;
  double sdp_bound = 1.0;
  std::string moment_cache;
};

/// Overrides the defaults with the "optimizer", "simulation" and "sdp"
/// sections of `cfg`; unknown keys raise ConfigError.
RunSettings settings_from_json(const json& cfg);
json to_json(const RunSettings& s);

/// Controller artifact: dimensions, exponent lists of z, the input structure
/// Z, W = inv_vec(w), and (when available) the stability certificate.
struct ControllerFile {
  std::string mode;
  int dx = 0;
  int du = 0;
  poly::MonomialBasis z;
  poly::PolyMatrix Z;
  Eigen::MatrixXd W;  // d_Zr x d_z
  struct Cert {
    poly::MonomialBasis zeta;
    Eigen::MatrixXd P;
    Eigen::MatrixXd r;
    double min_eig_P = 0.0;
    std::vector<double> min_eig_T;
  };
  std::optional<Cert> certificate;

  Eigen::VectorXd w() const;
  PolynomialController controller() const;
};

json to_json(const ControllerFile& c);
ControllerFile controller_from_json(const json& j);

/// Reads a JSON file, throwing ConfigError when it is missing or malformed.
json read_json_file(const std::string& path);
/// Writes with two-space indentation and a trailing newline.
void write_json_file(const std::string& path, const json& j);

}  // namespace sosctl::io
