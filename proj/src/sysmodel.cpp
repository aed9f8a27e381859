#include "sosctl/sysmodel.hpp"

#include <cmath>
#include <sstream>

#include "sosctl/errors.hpp"

namespace sosctl {

using poly::Monomial;
using poly::MonomialBasis;
using poly::Polynomial;
using poly::PolyMatrix;

// ------------------------------------------------------ FiniteDistribution

FiniteDistribution FiniteDistribution::uniform(std::vector<Eigen::VectorXd> pts) {
  FiniteDistribution d;
  const double p = pts.empty() ? 0.0 : 1.0 / static_cast<double>(pts.size());
  d.probs.assign(pts.size(), p);
  d.points = std::move(pts);
  return d;
}

FiniteDistribution FiniteDistribution::uniform_grid(const std::vector<std::vector<double>>& axes,
                                                    const Eigen::VectorXd* exclude) {
  std::vector<Eigen::VectorXd> pts;
  const int n = static_cast<int>(axes.size());
  std::vector<std::size_t> idx(n, 0);
  if (n == 0) return uniform({});
  for (const auto& a : axes) {
    if (a.empty()) return uniform({});
  }
  while (true) {
    Eigen::VectorXd p(n);
    for (int i = 0; i < n; ++i) p[i] = axes[i][idx[i]];
    if (!(exclude && exclude->size() == n && (p - *exclude).cwiseAbs().maxCoeff() == 0.0)) {
      pts.push_back(p);
    }
    int i = n - 1;
    while (i >= 0 && ++idx[i] == axes[i].size()) idx[i--] = 0;
    if (i < 0) break;
  }
  return uniform(std::move(pts));
}

FiniteDistribution FiniteDistribution::sampled(
    const std::function<Eigen::VectorXd(std::mt19937_64&)>& sampler, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Eigen::VectorXd> pts;
  pts.reserve(n);
  for (int i = 0; i < n; ++i) pts.push_back(sampler(rng));
  return uniform(std::move(pts));
}

void FiniteDistribution::validate(const char* what) const {
  if (points.empty()) throw ConfigError(std::string(what) + ": empty support");
  if (points.size() != probs.size()) throw ConfigError(std::string(what) + ": probability count mismatch");
  double s = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw ConfigError(std::string(what) + ": negative probability");
    s += p;
  }
  if (std::abs(s - 1.0) > 1e-12) throw ConfigError(std::string(what) + ": probabilities do not sum to 1");
  for (const auto& x : points) {
    if (x.size() != points.front().size()) throw ConfigError(std::string(what) + ": ragged support");
  }
}

// ---------------------------------------------------------- WeightFunction

WeightFunction WeightFunction::bilinear_corner(const Eigen::VectorXd& lower,
                                               const Eigen::VectorXd& upper) {
  if (lower.size() != upper.size() || lower.size() == 0 || lower.size() > 16) {
    throw ConfigError("bilinear-corner weights need matching non-empty bounds");
  }
  WeightFunction w;
  w.kind = "bilinear-corner";
  w.theta_dim = static_cast<int>(lower.size());
  w.K = 1 << w.theta_dim;
  w.lower = lower;
  w.upper = upper;
  const int p = w.theta_dim;
  const int K = w.K;
  w.fn = [lower, upper, p, K](const Eigen::VectorXd& theta) {
    if (theta.size() != p) throw DimensionMismatch("theta has wrong dimension");
    Eigen::VectorXd s = (theta - lower).cwiseQuotient(upper - lower);
    Eigen::VectorXd h(K);
    for (int k = 0; k < K; ++k) {
      double v = 1.0;
      for (int i = 0; i < p; ++i) {
        const bool hi = (k >> (p - 1 - i)) & 1;
        v *= hi ? s[i] : 1.0 - s[i];
      }
      h[k] = v;
    }
    return h;
  };
  return w;
}

WeightFunction WeightFunction::custom(int theta_dim, int K,
                                      std::function<Eigen::VectorXd(const Eigen::VectorXd&)> fn) {
  WeightFunction w;
  w.kind = "custom";
  w.theta_dim = theta_dim;
  w.K = K;
  w.fn = std::move(fn);
  return w;
}

Eigen::VectorXd WeightFunction::vertex(int k) const {
  if (kind != "bilinear-corner") throw ConfigError("vertex() requires bilinear-corner weights");
  Eigen::VectorXd v(theta_dim);
  for (int i = 0; i < theta_dim; ++i) {
    v[i] = ((k >> (theta_dim - 1 - i)) & 1) ? upper[i] : lower[i];
  }
  return v;
}

// --------------------------------------------------------- PolytopicSystem

PolytopicSystem::PolytopicSystem(MonomialBasis z, std::vector<PolyMatrix> F,
                                 std::vector<PolyMatrix> G, WeightFunction weight_fn,
                                 ThetaDistribution theta, InitialStateDistribution x0,
                                 std::string name)
    : z_(std::move(z)),
      F_(std::move(F)),
      G_(std::move(G)),
      weights_(std::move(weight_fn)),
      theta_(std::move(theta)),
      x0_(std::move(x0)),
      name_(std::move(name)) {
  if (F_.empty() || F_.size() != G_.size()) throw DimensionMismatch("F and G vertex counts differ");
  if (weights_.K != K()) throw DimensionMismatch("weight family has wrong vertex count");
  if (!z_.is_strict()) throw ConfigError("z basis must be strict");
  dx_ = z_.dim();
  du_ = G_.front().cols();
  for (int k = 0; k < K(); ++k) {
    if (F_[k].rows() != dx_ || F_[k].cols() != z_.size()) throw DimensionMismatch("F_k shape must be d_x x d_z");
    if (G_[k].rows() != dx_ || G_[k].cols() != du_) throw DimensionMismatch("G_k shape must be d_x x d_u");
  }
  theta_.validate("theta distribution");
  x0_.validate("initial-state distribution");
  if (theta_.dim() != weights_.theta_dim) throw DimensionMismatch("theta support has wrong dimension");
  if (x0_.dim() != dx_) throw DimensionMismatch("initial-state support has wrong dimension");
  for (const auto& t : theta_.points) weights(t);
}

void PolytopicSystem::set_theta(ThetaDistribution t) {
  t.validate("theta distribution");
  if (t.dim() != weights_.theta_dim) throw DimensionMismatch("theta support has wrong dimension");
  for (const auto& p : t.points) weights(p);
  theta_ = std::move(t);
}

void PolytopicSystem::set_x0(InitialStateDistribution d) {
  d.validate("initial-state distribution");
  if (d.dim() != dx_) throw DimensionMismatch("initial-state support has wrong dimension");
  x0_ = std::move(d);
}

Eigen::VectorXd PolytopicSystem::weights(const Eigen::VectorXd& theta) const {
  Eigen::VectorXd h = weights_.fn(theta);
  if (h.size() != K()) throw DimensionMismatch("weight function returned wrong length");
  constexpr double tol = 1e-12;
  if (std::abs(h.sum() - 1.0) > tol || h.minCoeff() < -tol || h.maxCoeff() > 1.0 + tol) {
    std::ostringstream os;
    os << "weights leave the simplex at theta = " << theta.transpose();
    throw SimplexViolation(os.str());
  }
  return h;
}

Eigen::VectorXd PolytopicSystem::vertex_drift(int k, const Eigen::VectorXd& x) const {
  return F_.at(k).eval(x) * z_.eval(x);
}

Eigen::MatrixXd PolytopicSystem::vertex_input(int k, const Eigen::VectorXd& x) const {
  return G_.at(k).eval(x);
}

Eigen::VectorXd PolytopicSystem::drift(const Eigen::VectorXd& x, const Eigen::VectorXd& theta) const {
  const Eigen::VectorXd h = weights(theta);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(dx_);
  for (int k = 0; k < K(); ++k) {
    if (h[k] != 0.0) f += h[k] * vertex_drift(k, x);
  }
  return f;
}

Eigen::MatrixXd PolytopicSystem::input_matrix(const Eigen::VectorXd& x,
                                              const Eigen::VectorXd& theta) const {
  const Eigen::VectorXd h = weights(theta);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(dx_, du_);
  for (int k = 0; k < K(); ++k) {
    if (h[k] != 0.0) g += h[k] * vertex_input(k, x);
  }
  return g;
}

Eigen::VectorXd PolytopicSystem::closed_loop_rhs(const Controller& u, const Eigen::VectorXd& x,
                                                 const Eigen::VectorXd& theta) const {
  return closed_loop_rhs_h(u, x, weights(theta));
}

Eigen::VectorXd PolytopicSystem::closed_loop_rhs_h(const Controller& u, const Eigen::VectorXd& x,
                                                   const Eigen::VectorXd& h) const {
  const Eigen::VectorXd zx = z_.eval(x);
  const Eigen::VectorXd ux = u(x);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dx_);
  for (int k = 0; k < K(); ++k) {
    if (h[k] == 0.0) continue;
    out += h[k] * (F_[k].eval(x) * zx + G_[k].eval(x) * ux);
  }
  if (!out.allFinite()) throw NonFinite("closed-loop right-hand side is not finite");
  return out;
}

// --------------------------------------------------------------- benchmark

namespace {

// F(x, theta) with f(x, theta) = F(x, theta) [x1; x2].
PolyMatrix benchmark_F(double t1, double t2) {
  PolyMatrix F(2, 2, 2);
  F(0, 0) = Polynomial::from_terms(2, {{{0, 0}, 1.0}, {{1, 0}, 1.0}, {{2, 0}, t1 - 2.0}, {{0, 2}, -0.5}});
  F(0, 1) = Polynomial(2, 1.0);
  F(1, 0) = Polynomial(2, t2 + 1.0);
  F(1, 1) = Polynomial(Monomial({0, 1}));
  return F;
}

}  // namespace

PolytopicSystem benchmark_system() {
  MonomialBasis z = MonomialBasis::from_exponents({{1, 0}, {0, 1}}, "z");
  WeightFunction h = WeightFunction::bilinear_corner(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1));
  std::vector<PolyMatrix> F, G;
  for (int k = 0; k < h.K; ++k) {
    const Eigen::VectorXd v = h.vertex(k);
    F.push_back(benchmark_F(v[0], v[1]));
    G.push_back(PolyMatrix::constant(Eigen::Vector2d(v[0], v[1] + 1.0), 2));
  }
  const std::vector<double> tvals{0.0, 0.1, 0.9, 1.0};
  const std::vector<double> xvals{-3.0, 0.0, 3.0};
  const Eigen::VectorXd origin = Eigen::VectorXd::Zero(2);
  return PolytopicSystem(std::move(z), std::move(F), std::move(G), std::move(h),
                         FiniteDistribution::uniform_grid({tvals, tvals}),
                         FiniteDistribution::uniform_grid({xvals, xvals}, &origin), "benchmark");
}

Eigen::VectorXd benchmark_drift_formula(const Eigen::VectorXd& x, const Eigen::VectorXd& theta) {
  const double x1 = x[0], x2 = x[1];
  Eigen::VectorXd f(2);
  f[0] = x1 + x1 * x1 + (theta[0] - 2.0) * x1 * x1 * x1 - 0.5 * x1 * x2 * x2 + x2;
  f[1] = (theta[1] + 1.0) * x1 + x2 * x2;
  return f;
}

// ---------------------------------------------------- PolynomialController

Eigen::VectorXd PolynomialController::operator()(const Eigen::VectorXd& x) const {
  return Z.eval(x) * (W * z.eval(x));
}

Controller PolynomialController::as_function() const {
  const poly::FlatPolyMatrix Zf(Z);
  const poly::FlatPolyMatrix zf(PolyMatrix::from_basis_column(z));
  const Eigen::MatrixXd Wm = W;
  return [Zf, zf, Wm](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return Zf.eval(x) * (Wm * zf.eval(x));
  };
}

}  // namespace sosctl
