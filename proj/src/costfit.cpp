#include "sosctl/costfit.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sosctl/errors.hpp"
#include "sosctl/linalg.hpp"

namespace sosctl {

using poly::MonomialBasis;
using poly::Polynomial;
using poly::PolyMatrix;

// --------------------------------------------------------------- CostModel

void CostModel::validate() const {
  if (phi.contains_constant()) throw ConfigError("value features must not contain a constant");
  if (phi.size() == 0) throw ConfigError("value features are empty");
  if (R.rows() != R.cols()) throw ConfigError("R must be square");
  if (Z.rows() != R.rows()) throw ConfigError("Z must have d_u rows");
  if (z.dim() != phi.dim() || (Z.dim() != 0 && Z.dim() != z.dim())) {
    throw ConfigError("cost model bases have inconsistent state dimension");
  }
  if (!(eta >= 0.0)) throw ConfigError("eta must be non-negative");
}

Eigen::MatrixXd CostModel::Phi(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd zx = z.eval(x);
  const Eigen::MatrixXd Zx = Z.eval(x);  // d_u x d_Zr
  // z (x) Z^T: block i is z_i Z^T.
  Eigen::MatrixXd out(dw(), du());
  for (int i = 0; i < dz(); ++i) out.middleRows(i * dZr(), dZr()) = zx[i] * Zx.transpose();
  return out;
}

Eigen::VectorXd CostModel::control(const Eigen::VectorXd& x, const Eigen::VectorXd& w) const {
  if (w.size() != dw()) throw DimensionMismatch("controller parameter has wrong length");
  return Phi(x).transpose() * w;
}

double CostModel::running_cost(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  return q.eval(x) + 0.5 * u.dot(R.eval(x) * u);
}

PolynomialController CostModel::controller(const Eigen::VectorXd& w) const {
  if (w.size() != dw()) throw DimensionMismatch("controller parameter has wrong length");
  return PolynomialController{z, Z, poly::inv_vec(w, dZr(), dz())};
}

CostModel benchmark_cost_model() {
  CostModel m;
  m.q = Polynomial::from_terms(2, {{{2, 0}, 1.0}, {{0, 2}, 1.0}});
  m.R = PolyMatrix::constant(Eigen::MatrixXd::Constant(1, 1, 10.0), 2);
  m.phi = poly::graded_basis(2, 1, 6, "phi");
  m.z = MonomialBasis::from_exponents({{1, 0}, {0, 1}}, "z");
  m.Z = PolyMatrix::from_basis_row(poly::graded_basis(2, 0, 2, "Z"));
  m.eta = 0.0;
  return m;
}

// ----------------------------------------------------------- WeightMeasure

WeightMeasure WeightMeasure::grid(int dim, double lo, double hi, double step) {
  if (!(step > 0.0) || !(hi >= lo) || dim <= 0) throw ConfigError("invalid weight grid");
  const long n = std::lround((hi - lo) / step) + 1;
  std::vector<double> axis(n);
  for (long i = 0; i < n; ++i) axis[i] = lo + static_cast<double>(i) * step;
  // Snap to the decimal grid so that 0 is exact.
  for (double& a : axis) a = std::round(a / step) * step;
  WeightMeasure m;
  std::vector<long> idx(dim, 0);
  while (true) {
    Eigen::VectorXd p(dim);
    for (int j = 0; j < dim; ++j) p[j] = axis[idx[j]];
    m.points.push_back(p);
    int j = dim - 1;
    while (j >= 0 && ++idx[j] == n) idx[j--] = 0;
    if (j < 0) break;
  }
  m.weights.assign(m.points.size(), 1.0);
  return m;
}

WeightMeasure WeightMeasure::from_points(std::vector<Eigen::VectorXd> pts) {
  WeightMeasure m;
  m.weights.assign(pts.size(), 1.0);
  m.points = std::move(pts);
  return m;
}

// ---------------------------------------------------------------- features

Eigen::VectorXd psi0(const CostModel& model, const Eigen::VectorXd& x) {
  const Eigen::MatrixXd Ph = model.Phi(x);
  const Eigen::MatrixXd M = 0.5 * Ph * model.R.eval(x) * Ph.transpose();
  Eigen::VectorXd out(1 + M.size());
  out[0] = model.q.eval(x);
  out.tail(M.size()) = Eigen::Map<const Eigen::VectorXd>(M.data(), M.size());
  return out;
}

Eigen::VectorXd psik(const CostModel& model, const PolytopicSystem& sys, int k,
                     const Eigen::VectorXd& x) {
  const Eigen::MatrixXd Jp = model.phi.jacobian(x);  // d_v x d_x
  Eigen::MatrixXd rhs(sys.dx(), 1 + model.dw());
  rhs.col(0) = sys.vertex_drift(k, x);
  rhs.rightCols(model.dw()) = sys.vertex_input(k, x) * model.Phi(x).transpose();
  const Eigen::MatrixXd M = Jp * rhs;
  return Eigen::Map<const Eigen::VectorXd>(M.data(), M.size());
}

// ------------------------------------------------------------- MomentCache

namespace {

constexpr char kMagic[8] = {'S', 'O', 'S', 'M', 'O', 'M', '0', '1'};

void write_matrix(std::ofstream& os, const Eigen::MatrixXd& m) {
  const std::int64_t r = m.rows(), c = m.cols();
  os.write(reinterpret_cast<const char*>(&r), sizeof r);
  os.write(reinterpret_cast<const char*>(&c), sizeof c);
  os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
}

bool read_matrix(std::ifstream& is, Eigen::MatrixXd& m) {
  std::int64_t r = 0, c = 0;
  is.read(reinterpret_cast<char*>(&r), sizeof r);
  is.read(reinterpret_cast<char*>(&c), sizeof c);
  if (!is || r < 0 || c < 0 || r > (1 << 20) || c > (1 << 20)) return false;
  m.resize(r, c);
  is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
  return static_cast<bool>(is);
}

struct Fnv {
  std::uint64_t h = 1469598103934665603ULL;
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  }
  void num(double d) { bytes(&d, sizeof d); }
  void num(int i) { bytes(&i, sizeof i); }
  void poly(const Polynomial& p) {
    num(static_cast<int>(p.terms().size()));
    for (const auto& [m, c] : p.terms()) {
      for (int a : m.exponents()) num(a);
      num(c);
    }
  }
  void pmat(const PolyMatrix& m) {
    num(m.rows());
    num(m.cols());
    for (int j = 0; j < m.cols(); ++j) {
      for (int i = 0; i < m.rows(); ++i) poly(m(i, j));
    }
  }
  void basis(const MonomialBasis& b) {
    num(b.size());
    for (const auto& m : b.entries()) {
      for (int a : m.exponents()) num(a);
    }
  }
};

}  // namespace

void MomentCache::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write moment cache " + path);
  os.write(kMagic, sizeof kMagic);
  os.write(reinterpret_cast<const char*>(&key), sizeof key);
  const std::int32_t dims[3] = {K, dv, dw};
  os.write(reinterpret_cast<const char*>(dims), sizeof dims);
  for (const auto& a : A) write_matrix(os, a);
  for (const auto& b : B) write_matrix(os, b);
  write_matrix(os, Ephi0);
  write_matrix(os, C00);
}

bool MomentCache::load(const std::string& path, std::uint64_t expected_key) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return false;
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0) return false;
  std::uint64_t k = 0;
  is.read(reinterpret_cast<char*>(&k), sizeof k);
  if (!is || k != expected_key) return false;
  std::int32_t dims[3];
  is.read(reinterpret_cast<char*>(dims), sizeof dims);
  if (!is || dims[0] <= 0 || dims[0] > 4096) return false;
  MomentCache c;
  c.key = k;
  c.K = dims[0];
  c.dv = dims[1];
  c.dw = dims[2];
  c.A.resize(static_cast<std::size_t>(c.K) * c.K);
  c.B.resize(c.K);
  for (auto& a : c.A) {
    if (!read_matrix(is, a)) return false;
  }
  for (auto& b : c.B) {
    if (!read_matrix(is, b)) return false;
  }
  Eigen::MatrixXd e;
  if (!read_matrix(is, e) || e.cols() != 1) return false;
  c.Ephi0 = e.col(0);
  if (!read_matrix(is, c.C00)) return false;
  *this = std::move(c);
  return true;
}

std::uint64_t moment_key(const CostModel& model, const PolytopicSystem& sys,
                         const WeightMeasure& measure) {
  Fnv f;
  f.poly(model.q);
  f.pmat(model.R);
  f.basis(model.phi);
  f.basis(model.z);
  f.pmat(model.Z);
  f.num(sys.K());
  for (int k = 0; k < sys.K(); ++k) {
    f.pmat(sys.F(k));
    f.pmat(sys.G(k));
  }
  f.basis(sys.z());
  for (std::size_t m = 0; m < measure.points.size(); ++m) {
    for (double v : measure.points[m]) f.num(v);
    f.num(measure.weights[m]);
  }
  for (std::size_t i = 0; i < sys.x0().points.size(); ++i) {
    for (double v : sys.x0().points[i]) f.num(v);
    f.num(sys.x0().probs[i]);
  }
  return f.h;
}

MomentCache compute_moments(const CostModel& model, const PolytopicSystem& sys,
                            const WeightMeasure& measure) {
  model.validate();
  if (measure.points.empty()) throw ConfigError("weight measure is empty");
  for (double wt : measure.weights) {
    if (!(wt >= 0.0)) throw ConfigError("weight measure needs non-negative weights");
  }
  MomentCache c;
  c.K = sys.K();
  c.dv = model.dv();
  c.dw = model.dw();
  c.key = moment_key(model, sys, measure);
  const int n1 = c.n1(), n0 = c.n0(), K = c.K;
  const int nall = K * n1 + n0;

  // Stacked rows [psi_1 .. psi_K, psi_0] scaled by sqrt(weight); the Gram
  // matrix of each chunk is accumulated into a binary-counter stack so that
  // partial sums of similar size are combined (pairwise summation).
  constexpr int kChunk = 128;
  std::vector<std::pair<int, Eigen::MatrixXd>> stack;
  auto push = [&](Eigen::MatrixXd g) {
    int level = 0;
    while (!stack.empty() && stack.back().first == level) {
      g += stack.back().second;
      stack.pop_back();
      ++level;
    }
    stack.emplace_back(level, std::move(g));
  };

  const int M = measure.size();
  for (int start = 0; start < M; start += kChunk) {
    const int rows = std::min(kChunk, M - start);
    Eigen::MatrixXd Psi(nall, rows);
    for (int r = 0; r < rows; ++r) {
      const Eigen::VectorXd& x = measure.points[start + r];
      const double s = std::sqrt(measure.weights[start + r]);
      for (int k = 0; k < K; ++k) Psi.col(r).segment(k * n1, n1) = s * psik(model, sys, k, x);
      Psi.col(r).tail(n0) = s * psi0(model, x);
    }
    if (!Psi.allFinite()) throw NonFinite("feature evaluation overflowed on the weight grid");
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(nall, nall);
    g.selfadjointView<Eigen::Lower>().rankUpdate(Psi);
    push(std::move(g));
  }
  Eigen::MatrixXd G = std::move(stack.back().second);
  stack.pop_back();
  while (!stack.empty()) {
    G += stack.back().second;
    stack.pop_back();
  }
  G.triangularView<Eigen::StrictlyUpper>() = G.transpose();

  c.A.resize(static_cast<std::size_t>(K) * K);
  c.B.resize(K);
  for (int k = 0; k < K; ++k) {
    for (int l = 0; l < K; ++l) c.A[k * K + l] = G.block(k * n1, l * n1, n1, n1);
    c.B[k] = G.block(k * n1, K * n1, n1, n0);
  }
  c.C00 = G.bottomRightCorner(n0, n0);

  c.Ephi0 = Eigen::VectorXd::Zero(c.dv);
  const auto& x0 = sys.x0();
  for (int i = 0; i < x0.size(); ++i) c.Ephi0 += x0.probs[i] * model.phi.eval(x0.points[i]);
  if (!c.Ephi0.allFinite() || !c.C00.allFinite()) throw NonFinite("moment evaluation overflowed");
  return c;
}

MomentCache load_or_compute_moments(const CostModel& model, const PolytopicSystem& sys,
                                    const WeightMeasure& measure, const std::string& path,
                                    bool* loaded) {
  const std::uint64_t key = moment_key(model, sys, measure);
  MomentCache c;
  if (!path.empty() && c.load(path, key)) {
    if (loaded) *loaded = true;
    return c;
  }
  c = compute_moments(model, sys, measure);
  if (!path.empty()) c.save(path);
  if (loaded) *loaded = false;
  return c;
}

// -------------------------------------------------------- fit and gradient

namespace {

Eigen::VectorXd stack_one(const Eigen::VectorXd& w) {
  Eigen::VectorXd c(1 + w.size());
  c[0] = 1.0;
  c.tail(w.size()) = w;
  return c;
}

Eigen::VectorXd one_kron(const Eigen::VectorXd& w) {
  const Eigen::Index n = w.size();
  Eigen::VectorXd out(1 + n * n);
  out[0] = 1.0;
  for (Eigen::Index p = 0; p < n; ++p) out.segment(1 + p * n, n) = w[p] * w;
  return out;
}

// (c (x) I)^T X = sum_a c_a X[a-block rows].
Eigen::MatrixXd contract_rows(const Eigen::MatrixXd& X, const Eigen::VectorXd& c, int block) {
  Eigen::MatrixXd out = c[0] * X.topRows(block);
  for (Eigen::Index a = 1; a < c.size(); ++a) {
    if (c[a] != 0.0) out.noalias() += c[a] * X.middleRows(a * block, block);
  }
  return out;
}

// X (c (x) I) = sum_b c_b X[b-block cols].
Eigen::MatrixXd contract_cols(const Eigen::MatrixXd& X, const Eigen::VectorXd& c, int block) {
  Eigen::MatrixXd out = c[0] * X.leftCols(block);
  for (Eigen::Index b = 1; b < c.size(); ++b) {
    if (c[b] != 0.0) out.noalias() += c[b] * X.middleCols(b * block, block);
  }
  return out;
}

// All w-dependent, parameter-independent contractions of the moments.
struct Contraction {
  Eigen::VectorXd c;
  std::vector<Eigen::MatrixXd> Y;   // K*K, n1 x dv
  std::vector<Eigen::MatrixXd> L;   // K*K, dv x dv (no eta)
  std::vector<Eigen::VectorXd> b;   // K, n1
  std::vector<Eigen::VectorXd> l;   // K, dv
  std::vector<Eigen::MatrixXd> Cw;  // K, dv x dw^2 (gradient only)

  Contraction(const MomentCache& m, const Eigen::VectorXd& w, bool with_gradient) {
    if (w.size() != m.dw) throw DimensionMismatch("controller parameter has wrong length");
    const int K = m.K, dv = m.dv;
    c = stack_one(w);
    const Eigen::VectorXd ww = one_kron(w);
    Y.resize(static_cast<std::size_t>(K) * K);
    L.resize(Y.size());
    for (int k = 0; k < K; ++k) {
      for (int j = 0; j < K; ++j) {
        Y[k * K + j] = contract_cols(m.Akl(k, j), c, dv);
        L[k * K + j] = contract_rows(Y[k * K + j], c, dv);
      }
    }
    b.resize(K);
    l.resize(K);
    if (with_gradient) Cw.resize(K);
    for (int k = 0; k < K; ++k) {
      b[k] = m.B[k] * ww;
      l[k] = contract_rows(b[k], c, dv);
      if (with_gradient) Cw[k] = contract_rows(m.B[k].rightCols(m.dw * m.dw), c, dv);
    }
  }
};

struct ThetaSolve {
  Eigen::VectorXd v;
  double value = 0.0;
  Eigen::VectorXd grad;
};

ThetaSolve solve_theta(const MomentCache& m, const Contraction& ct, const Eigen::VectorXd& h,
                       double eta, bool with_gradient) {
  const int K = m.K, dv = m.dv, dw = m.dw;
  Eigen::MatrixXd Lt = eta * Eigen::MatrixXd::Identity(dv, dv);
  Eigen::VectorXd lt = Eigen::VectorXd::Zero(dv);
  for (int k = 0; k < K; ++k) {
    if (h[k] == 0.0) continue;
    lt += h[k] * ct.l[k];
    for (int j = 0; j < K; ++j) {
      if (h[j] != 0.0) Lt += (h[k] * h[j]) * ct.L[k * K + j];
    }
  }
  Lt = 0.5 * (Lt + Lt.transpose());
  const SpdSolver solver(Lt, 1e-12, "fit matrix");
  ThetaSolve out;
  out.v = -solver.solve(lt, 1e-8);
  out.value = m.Ephi0.dot(out.v);
  if (!with_gradient) return out;

  const Eigen::VectorXd lam = solver.solve(m.Ephi0, 1e-8);
  Eigen::MatrixXd Ysum = Eigen::MatrixXd::Zero(m.n1(), dv);
  Eigen::VectorXd bsum = Eigen::VectorXd::Zero(m.n1());
  Eigen::MatrixXd Csum = Eigen::MatrixXd::Zero(dv, dw * dw);
  for (int k = 0; k < K; ++k) {
    if (h[k] == 0.0) continue;
    bsum += h[k] * ct.b[k];
    Csum += h[k] * ct.Cw[k];
    for (int j = 0; j < K; ++j) {
      if (h[j] != 0.0) Ysum += (h[k] * h[j]) * ct.Y[k * K + j];
    }
  }
  const Eigen::VectorXd u1 = Ysum * out.v;
  const Eigen::VectorXd u2 = Ysum * lam;
  const Eigen::VectorXd lc = Csum.transpose() * lam;  // entry p*dw+q
  const Eigen::MatrixXd Mq = Eigen::Map<const Eigen::MatrixXd>(lc.data(), dw, dw).transpose();
  const Eigen::VectorXd w = ct.c.tail(dw);
  const Eigen::VectorXd dww = Mq * w + Mq.transpose() * w;
  out.grad.resize(dw);
  for (int j = 0; j < dw; ++j) {
    const Eigen::Index off = static_cast<Eigen::Index>(j + 1) * dv;
    const double dl = lam.dot(bsum.segment(off, dv)) + dww[j];
    const double dL = lam.dot(u1.segment(off, dv)) + out.v.dot(u2.segment(off, dv));
    out.grad[j] = -(dl + dL);
  }
  return out;
}

}  // namespace

Eigen::MatrixXd L_matrix(const MomentCache& cache, const Eigen::VectorXd& w, int k, int l,
                         double eta) {
  if (w.size() != cache.dw) throw DimensionMismatch("controller parameter has wrong length");
  const Eigen::VectorXd c = stack_one(w);
  Eigen::MatrixXd L = contract_rows(contract_cols(cache.Akl(k, l), c, cache.dv), c, cache.dv);
  L.diagonal().array() += eta;
  return L;
}

Eigen::VectorXd l_vector(const MomentCache& cache, const Eigen::VectorXd& w, int k) {
  if (w.size() != cache.dw) throw DimensionMismatch("controller parameter has wrong length");
  return contract_rows(cache.B[k] * one_kron(w), stack_one(w), cache.dv);
}

CostParameters fit_cost_parameters(const MomentCache& cache, const PolytopicSystem& sys,
                                   const Eigen::VectorXd& w, const Eigen::VectorXd& theta,
                                   double eta) {
  const Contraction ct(cache, w, false);
  return {solve_theta(cache, ct, sys.weights(theta), eta, false).v};
}

Eigen::VectorXd cost_gradient(const MomentCache& cache, const PolytopicSystem& sys,
                              const Eigen::VectorXd& w, const Eigen::VectorXd& theta, double eta) {
  const Contraction ct(cache, w, true);
  return solve_theta(cache, ct, sys.weights(theta), eta, true).grad;
}

ExpectedCost expected_fitted_cost(const MomentCache& cache, const PolytopicSystem& sys,
                                  const Eigen::VectorXd& w, double eta, bool with_gradient) {
  const Contraction ct(cache, w, with_gradient);
  ExpectedCost out;
  if (with_gradient) out.gradient = Eigen::VectorXd::Zero(cache.dw);
  const auto& th = sys.theta();
  for (int i = 0; i < th.size(); ++i) {
    ThetaSolve s = solve_theta(cache, ct, sys.weights(th.points[i]), eta, with_gradient);
    out.value += th.probs[i] * s.value;
    if (with_gradient) out.gradient += th.probs[i] * s.grad;
    out.per_theta.push_back(s.value);
    out.v.push_back(std::move(s.v));
  }
  return out;
}

// -------------------------------------------------------- Bellman residual

double bellman_residual(const CostModel& model, const PolytopicSystem& sys,
                        const Eigen::VectorXd& x, const Eigen::VectorXd& v,
                        const Eigen::VectorXd& w, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd u = model.control(x, w);
  const Eigen::VectorXd dJ = model.phi.jacobian(x).transpose() * v;
  const Eigen::VectorXd xdot = sys.drift(x, theta) + sys.input_matrix(x, theta) * u;
  return model.running_cost(x, u) + dJ.dot(xdot);
}

double bellman_residual_vectorized(const CostModel& model, const PolytopicSystem& sys,
                                   const Eigen::VectorXd& x, const Eigen::VectorXd& v,
                                   const Eigen::VectorXd& w, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd h = sys.weights(theta);
  const Eigen::VectorXd c = stack_one(w);
  // [1; w] (x) v
  Eigen::VectorXd cv(c.size() * v.size());
  for (Eigen::Index a = 0; a < c.size(); ++a) cv.segment(a * v.size(), v.size()) = c[a] * v;
  double r = psi0(model, x).dot(one_kron(w));
  for (int k = 0; k < sys.K(); ++k) {
    if (h[k] != 0.0) r += h[k] * psik(model, sys, k, x).dot(cv);
  }
  return r;
}

BellmanBound bellman_bound_diagnostic(const CostModel& model, const PolytopicSystem& sys,
                                      const Eigen::VectorXd& v, const Eigen::VectorXd& w,
                                      const Eigen::VectorXd& theta,
                                      const std::vector<Eigen::VectorXd>& sample_xs) {
  BellmanBound out;
  for (const auto& x : sample_xs) {
    const double den = model.running_cost(x, model.control(x, w));
    if (!(den > 0.0)) {
      ++out.samples_skipped;
      continue;
    }
    const double ratio = std::abs(bellman_residual(model, sys, x, v, w, theta)) / den;
    ++out.samples_used;
    if (ratio > out.beta_hat || out.argmax.size() == 0) {
      out.beta_hat = std::max(out.beta_hat, ratio);
      out.argmax = x;
    }
  }
  return out;
}

double fit_objective_direct(const CostModel& model, const PolytopicSystem& sys,
                            const WeightMeasure& measure, const Eigen::VectorXd& v,
                            const Eigen::VectorXd& w, const Eigen::VectorXd& theta, double eta) {
  double s = eta * v.squaredNorm();
  for (int m = 0; m < measure.size(); ++m) {
    const double b = bellman_residual(model, sys, measure.points[m], v, w, theta);
    s += measure.weights[m] * b * b;
  }
  return s;
}

}  // namespace sosctl
