#include "sosctl/sdpsolve.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "sosctl/errors.hpp"
#include "sosctl/linalg.hpp"

namespace sosctl {

using poly::Polynomial;
using poly::PolyMatrix;

// ------------------------------------------------------------ SdpProblem

int SdpProblem::add_symmetric(const std::string& name, int n) {
  blocks_.push_back({name, n, n, true, nvars_});
  nvars_ += n * (n + 1) / 2;
  return num_blocks() - 1;
}

int SdpProblem::add_matrix(const std::string& name, int rows, int cols) {
  blocks_.push_back({name, rows, cols, false, nvars_});
  nvars_ += rows * cols;
  return num_blocks() - 1;
}

int SdpProblem::add_scalar(const std::string& name) { return add_matrix(name, 1, 1); }

int SdpProblem::index(int b, int i, int j) const {
  const Block& bl = blocks_.at(b);
  if (i < 0 || j < 0 || i >= bl.rows || j >= bl.cols) throw DimensionMismatch("block index out of range");
  if (!bl.symmetric) return bl.offset + i + j * bl.rows;
  if (i < j) std::swap(i, j);
  // Lower-triangle column-major position of (i, j).
  const int n = bl.rows;
  return bl.offset + j * n - j * (j - 1) / 2 + (i - j);
}

void SdpProblem::add_equality(const Eigen::VectorXd& row, double rhs) {
  if (row.size() != nvars_) throw DimensionMismatch("equality row has wrong length");
  A_.conservativeResize(A_.rows() + 1, nvars_);
  A_.row(A_.rows() - 1) = row.transpose();
  b_.conservativeResize(b_.size() + 1);
  b_[b_.size() - 1] = rhs;
}

int SdpProblem::add_lmi(const std::string& name, int size) {
  lmis_.push_back({name, size, Eigen::MatrixXd::Zero(size, size), {}});
  return static_cast<int>(lmis_.size()) - 1;
}

void SdpProblem::lmi_add_term(int id, int var, const Eigen::MatrixXd& m) {
  Lmi& l = lmis_.at(id);
  if (m.rows() != l.size || m.cols() != l.size) throw DimensionMismatch("LMI term has wrong size");
  for (auto& [v, mat] : l.terms) {
    if (v == var) {
      mat += m;
      return;
    }
  }
  l.terms.emplace_back(var, m);
}

void SdpProblem::lmi_add_symmetric_block(int id, int b, double coeff, int r0) {
  const Block& bl = blocks_.at(b);
  if (!bl.symmetric) throw DimensionMismatch("expected a symmetric block");
  const int size = lmis_.at(id).size;
  for (int j = 0; j < bl.rows; ++j) {
    for (int i = j; i < bl.rows; ++i) {
      Eigen::MatrixXd m = Eigen::MatrixXd::Zero(size, size);
      m(r0 + i, r0 + j) = coeff;
      m(r0 + j, r0 + i) = coeff;
      lmi_add_term(id, index(b, i, j), m);
    }
  }
}

void SdpProblem::lmi_add_scaled_identity(int id, int var, double coeff) {
  const int size = lmis_.at(id).size;
  lmi_add_term(id, var, coeff * Eigen::MatrixXd::Identity(size, size));
}

std::vector<Eigen::MatrixXd> SdpProblem::evaluate(const Eigen::VectorXd& y) const {
  std::vector<Eigen::MatrixXd> out;
  for (const auto& l : lmis_) {
    Eigen::MatrixXd F = l.constant;
    for (const auto& [v, m] : l.terms) F += y[v] * m;
    out.push_back(std::move(F));
  }
  return out;
}

Eigen::MatrixXd SdpProblem::value(int b, const Eigen::VectorXd& y) const {
  const Block& bl = blocks_.at(b);
  Eigen::MatrixXd m(bl.rows, bl.cols);
  for (int j = 0; j < bl.cols; ++j) {
    for (int i = 0; i < bl.rows; ++i) m(i, j) = y[index(b, i, j)];
  }
  return m;
}

void SdpProblem::dump(std::ostream& os) const {
  os << std::setprecision(17);
  os << "variables " << nvars_ << "\n";
  for (const auto& b : blocks_) {
    os << "block " << b.name << ' ' << b.rows << ' ' << b.cols << ' '
       << (b.symmetric ? "symmetric" : "dense") << " offset " << b.offset << "\n";
  }
  os << "objective";
  for (int i = 0; i < c_.size(); ++i) {
    if (c_[i] != 0.0) os << ' ' << i << ':' << c_[i];
  }
  os << "\nequalities " << A_.rows() << "\n";
  for (int r = 0; r < A_.rows(); ++r) {
    for (int i = 0; i < A_.cols(); ++i) {
      if (A_(r, i) != 0.0) os << r << ' ' << i << ' ' << A_(r, i) << "\n";
    }
    os << "rhs " << r << ' ' << b_[r] << "\n";
  }
  os << "lmis " << lmis_.size() << "\n";
  for (const auto& l : lmis_) {
    os << "lmi " << l.name << ' ' << l.size << "\n";
    auto entries = [&](const char* tag, const Eigen::MatrixXd& m) {
      for (int j = 0; j < m.cols(); ++j) {
        for (int i = j; i < m.rows(); ++i) {
          if (m(i, j) != 0.0) os << tag << ' ' << i << ' ' << j << ' ' << m(i, j) << "\n";
        }
      }
    };
    entries("c", l.constant);
    for (const auto& [v, m] : l.terms) {
      os << "var " << v << "\n";
      entries("t", m);
    }
  }
}

// ---------------------------------------------------------------- solver

namespace {

// LMIs restricted to the affine set y = y0 + N z, optionally with a slack
// variable s appended to z that adds s I to every block.
struct Reduced {
  std::vector<Eigen::MatrixXd> G0;
  std::vector<std::vector<Eigen::MatrixXd>> G;  // per LMI, per reduced variable
  int nz = 0;
  int total_size = 0;

  std::vector<Eigen::MatrixXd> eval(const Eigen::VectorXd& z) const {
    std::vector<Eigen::MatrixXd> out;
    for (std::size_t j = 0; j < G0.size(); ++j) {
      Eigen::MatrixXd F = G0[j];
      for (int i = 0; i < nz; ++i) {
        if (z[i] != 0.0) F += z[i] * G[j][i];
      }
      out.push_back(std::move(F));
    }
    return out;
  }
};

// -sum ln det F_j, or +inf if some block is not positive definite.
double barrier(const std::vector<Eigen::MatrixXd>& Fs) {
  double s = 0.0;
  for (const auto& F : Fs) {
    double ld = 0.0;
    if (!log_det_spd(F, &ld)) return std::numeric_limits<double>::infinity();
    s -= ld;
  }
  return s;
}

struct CenterResult {
  bool ok = false;
  int iterations = 0;
};

// Minimizes t c^T z + barrier(z) by damped Newton. `stop` is checked after
// every step and ends centering early when it returns true.
template <class Stop>
CenterResult center(const Reduced& R, const Eigen::VectorXd& c, double t, Eigen::VectorXd& z,
                    int max_newton, Stop stop) {
  CenterResult res;
  auto f = [&](const Eigen::VectorXd& zz) { return t * c.dot(zz) + barrier(R.eval(zz)); };
  double fz = f(z);
  for (int it = 0; it < max_newton; ++it) {
    const auto Fs = R.eval(z);
    Eigen::VectorXd g = t * c;
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(R.nz, R.nz);
    for (std::size_t j = 0; j < Fs.size(); ++j) {
      const int m = static_cast<int>(Fs[j].rows());
      const Eigen::MatrixXd Fi = Fs[j].llt().solve(Eigen::MatrixXd::Identity(m, m));
      Eigen::MatrixXd Mv(m * m, R.nz), MvT(m * m, R.nz);
      for (int i = 0; i < R.nz; ++i) {
        const Eigen::MatrixXd Mi = Fi * R.G[j][i];
        g[i] -= Mi.trace();
        Mv.col(i) = Eigen::Map<const Eigen::VectorXd>(Mi.data(), m * m);
        const Eigen::MatrixXd MiT = Mi.transpose();
        MvT.col(i) = Eigen::Map<const Eigen::VectorXd>(MiT.data(), m * m);
      }
      H.noalias() += Mv.transpose() * MvT;
    }
    H = sym(H);
    const double reg = 1e-14 * std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
    H.diagonal().array() += reg;
    const Eigen::VectorXd dz = H.ldlt().solve(-g);
    const double dec = -g.dot(dz);
    ++res.iterations;
    if (!(dec >= 0.0) || !dz.allFinite()) return res;
    // Below this the decrease is lost in the rounding of f itself.
    if (dec / 2.0 < std::max(1e-10, 1e-14 * std::abs(fz))) {
      res.ok = true;
      return res;
    }
    double alpha = 1.0;
    bool moved = false;
    while (alpha > 1e-16) {
      const Eigen::VectorXd zn = z + alpha * dz;
      const double fn = f(zn);
      if (std::isfinite(fn) && fn < fz && fn <= fz - 0.25 * alpha * dec) {
        z = zn;
        fz = fn;
        moved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!moved) {
      // No further progress is possible at machine precision.
      res.ok = dec < std::max(1e-6, 1e-12 * std::abs(fz));
      return res;
    }
    if (stop(z)) {
      res.ok = true;
      return res;
    }
  }
  return res;
}

}  // namespace

SdpSolution solve_sdp(const SdpProblem& p, const SdpOptions& opts) {
  const int n = p.num_vars();
  if (p.lmis().empty()) throw ConfigError("SDP has no cone constraints");
  Eigen::VectorXd c = p.c().size() == n ? p.c() : Eigen::VectorXd::Zero(n);

  // Affine parametrization of the equalities.
  Eigen::VectorXd y0 = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd N = Eigen::MatrixXd::Identity(n, n);
  if (p.A().rows() > 0) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(p.A(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const double thr = 1e-12 * std::max(1.0, sv.size() ? sv[0] : 0.0);
    int rank = 0;
    while (rank < sv.size() && sv[rank] > thr) ++rank;
    y0 = svd.matrixV().leftCols(rank) *
         (sv.head(rank).cwiseInverse().asDiagonal() * (svd.matrixU().leftCols(rank).transpose() * p.b()));
    const double res = (p.A() * y0 - p.b()).cwiseAbs().maxCoeff();
    if (res > opts.eq_tol * std::max(1.0, p.b().cwiseAbs().maxCoeff())) {
      throw Infeasible("SDP equality constraints are inconsistent");
    }
    N = svd.matrixV().rightCols(n - rank);
  }

  Reduced R;
  R.nz = static_cast<int>(N.cols());
  const auto F0 = p.evaluate(y0);
  for (std::size_t j = 0; j < p.lmis().size(); ++j) {
    const auto& l = p.lmis()[j];
    R.G0.push_back(F0[j]);
    std::vector<Eigen::MatrixXd> Gj(R.nz, Eigen::MatrixXd::Zero(l.size, l.size));
    for (const auto& [v, m] : l.terms) {
      for (int i = 0; i < R.nz; ++i) {
        if (N(v, i) != 0.0) Gj[i] += N(v, i) * m;
      }
    }
    R.G.push_back(std::move(Gj));
    R.total_size += l.size;
  }
  const Eigen::VectorXd cz = N.transpose() * c;

  SdpSolution sol;

  // Phase I: minimize s subject to F_j(z) + s I > 0 and s >= -1.
  Eigen::VectorXd z = Eigen::VectorXd::Zero(R.nz);
  double lam0 = std::numeric_limits<double>::infinity();
  for (const auto& F : R.eval(z)) lam0 = std::min(lam0, min_eig(F));
  if (!(lam0 > opts.cone_margin)) {
    Reduced R1 = R;
    R1.nz = R.nz + 1;
    for (std::size_t j = 0; j < R.G0.size(); ++j) {
      const auto m = R.G0[j].rows();
      R1.G[j].push_back(Eigen::MatrixXd::Identity(m, m));
    }
    R1.G0.push_back(Eigen::MatrixXd::Ones(1, 1));  // s + 1 >= 0
    R1.G.push_back(std::vector<Eigen::MatrixXd>(R1.nz, Eigen::MatrixXd::Zero(1, 1)));
    R1.G.back().back()(0, 0) = 1.0;
    R1.total_size += 1;
    Eigen::VectorXd z1 = Eigen::VectorXd::Zero(R1.nz);
    z1[R.nz] = std::max(0.0, -lam0) + 1.0;
    Eigen::VectorXd c1 = Eigen::VectorXd::Zero(R1.nz);
    c1[R.nz] = 1.0;
    auto feasible = [&](const Eigen::VectorXd& zz) {
      if (zz[R.nz] >= 0.0) return false;
      for (const auto& F : R.eval(zz.head(R.nz))) {
        if (!(min_eig(F) > opts.cone_margin)) return false;
      }
      return true;
    };
    bool found = false;
    for (double t = 1.0; R1.total_size / t > 1e-3 * opts.gap_tol; t *= opts.mu) {
      const auto cr = center(R1, c1, t, z1, opts.max_newton, feasible);
      sol.newton_iterations += cr.iterations;
      ++sol.outer_iterations;
      if (feasible(z1)) {
        found = true;
        break;
      }
      if (!cr.ok) throw MaxIterations("SDP phase I centering did not converge");
    }
    if (!found) throw Infeasible("SDP has no strictly feasible point");
    z = z1.head(R.nz);
  }

  // Phase II: barrier path following on the objective.
  for (double t = 1.0;; t *= opts.mu) {
    const auto cr = center(R, -cz, t, z, opts.max_newton, [](const Eigen::VectorXd&) { return false; });
    sol.newton_iterations += cr.iterations;
    ++sol.outer_iterations;
    if (!cr.ok) throw MaxIterations("SDP centering did not converge");
    if (std::abs(cz.dot(z)) > opts.unbounded) throw MaxIterations("SDP objective appears unbounded");
    if (R.total_size / t < opts.gap_tol) break;
  }

  sol.y = y0 + N * z;
  sol.objective = c.dot(sol.y);
  sol.equality_residual =
      p.A().rows() > 0 ? (p.A() * sol.y - p.b()).cwiseAbs().maxCoeff() : 0.0;
  sol.min_cone_eig = std::numeric_limits<double>::infinity();
  for (const auto& F : p.evaluate(sol.y)) sol.min_cone_eig = std::min(sol.min_cone_eig, min_eig(F));
  return sol;
}

// -------------------------------------------------- initialization SDPs

InitSdp assemble_init_sdp(const SosBases& bases, const PolytopicSystem& sys, double bound) {
  if (!(bound > 0.0)) throw ConfigError("block bound must be positive");
  const int dz = bases.dz(), dzeta = bases.dzeta(), dZr = bases.dZr(), K = sys.K();
  const int ns = dzeta * dz;
  const auto& zz = bases.zz.basis;
  InitSdp out;
  SdpProblem& p = out.problem;
  out.Q = p.add_symmetric("Q", dz);
  out.H = p.add_matrix("H", dZr, dz);
  for (int k = 0; k < K; ++k) out.S.push_back(p.add_symmetric("S" + std::to_string(k + 1), ns));
  out.eps = p.add_scalar("eps");
  const int eps = p.index(out.eps, 0, 0);

  const PolyMatrix Jz = PolyMatrix::from_basis_column(bases.z).jacobian();
  auto coeffs = [&](const Polynomial& q) {
    try {
      return poly::extract_coefficients(q, zz);
    } catch (const UnrepresentableMonomial& e) {
      throw BasisOverflow(std::string("initialization constraint: ") + e.what());
    }
  };

  for (int k = 0; k < K; ++k) {
    const PolyMatrix JF = Jz * sys.F(k);
    const PolyMatrix JGZ = Jz * (sys.G(k) * bases.Z);
    // Contribution of every scalar variable to Y_k + Y_k^T, entry (a, b),
    // as coefficients over zeta (x) zeta.
    std::vector<std::vector<Eigen::VectorXd>> contrib(
        static_cast<std::size_t>(dz) * dz, std::vector<Eigen::VectorXd>(p.num_vars(), Eigen::VectorXd()));
    auto accumulate = [&](int var, const PolyMatrix& Y) {
      const PolyMatrix S = Y + Y.transpose();
      for (int b = 0; b < dz; ++b) {
        for (int a = b; a < dz; ++a) {
          Eigen::VectorXd v = coeffs(S(a, b));
          auto& slot = contrib[a + b * dz][var];
          slot = slot.size() ? Eigen::VectorXd(slot + v) : v;
        }
      }
    };
    for (int j = 0; j < dz; ++j) {
      for (int i = j; i < dz; ++i) {
        Eigen::MatrixXd E = Eigen::MatrixXd::Zero(dz, dz);
        E(i, j) = 1.0;
        E(j, i) = 1.0;
        accumulate(p.index(out.Q, i, j), JF * (-E));
      }
    }
    for (int j = 0; j < dz; ++j) {
      for (int i = 0; i < dZr; ++i) {
        Eigen::MatrixXd E = Eigen::MatrixXd::Zero(dZr, dz);
        E(i, j) = 1.0;
        accumulate(p.index(out.H, i, j), JGZ * (-E));
      }
    }
    for (int b = 0; b < dz; ++b) {
      for (int a = b; a < dz; ++a) {
        for (int mi = 0; mi < zz.size(); ++mi) {
          Eigen::VectorXd row = Eigen::VectorXd::Zero(p.num_vars());
          for (int v = 0; v < p.num_vars(); ++v) {
            const auto& slot = contrib[a + b * dz][v];
            if (slot.size()) row[v] += slot[mi];
          }
          for (int i = 0; i < dzeta; ++i) {
            for (int j = 0; j < dzeta; ++j) {
              if (bases.zz.index[i * dzeta + j] == mi) row[p.index(out.S[k], i * dz + a, j * dz + b)] -= 1.0;
            }
          }
          p.add_equality(row, 0.0);
        }
      }
    }
  }

  for (int k = 0; k < K; ++k) {
    const int l = p.add_lmi("S" + std::to_string(k + 1) + " - eps I", ns);
    p.lmi_add_symmetric_block(l, out.S[k], 1.0);
    p.lmi_add_scaled_identity(l, eps, -1.0);
  }
  {
    const int l = p.add_lmi("Q - eps I", dz);
    p.lmi_add_symmetric_block(l, out.Q, 1.0);
    p.lmi_add_scaled_identity(l, eps, -1.0);
  }
  {
    const int l = p.add_lmi("eps", 1);
    p.lmi_add_scaled_identity(l, eps, 1.0);
  }
  for (int k = 0; k < K; ++k) {
    const int l = p.add_lmi("bound I - S" + std::to_string(k + 1), ns);
    p.lmi(l).constant = bound * Eigen::MatrixXd::Identity(ns, ns);
    p.lmi_add_symmetric_block(l, out.S[k], -1.0);
  }
  {
    const int l = p.add_lmi("bound I - Q", dz);
    p.lmi(l).constant = bound * Eigen::MatrixXd::Identity(dz, dz);
    p.lmi_add_symmetric_block(l, out.Q, -1.0);
  }
  Eigen::VectorXd c = Eigen::VectorXd::Zero(p.num_vars());
  c[eps] = 1.0;
  p.set_objective(c);
  return out;
}

InitResult solve_init_sdp(const SosBases& bases, const PolytopicSystem& sys, const SdpOptions& opts,
                          double bound) {
  const InitSdp sdp = assemble_init_sdp(bases, sys, bound);
  const SdpSolution s = solve_sdp(sdp.problem, opts);
  InitResult r;
  r.eps1 = s.objective;
  if (!(r.eps1 > 1e-9)) throw Infeasible("first initialization problem has no strictly feasible point");
  r.Q = sdp.problem.value(sdp.Q, s.y);
  r.H = sdp.problem.value(sdp.H, s.y);
  for (int b : sdp.S) r.S.push_back(sdp.problem.value(b, s.y));
  r.equality_residual = s.equality_residual;
  return r;
}

RSdpResult solve_r_sdp(const SosModel& model, const Eigen::VectorXd& w0, const Eigen::MatrixXd& P0,
                       const SdpOptions& opts) {
  const auto& st = model.structure();
  const int K = model.K(), dr = st.dr, dxi = st.dxi;
  SdpProblem p;
  const int rb = dr > 0 ? p.add_matrix("r", dr, K) : -1;
  const int eb = p.add_scalar("eps2");
  const int eps = p.index(eb, 0, 0);
  const Eigen::VectorXd zero_r = Eigen::VectorXd::Zero(dr);
  for (int k = 0; k < K; ++k) {
    const int l = p.add_lmi("T" + std::to_string(k + 1) + " - eps2 I", dxi);
    p.lmi(l).constant = model.T(k, w0, P0, zero_r);
    for (int f = 0; f < dr; ++f) p.lmi_add_term(l, p.index(rb, f, k), poly::inv_vech(st.Sr.col(f)));
    p.lmi_add_scaled_identity(l, eps, -1.0);
  }
  const int l = p.add_lmi("eps2", 1);
  p.lmi_add_scaled_identity(l, eps, 1.0);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(p.num_vars());
  c[eps] = 1.0;
  p.set_objective(c);

  const SdpSolution s = solve_sdp(p, opts);
  RSdpResult out;
  out.eps2 = s.objective;
  if (!(out.eps2 > 1e-9)) throw Infeasible("second initialization problem has no strictly feasible point");
  out.r = dr > 0 ? p.value(rb, s.y) : Eigen::MatrixXd::Zero(0, K);
  return out;
}

InitialVariables initial_variables(const Eigen::MatrixXd& Q, const Eigen::MatrixXd& H,
                                   const Eigen::MatrixXd& r) {
  if (!is_pd(Q)) throw InfeasiblePoint("Q is not positive definite");
  InitialVariables v;
  v.P = Q.inverse();
  v.w = poly::vec(H * v.P);
  v.r = r;
  return v;
}

InitResult initialize(const SosModel& model, const PolytopicSystem& sys, const SdpOptions& opts,
                      double bound) {
  InitResult res = solve_init_sdp(model.bases(), sys, opts, bound);
  const InitialVariables first = initial_variables(res.Q, res.H, Eigen::MatrixXd::Zero(model.dr(), model.K()));
  const RSdpResult second = solve_r_sdp(model, first.w, first.P, opts);
  res.r = second.r;
  res.eps2 = second.eps2;
  res.w0 = first.w;
  res.P0 = first.P;
  res.r0 = second.r;
  return res;
}

}  // namespace sosctl
