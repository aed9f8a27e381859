#include "sosctl/soscert.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sosctl/errors.hpp"
#include "sosctl/linalg.hpp"

namespace sosctl {

using poly::Monomial;
using poly::MonomialBasis;
using poly::Polynomial;
using poly::PolyMatrix;

namespace {

Polynomial quad_form(const PolyMatrix& zcol, const PolyMatrix& M) {
  Polynomial out(zcol.dim());
  for (int a = 0; a < M.rows(); ++a) {
    for (int b = 0; b < M.cols(); ++b) {
      if (!M(a, b).is_zero()) out += zcol(a, 0) * M(a, b) * zcol(b, 0);
    }
  }
  return out;
}

Eigen::VectorXd coeffs_or_overflow(const Polynomial& p, const MonomialBasis& b, const char* what) {
  try {
    return poly::extract_coefficients(p, b);
  } catch (const UnrepresentableMonomial& e) {
    throw BasisOverflow(std::string(what) + ": " + e.what());
  }
}

void check_in_products(const PolyMatrix& M, const SosBases& bases) {
  for (int i = 0; i < M.rows(); ++i) {
    for (int j = 0; j < M.cols(); ++j) coeffs_or_overflow(M(i, j), bases.zz.basis, "U_k entry");
  }
}

// dz/dx^T (F_k + G_k Z W) with W = inv_vec(w).
PolyMatrix closed_loop_factor(const SosBases& bases, const PolytopicSystem& sys,
                              const Eigen::VectorXd& w, int k) {
  const PolyMatrix Jz = PolyMatrix::from_basis_column(bases.z).jacobian();
  const Eigen::MatrixXd W = poly::inv_vec(w, bases.dZr(), bases.dz());
  return Jz * (sys.F(k) + (sys.G(k) * bases.Z) * W);
}

}  // namespace

SosBases make_sos_bases(MonomialBasis z, MonomialBasis zeta, PolyMatrix Z) {
  if (!z.is_strict()) throw ConfigError("z must be a strict basis");
  if (zeta.size() == 0 || !zeta[0].is_constant()) throw ConfigError("zeta must start with 1");
  if (zeta.dim() != z.dim()) throw ConfigError("zeta and z have different state dimensions");
  SosBases b;
  b.xi = poly::non_redundant_form(poly::kron_basis(zeta, z), "xi");
  std::vector<Monomial> vh;
  for (auto [i, j] : poly::vech_positions(b.xi.basis.size())) {
    vh.push_back(b.xi.basis[i] * b.xi.basis[j]);
  }
  b.zt = poly::non_redundant_form(MonomialBasis(std::move(vh)), "z~");
  b.zz = poly::non_redundant_form(poly::kron_basis(zeta, zeta), "zeta*zeta");
  b.z = std::move(z);
  b.zeta = std::move(zeta);
  b.Z = std::move(Z);
  if (!b.xi.basis.is_strict()) throw ConfigError("xi must be strict");
  return b;
}

SosBases benchmark_sos_bases() {
  return make_sos_bases(MonomialBasis::from_exponents({{1, 0}, {0, 1}}, "z"),
                        MonomialBasis::from_exponents({{0, 0}, {1, 0}, {0, 1}}, "zeta"),
                        PolyMatrix::from_basis_row(poly::graded_basis(2, 0, 2, "Z")));
}

SosStructure build_structure(const SosBases& bases) {
  SosStructure s;
  s.dxi = bases.dxi();
  s.dzt = bases.dzt();
  const auto pos = poly::vech_positions(s.dxi);
  s.dvech = static_cast<int>(pos.size());
  s.dr = s.dvech - s.dzt;
  s.cr = s.dr > 0 ? 1 : 0;
  s.Ma = poly::vech_scaling(s.dxi);
  s.Mb = bases.zt.selection;
  const auto& group = bases.zt.index;

  std::vector<int> rep(s.dzt, -1);
  for (int q = 0; q < s.dvech; ++q) {
    const int g = group[q];
    const bool diag = pos[q].first == pos[q].second;
    if (rep[g] < 0 || (diag && pos[rep[g]].first != pos[rep[g]].second)) rep[g] = q;
  }
  std::vector<int> free;
  for (int q = 0; q < s.dvech; ++q) {
    if (rep[group[q]] != q) free.push_back(q);
  }
  std::stable_sort(free.begin(), free.end(), [&](int a, int b) {
    return bases.zt.basis[group[a]].degree() > bases.zt.basis[group[b]].degree();
  });

  std::vector<int> order(rep);
  order.insert(order.end(), free.begin(), free.end());
  s.Mc = Eigen::MatrixXd::Zero(s.dvech, s.dvech);
  for (int p = 0; p < s.dvech; ++p) s.Mc(p, order[p]) = 1.0;
  s.Md = Eigen::MatrixXd::Zero(s.dzt, s.dr);
  s.Cr = Eigen::MatrixXd::Zero(s.dr, s.dvech);
  for (int f = 0; f < s.dr; ++f) {
    s.Md(group[free[f]], f) = 1.0;
    s.Cr(f, free[f]) = 1.0;
    s.free_entries.push_back(pos[free[f]]);
  }
  s.Me = Eigen::MatrixXd::Identity(s.dvech, s.dvech);
  s.Me.topRightCorner(s.dzt, s.dr) = s.Md;

  Eigen::MatrixXd sys(s.dvech, s.dvech);
  sys.topRows(s.dzt) = s.Mb * s.Ma.asDiagonal();
  sys.bottomRows(s.dr) = s.Cr;
  const Eigen::MatrixXd inv = sys.fullPivLu().inverse();
  s.Sc = inv.leftCols(s.dzt);
  s.Sr = inv.rightCols(s.dr);
  return s;
}

PolyMatrix build_U_k(const SosBases& bases, const PolytopicSystem& sys, const Eigen::MatrixXd& P,
                     const Eigen::VectorXd& w, int k) {
  if (P.rows() != bases.dz() || P.cols() != bases.dz()) throw DimensionMismatch("P must be d_z x d_z");
  if (w.size() != bases.dw()) throw DimensionMismatch("w has wrong length");
  const Eigen::MatrixXd Ps = sym(P);
  PolyMatrix U = (-Ps) * closed_loop_factor(bases, sys, w, k);
  check_in_products(U, bases);
  return U;
}

// ------------------------------------------------------------- SosModel

SosModel::SosModel(SosBases bases, const PolytopicSystem& sys)
    : bases_(std::move(bases)), st_(build_structure(bases_)), K_(sys.K()) {
  if (sys.z().exponent_lists() != bases_.z.exponent_lists()) {
    throw ConfigError("certificate z basis differs from the plant's z basis");
  }
  if (bases_.Z.rows() != sys.du()) throw ConfigError("Z must have d_u rows");
  const int dz = bases_.dz(), dw = bases_.dw(), dzt = st_.dzt;
  const PolyMatrix zcol = PolyMatrix::from_basis_column(bases_.z);
  const PolyMatrix Jz = zcol.jacobian();
  CF_.resize(K_);
  CG_.resize(static_cast<std::size_t>(K_) * dw);
  for (int k = 0; k < K_; ++k) {
    const PolyMatrix JF = Jz * sys.F(k);
    const PolyMatrix JGZ = Jz * (sys.G(k) * bases_.Z);
    check_in_products(JF, bases_);
    CF_[k] = Eigen::MatrixXd::Zero(dzt, dz * dz);
    std::vector<PolyMatrix> JGZW(dw);
    for (int j = 0; j < dw; ++j) {
      Eigen::VectorXd e = Eigen::VectorXd::Unit(dw, j);
      JGZW[j] = JGZ * poly::inv_vec(e, bases_.dZr(), dz);
      check_in_products(JGZW[j], bases_);
      CG_[k * dw + j] = Eigen::MatrixXd::Zero(dzt, dz * dz);
    }
    for (int b = 0; b < dz; ++b) {
      for (int a = 0; a < dz; ++a) {
        Eigen::MatrixXd E = Eigen::MatrixXd::Zero(dz, dz);
        E(a, b) = -1.0;
        CF_[k].col(a + b * dz) = coeffs_or_overflow(quad_form(zcol, E * JF), bases_.zt.basis, "z^T U z");
        for (int j = 0; j < dw; ++j) {
          CG_[k * dw + j].col(a + b * dz) =
              coeffs_or_overflow(quad_form(zcol, E * JGZW[j]), bases_.zt.basis, "z^T U z");
        }
      }
    }
  }
}

Eigen::MatrixXd SosModel::coefficient_map(int k, const Eigen::VectorXd& w) const {
  if (w.size() != dw()) throw DimensionMismatch("w has wrong length");
  Eigen::MatrixXd D = CF_.at(k);
  for (int j = 0; j < dw(); ++j) {
    if (w[j] != 0.0) D += w[j] * CG_[k * dw() + j];
  }
  return D;
}

Eigen::VectorXd SosModel::coefficients(int k, const Eigen::VectorXd& w, const Eigen::MatrixXd& P) const {
  if (P.rows() != dz() || P.cols() != dz()) throw DimensionMismatch("P must be d_z x d_z");
  return coefficient_map(k, w) * poly::vec(sym(P));
}

Eigen::MatrixXd SosModel::T(int k, const Eigen::VectorXd& w, const Eigen::MatrixXd& P,
                            const Eigen::VectorXd& r_k) const {
  if (r_k.size() != st_.dr) throw DimensionMismatch("r_k has wrong length");
  Eigen::VectorXd v = st_.Sc * coefficients(k, w, P);
  if (st_.dr > 0) v += st_.Sr * r_k;
  return poly::inv_vech(v);
}

std::vector<Eigen::MatrixXd> SosModel::T_all(const Eigen::VectorXd& w, const Eigen::MatrixXd& P,
                                             const Eigen::MatrixXd& r) const {
  if (r.rows() != st_.dr || r.cols() != K_) throw DimensionMismatch("r must be d_r x K");
  std::vector<Eigen::MatrixXd> out;
  out.reserve(K_);
  for (int k = 0; k < K_; ++k) out.push_back(T(k, w, P, r.col(k)));
  return out;
}

Eigen::MatrixXd solve_T_k(const SosModel& model, const Eigen::VectorXd& w, const Eigen::MatrixXd& P,
                          const Eigen::VectorXd& r_k, int k) {
  return model.T(k, w, P, r_k);
}

Eigen::MatrixXd solve_T_k_direct(const SosModel& model, const PolytopicSystem& sys,
                                 const Eigen::VectorXd& w, const Eigen::MatrixXd& P,
                                 const Eigen::VectorXd& r_k, int k) {
  const auto& b = model.bases();
  const auto& st = model.structure();
  const PolyMatrix U = build_U_k(b, sys, P, w, k);
  const Eigen::VectorXd c =
      coeffs_or_overflow(quad_form(PolyMatrix::from_basis_column(b.z), U), b.zt.basis, "z^T U z");
  Eigen::MatrixXd A(st.dvech, st.dvech);
  A.topRows(st.dzt) = st.Mb * st.Ma.asDiagonal();
  A.bottomRows(st.dr) = st.Cr;
  Eigen::VectorXd rhs(st.dvech);
  rhs.head(st.dzt) = c;
  rhs.tail(st.dr) = st.cr * r_k;
  return poly::inv_vech(A.fullPivLu().solve(rhs));
}

Eigen::VectorXd identity_defect(const SosModel& model, const PolytopicSystem& sys,
                                const Eigen::MatrixXd& T, const Eigen::VectorXd& w,
                                const Eigen::MatrixXd& P, int k) {
  const auto& b = model.bases();
  const PolyMatrix xicol = PolyMatrix::from_basis_column(b.xi.basis);
  const Polynomial lhs = quad_form(xicol, PolyMatrix::constant(T, b.z.dim()));
  const Polynomial rhs = quad_form(PolyMatrix::from_basis_column(b.z), build_U_k(b, sys, P, w, k));
  return coeffs_or_overflow(lhs - rhs, b.zt.basis, "identity defect");
}

// -------------------------------------------------------------- penalty

PenaltyEval penalty(const SosModel& model, const Eigen::VectorXd& w, const Eigen::MatrixXd& P,
                    const Eigen::MatrixXd& r, double kappa, double rho_ub) {
  PenaltyEval out;
  const Eigen::MatrixXd Ps = sym(P);
  out.min_eig_P = min_eig(Ps);
  out.min_eig_T = std::numeric_limits<double>::infinity();
  const auto Ts = model.T_all(w, P, r);
  for (const auto& T : Ts) out.min_eig_T = std::min(out.min_eig_T, min_eig(T));
  constexpr double tol = 1e-12;
  if (!(out.min_eig_P > tol) || !(out.min_eig_T > tol)) {
    out.value = rho_ub;
    return out;
  }
  double total = 0.0, ld = 0.0;
  if (!log_det_spd(Ps, &ld)) {
    out.value = rho_ub;
    return out;
  }
  total += ld;
  for (const auto& T : Ts) {
    if (!log_det_spd(T, &ld)) {
      out.value = rho_ub;
      return out;
    }
    total += ld;
  }
  out.feasible = true;
  out.value = -kappa * total;
  return out;
}

PenaltyGradient penalty_gradient(const SosModel& model, const Eigen::VectorXd& w,
                                 const Eigen::MatrixXd& P, const Eigen::MatrixXd& r, double kappa) {
  const auto& st = model.structure();
  const int dz = model.dz(), dw = model.dw(), K = model.K();
  const Eigen::MatrixXd Ps = sym(P);
  if (!(min_eig(Ps) > 1e-12)) throw InfeasiblePoint("penalty gradient requested where (P+P^T)/2 is not positive definite");
  const Eigen::VectorXd vecPs = poly::vec(Ps);
  const auto pos = poly::vech_positions(st.dxi);

  Eigen::MatrixXd gPs = Ps.inverse();  // d ln det Ps / d Ps
  PenaltyGradient g;
  g.w = Eigen::VectorXd::Zero(dw);
  g.r = Eigen::MatrixXd::Zero(st.dr, K);
  for (int k = 0; k < K; ++k) {
    const Eigen::MatrixXd T = model.T(k, w, P, r.col(k));
    if (!(min_eig(T) > 1e-12)) throw InfeasiblePoint("penalty gradient requested where T_k is not positive definite");
    const Eigen::MatrixXd Ti = T.inverse();
    Eigen::VectorXd gv(st.dvech);
    for (int q = 0; q < st.dvech; ++q) gv[q] = st.Ma[q] * Ti(pos[q].first, pos[q].second);
    const Eigen::VectorXd gc = st.Sc.transpose() * gv;
    if (st.dr > 0) g.r.col(k) = st.Sr.transpose() * gv;
    const Eigen::VectorXd gvecPs = model.coefficient_map(k, w).transpose() * gc;
    gPs += poly::inv_vec(gvecPs, dz, dz);
    for (int j = 0; j < dw; ++j) g.w[j] += gc.dot(model.CG(k, j) * vecPs);
  }
  g.P = -kappa * sym(gPs);
  g.w *= -kappa;
  g.r *= -kappa;
  return g;
}

// ------------------------------------------------------------ Lyapunov

double lyapunov_eval(const SosBases& bases, const Eigen::MatrixXd& P, const Eigen::VectorXd& x) {
  const Eigen::VectorXd zx = bases.z.eval(x);
  return zx.dot(P * zx);
}

double lyapunov_rate(const SosBases& bases, const PolytopicSystem& sys, const Eigen::VectorXd& w,
                     const Eigen::MatrixXd& P, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& theta) {
  const Eigen::VectorXd h = sys.weights(theta);
  const Eigen::VectorXd zx = bases.z.eval(x);
  const Eigen::MatrixXd Jz = bases.z.jacobian(x);
  const Eigen::MatrixXd W = poly::inv_vec(w, bases.dZr(), bases.dz());
  const Eigen::MatrixXd Ps = sym(P);
  const Eigen::MatrixXd Zx = bases.Z.eval(x);
  double rate = 0.0;
  for (int k = 0; k < sys.K(); ++k) {
    if (h[k] == 0.0) continue;
    const Eigen::MatrixXd U =
        -Ps * Jz * (sys.F(k).eval(x) + sys.G(k).eval(x) * Zx * W);
    rate += -2.0 * h[k] * zx.dot(U * zx);
  }
  return rate;
}

Certificate make_certificate(const SosModel& model, const Eigen::VectorXd& w,
                             const Eigen::MatrixXd& P, const Eigen::MatrixXd& r) {
  Certificate c;
  c.P = P;
  c.r = r;
  c.T = model.T_all(w, P, r);
  c.min_eig_P = min_eig(P);
  for (const auto& T : c.T) c.min_eig_T.push_back(min_eig(T));
  return c;
}

}  // namespace sosctl
