#include <random>

#include <gtest/gtest.h>

#include "sosctl/errors.hpp"
#include "sosctl/linalg.hpp"
#include "sosctl/soscert.hpp"
#include "test_support.hpp"

using namespace sosctl;
using sosctl::testing::Benchmark;
using sosctl::testing::rel_err;
using sosctl::testing::vec1;
using sosctl::testing::vec2;

namespace {

struct RandomPoint {
  Eigen::VectorXd w;
  Eigen::MatrixXd P;
  Eigen::MatrixXd r;
};

RandomPoint random_point(const SosModel& m, std::mt19937_64& rng) {
  return {sosctl::testing::random_vector(m.dw(), rng), sosctl::testing::random_spd(m.dz(), rng),
          sosctl::testing::random_matrix(m.dr(), m.K(), rng)};
}

// Scalar plant dx/dt = (f0 + f1 x + f2 x^2) x + g u with z = [x], zeta = [1, x].
PolytopicSystem cubic_scalar_system(double f0, double f1, double f2, double g) {
  auto z = poly::MonomialBasis::from_exponents({{1}});
  poly::PolyMatrix F(1, 1, 1);
  F(0, 0) = poly::Polynomial::from_terms(1, {{{0}, f0}, {{1}, f1}, {{2}, f2}});
  auto wf = WeightFunction::custom(1, 1, [](const Eigen::VectorXd&) { return vec1(1.0); });
  return PolytopicSystem(z, {F}, {poly::PolyMatrix::constant(Eigen::MatrixXd::Constant(1, 1, g), 1)},
                         wf, FiniteDistribution::uniform({vec1(0)}),
                         FiniteDistribution::uniform({vec1(1)}));
}

SosBases scalar_bases() {
  return make_sos_bases(poly::MonomialBasis::from_exponents({{1}}),
                        poly::MonomialBasis::from_exponents({{0}, {1}}),
                        poly::PolyMatrix::constant(Eigen::MatrixXd::Ones(1, 1), 1));
}

// Penalty value recomputed from its definition.
double penalty_by_definition(const SosModel& m, const Eigen::VectorXd& w, const Eigen::MatrixXd& P,
                             const Eigen::MatrixXd& r, double kappa) {
  double s = std::log(sym(P).determinant());
  for (const auto& T : m.T_all(w, P, r)) s += std::log(T.determinant());
  return -kappa * s;
}

}  // namespace

TEST(Bases, BenchmarkDimensions) {
  const SosBases b = benchmark_sos_bases();
  EXPECT_EQ(b.dz(), 2);
  EXPECT_EQ(b.dzeta(), 3);
  EXPECT_EQ(b.dxi(), 5);
  EXPECT_EQ(b.dZr(), 6);
  EXPECT_EQ(b.dw(), 12);
  EXPECT_EQ(b.xi.basis.entries(),
            poly::MonomialBasis::from_exponents({{1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}}).entries());
}

TEST(Bases, RejectsNonStrictLyapunovBasis) {
  EXPECT_THROW(make_sos_bases(poly::MonomialBasis::from_exponents({{0}, {1}}),
                              poly::MonomialBasis::from_exponents({{0}}),
                              poly::PolyMatrix::constant(Eigen::MatrixXd::Ones(1, 1), 1)),
               ConfigError);
  EXPECT_THROW(make_sos_bases(poly::MonomialBasis::from_exponents({{1}}),
                              poly::MonomialBasis::from_exponents({{1}}),
                              poly::PolyMatrix::constant(Eigen::MatrixXd::Ones(1, 1), 1)),
               ConfigError);
}

TEST(Structure, BenchmarkHasThreeFreeEntries) {
  const SosStructure st = build_structure(benchmark_sos_bases());
  EXPECT_EQ(st.dr, 3);
  ASSERT_EQ(st.free_entries.size(), 3u);
  // One-based (5,3), (3,2), (4,2).
  EXPECT_EQ(st.free_entries[0], std::make_pair(4, 2));
  EXPECT_EQ(st.free_entries[1], std::make_pair(2, 1));
  EXPECT_EQ(st.free_entries[2], std::make_pair(3, 1));
  EXPECT_EQ(st.dvech, 15);
  EXPECT_EQ(st.dzt, 12);
}

TEST(Structure, DistinctProductsLeaveNothingFree) {
  const SosBases b = make_sos_bases(poly::MonomialBasis::from_exponents({{1, 0}, {0, 1}}),
                                    poly::MonomialBasis::from_exponents({{0, 0}}),
                                    poly::PolyMatrix::constant(Eigen::MatrixXd::Ones(1, 1), 2));
  const SosStructure st = build_structure(b);
  EXPECT_EQ(st.dr, 0);
  EXPECT_EQ(st.cr, 0);
  EXPECT_EQ(st.Cr.rows(), 0);
  EXPECT_EQ(b.zt.basis.entries(),
            poly::MonomialBasis::from_exponents({{2, 0}, {1, 1}, {0, 2}}).entries());
}

TEST(Structure, MatricesAreConsistent) {
  const SosStructure st = build_structure(benchmark_sos_bases());
  // Mc is a permutation.
  EXPECT_LT((st.Mc * st.Mc.transpose() - Eigen::MatrixXd::Identity(st.dvech, st.dvech)).norm(), 1e-15);
  Eigen::MatrixXd IMd(st.dzt, st.dzt + st.dr);
  IMd << Eigen::MatrixXd::Identity(st.dzt, st.dzt), st.Md;
  EXPECT_LT((st.Mb - IMd * st.Mc).norm(), 1e-15);
  EXPECT_EQ(st.Me.rows(), st.dvech);
}

TEST(BuildU, ScalarLinearReducesToMinusF) {
  const double a = -1.7;
  const auto sys = cubic_scalar_system(a, 0, 0, 2.0);
  const SosBases b = scalar_bases();
  const poly::PolyMatrix U = build_U_k(b, sys, Eigen::MatrixXd::Identity(1, 1), vec1(0.0), 0);
  EXPECT_DOUBLE_EQ(U.eval(vec1(0.3))(0, 0), -a);
  EXPECT_EQ(U(0, 0).degree(), 0);
}

TEST(BuildU, BenchmarkEntriesFitZetaProducts) {
  const auto& bm = Benchmark::get();
  const poly::PolyMatrix U = build_U_k(bm.model.bases(), bm.sys, bm.init.P0, bm.init.w0, 0);
  for (int i = 0; i < U.rows(); ++i)
    for (int j = 0; j < U.cols(); ++j)
      EXPECT_NO_THROW(poly::extract_coefficients(U(i, j), bm.model.bases().zz.basis));
}

TEST(BuildU, LinearInP) {
  const auto& bm = Benchmark::get();
  const auto& B = bm.model.bases();
  const poly::PolyMatrix U1 = build_U_k(B, bm.sys, bm.init.P0, bm.init.w0, 2);
  const poly::PolyMatrix U2 = build_U_k(B, bm.sys, 2.0 * bm.init.P0, bm.init.w0, 2);
  const Eigen::VectorXd x = vec2(0.7, -1.9);
  EXPECT_LT((U2.eval(x) - 2.0 * U1.eval(x)).norm(), 1e-12 * U1.eval(x).norm());
}

TEST(BuildU, OverflowingBasisIsReported) {
  // A cubic drift term needs zeta up to degree 2 in the scalar case.
  const auto sys = cubic_scalar_system(-1, 0, 0.5, 1);
  const SosBases b = make_sos_bases(poly::MonomialBasis::from_exponents({{1}}),
                                    poly::MonomialBasis::from_exponents({{0}}),
                                    poly::PolyMatrix::constant(Eigen::MatrixXd::Ones(1, 1), 1));
  EXPECT_THROW(build_U_k(b, sys, Eigen::MatrixXd::Identity(1, 1), vec1(0), 0), BasisOverflow);
}

TEST(GramMatrix, ZeroDataGivesZeroMatrix) {
  const auto sys = cubic_scalar_system(0, 0, 0, 0);
  const SosModel m(scalar_bases(), sys);
  const Eigen::MatrixXd T = solve_T_k(m, vec1(0), Eigen::MatrixXd::Identity(1, 1),
                                      Eigen::VectorXd::Zero(m.dr()), 0);
  EXPECT_EQ(T.norm(), 0.0);
}

TEST(GramMatrix, ScalarHandCoefficientMatching) {
  // U = -(f0 + f1 x + f2 x^2) with P = 1 and w = 0, so T = -[[f0, f1/2], [f1/2, f2]].
  const double f0 = -2.0, f1 = 0.6, f2 = -0.3;
  const auto sys = cubic_scalar_system(f0, f1, f2, 1.0);
  const SosModel m(scalar_bases(), sys);
  EXPECT_EQ(m.dr(), 0);
  Eigen::MatrixXd expect(2, 2);
  expect << -f0, -f1 / 2, -f1 / 2, -f2;
  const Eigen::MatrixXd T =
      solve_T_k(m, vec1(0), Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(0), 0);
  EXPECT_LT((T - expect).norm(), 1e-14);
  const Eigen::MatrixXd Td =
      solve_T_k_direct(m, sys, vec1(0), Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(0), 0);
  EXPECT_LT((Td - expect).norm(), 1e-14);
}

TEST(GramMatrix, PolynomialIdentityAtRandomPoints) {
  const auto& bm = Benchmark::get();
  const SosModel& m = bm.model;
  std::mt19937_64 rng(50);
  for (int trial = 0; trial < 50; ++trial) {
    const RandomPoint p = random_point(m, rng);
    for (int k = 0; k < m.K(); ++k) {
      const Eigen::VectorXd rk = p.r.col(k);
      const Eigen::MatrixXd T = solve_T_k(m, p.w, p.P, rk, k);
      EXPECT_EQ((T - T.transpose()).norm(), 0.0);
      const Eigen::VectorXd defect = identity_defect(m, bm.sys, T, p.w, p.P, k);
      EXPECT_LT(defect.cwiseAbs().maxCoeff(), 1e-10) << "trial " << trial << " vertex " << k;
      EXPECT_EQ(T(4, 2), rk[0]);
      EXPECT_EQ(T(2, 1), rk[1]);
      EXPECT_EQ(T(3, 1), rk[2]);
      const Eigen::MatrixXd Td = solve_T_k_direct(m, bm.sys, p.w, p.P, rk, k);
      EXPECT_LT((T - Td).norm(), 1e-10 * std::max(1.0, T.norm()));
    }
  }
}

TEST(GramMatrix, IdentityHoldsPointwise) {
  const auto& bm = Benchmark::get();
  const SosModel& m = bm.model;
  std::mt19937_64 rng(77);
  const RandomPoint p = random_point(m, rng);
  for (int k = 0; k < m.K(); ++k) {
    const Eigen::MatrixXd T = solve_T_k(m, p.w, p.P, p.r.col(k), k);
    const poly::PolyMatrix U = build_U_k(m.bases(), bm.sys, p.P, p.w, k);
    for (int i = 0; i < 10; ++i) {
      const Eigen::VectorXd x = sosctl::testing::random_vector(2, rng);
      const Eigen::VectorXd xi = m.bases().xi.basis.eval(x);
      const Eigen::VectorXd z = m.bases().z.eval(x);
      const double lhs = xi.dot(T * xi);
      const double rhs = z.dot(U.eval(x) * z);
      EXPECT_LT(std::abs(lhs - rhs), 1e-10 * std::max(1.0, std::abs(rhs)));
    }
  }
}

TEST(GramMatrix, SuperpositionInPAndR) {
  const auto& bm = Benchmark::get();
  const SosModel& m = bm.model;
  std::mt19937_64 rng(31);
  const RandomPoint a = random_point(m, rng), b = random_point(m, rng);
  const Eigen::VectorXd r0 = Eigen::VectorXd::Zero(m.dr());
  for (int k = 0; k < m.K(); ++k) {
    // Linear in P for fixed w.
    const Eigen::MatrixXd Tab = solve_T_k(m, a.w, 2.0 * a.P - 0.5 * b.P, r0, k);
    const Eigen::MatrixXd Tsum =
        2.0 * solve_T_k(m, a.w, a.P, r0, k) - 0.5 * solve_T_k(m, a.w, b.P, r0, k);
    EXPECT_LT(rel_err(Tab, Tsum), 1e-12);
    // Affine in w for fixed P.
    const Eigen::VectorXd wz = Eigen::VectorXd::Zero(m.dw());
    const Eigen::MatrixXd lhs = solve_T_k(m, a.w + b.w, a.P, r0, k) + solve_T_k(m, wz, a.P, r0, k);
    const Eigen::MatrixXd rhs = solve_T_k(m, a.w, a.P, r0, k) + solve_T_k(m, b.w, a.P, r0, k);
    EXPECT_LT(rel_err(lhs, rhs), 1e-12);
    // Linear in r and independent of (w, P).
    const Eigen::VectorXd ra = a.r.col(k), rb = b.r.col(k);
    const Eigen::MatrixXd dA = solve_T_k(m, a.w, a.P, ra, k) - solve_T_k(m, a.w, a.P, r0, k);
    const Eigen::MatrixXd dB = solve_T_k(m, b.w, b.P, rb, k) - solve_T_k(m, b.w, b.P, r0, k);
    const Eigen::MatrixXd dAB =
        solve_T_k(m, b.w, a.P, ra + 3.0 * rb, k) - solve_T_k(m, b.w, a.P, r0, k);
    EXPECT_LT(rel_err(dAB, dA + 3.0 * dB), 1e-12);
  }
}

TEST(GramMatrix, ModelMatchesFreeFunction) {
  const auto& bm = Benchmark::get();
  std::mt19937_64 rng(3);
  const RandomPoint p = random_point(bm.model, rng);
  const auto Ts = bm.model.T_all(p.w, p.P, p.r);
  for (int k = 0; k < bm.model.K(); ++k)
    EXPECT_EQ(Ts[k], solve_T_k(bm.model, p.w, p.P, p.r.col(k), k));
}

TEST(Penalty, MatchesDefinitionOnFeasibleBranch) {
  const auto& bm = Benchmark::get();
  const auto& i = bm.init;
  const PenaltyEval pe = penalty(bm.model, i.w0, i.P0, i.r0, 0.1, 1e20);
  ASSERT_TRUE(pe.feasible);
  EXPECT_LT(rel_err(pe.value, penalty_by_definition(bm.model, i.w0, i.P0, i.r0, 0.1)), 1e-12);
  EXPECT_GT(pe.min_eig_P, 0.0);
  EXPECT_GT(pe.min_eig_T, 0.0);
  EXPECT_LT(pe.value, 1e20);
}

TEST(Penalty, ClosedFormLogDet) {
  // dx/dt = -x + u, z = xi = [x], w = 0 and P = 2 give U = T = 2,
  // so the penalty is -0.1 ln(2 * 2).
  const auto sys = cubic_scalar_system(-1, 0, 0, 1);
  const SosBases b = make_sos_bases(poly::MonomialBasis::from_exponents({{1}}),
                                    poly::MonomialBasis::from_exponents({{0}}),
                                    poly::PolyMatrix::constant(Eigen::MatrixXd::Ones(1, 1), 1));
  const SosModel m(b, sys);
  const Eigen::MatrixXd P = Eigen::MatrixXd::Constant(1, 1, 2.0);
  const Eigen::MatrixXd r(0, 1);
  const PenaltyEval pe = penalty(m, vec1(0), P, r, 0.1, 1e20);
  ASSERT_TRUE(pe.feasible);
  EXPECT_NEAR(pe.value, -0.1 * std::log(4.0), 1e-14);
}

TEST(Penalty, InfeasibleBranchReturnsUpperBound) {
  const auto& bm = Benchmark::get();
  const auto& i = bm.init;
  const PenaltyEval pe = penalty(bm.model, i.w0, -i.P0, i.r0, 0.1, 1e20);
  EXPECT_FALSE(pe.feasible);
  EXPECT_EQ(pe.value, 1e20);
  // An unstable gain breaks the vertex Gram matrices.
  const PenaltyEval pw = penalty(bm.model, -50.0 * i.w0, i.P0, i.r0, 0.1, 1e20);
  EXPECT_FALSE(pw.feasible);
  EXPECT_EQ(pw.value, 1e20);
}

TEST(Penalty, LinearInKappa) {
  const auto& bm = Benchmark::get();
  const auto& i = bm.init;
  const double a = penalty(bm.model, i.w0, i.P0, i.r0, 0.1, 1e20).value;
  const double b = penalty(bm.model, i.w0, i.P0, i.r0, 0.35, 1e20).value;
  EXPECT_LT(rel_err(b, 3.5 * a), 1e-13);
}

TEST(PenaltyGradient, MatchesFiniteDifferencesAtRandomFeasiblePoints) {
  const auto& bm = Benchmark::get();
  const SosModel& m = bm.model;
  const auto& i = bm.init;
  const double kappa = 0.1, h = 1e-6;
  std::mt19937_64 rng(99);
  int checked = 0;
  while (checked < 10) {
    const Eigen::VectorXd w = i.w0 + sosctl::testing::random_vector(m.dw(), rng, 0.02);
    Eigen::MatrixXd dP = sosctl::testing::random_matrix(m.dz(), m.dz(), rng, 0.02 * i.P0.norm());
    const Eigen::MatrixXd P = i.P0 + dP + dP.transpose();
    const Eigen::MatrixXd r = i.r0 + sosctl::testing::random_matrix(m.dr(), m.K(), rng, 0.02);
    if (!penalty(m, w, P, r, kappa, 1e20).feasible) continue;
    ++checked;
    const PenaltyGradient g = penalty_gradient(m, w, P, r, kappa);
    auto f = [&](const Eigen::VectorXd& ww, const Eigen::MatrixXd& PP, const Eigen::MatrixXd& rr) {
      const PenaltyEval pe = penalty(m, ww, PP, rr, kappa, 1e20);
      EXPECT_TRUE(pe.feasible);
      return pe.value;
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
    EXPECT_LT(rel_err(g.w, fw), 1e-5);
    EXPECT_LT(rel_err(g.P, fP), 1e-5);
    EXPECT_LT(rel_err(g.r, fr), 1e-5);
    EXPECT_LT((g.P - g.P.transpose()).norm(), 1e-14 * std::max(1.0, g.P.norm()));
  }
}

TEST(PenaltyGradient, InfeasiblePointThrows) {
  const auto& bm = Benchmark::get();
  const auto& i = bm.init;
  EXPECT_THROW(penalty_gradient(bm.model, i.w0, -i.P0, i.r0, 0.1), InfeasiblePoint);
}

TEST(Lyapunov, VanishesAtOrigin) {
  const auto& bm = Benchmark::get();
  const auto& i = bm.init;
  EXPECT_EQ(lyapunov_eval(bm.model.bases(), i.P0, vec2(0, 0)), 0.0);
  EXPECT_EQ(lyapunov_rate(bm.model.bases(), bm.sys, i.w0, i.P0, vec2(0, 0), vec2(0.5, 0.5)), 0.0);
}

TEST(Lyapunov, CertificateDecreasesAtSampledStates) {
  const auto& bm = Benchmark::get();
  const auto& i = bm.init;
  std::mt19937_64 rng(1000);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int s = 0; s < 1000; ++s) {
    const Eigen::VectorXd x = vec2(u(rng), u(rng));
    if (x.norm() == 0.0) continue;
    EXPECT_GT(lyapunov_eval(bm.model.bases(), i.P0, x), 0.0);
    for (const auto& th : bm.sys.theta().points) {
      EXPECT_LT(lyapunov_rate(bm.model.bases(), bm.sys, i.w0, i.P0, x, th), 0.0);
    }
  }
}

TEST(Lyapunov, RateMatchesChainRule) {
  const auto& bm = Benchmark::get();
  const auto& i = bm.init;
  const CostModel& cm = bm.cost;
  const Eigen::VectorXd x = vec2(0.8, -1.4), th = vec2(0.1, 0.9);
  const Eigen::VectorXd z = bm.model.bases().z.eval(x);
  const Eigen::MatrixXd Jz = bm.model.bases().z.jacobian(x);
  const Eigen::VectorXd xdot = bm.sys.drift(x, th) + bm.sys.input_matrix(x, th) * cm.control(x, i.w0);
  const double expect = 2.0 * z.dot(sym(i.P0) * Jz * xdot);
  EXPECT_LT(rel_err(lyapunov_rate(bm.model.bases(), bm.sys, i.w0, i.P0, x, th), expect), 1e-12);
}

TEST(Certificate, SummaryAgreesWithPenalty) {
  const auto& bm = Benchmark::get();
  const auto& i = bm.init;
  const Certificate c = make_certificate(bm.model, i.w0, i.P0, i.r0);
  const PenaltyEval pe = penalty(bm.model, i.w0, i.P0, i.r0, 0.1, 1e20);
  EXPECT_DOUBLE_EQ(c.min_eig_P, pe.min_eig_P);
  ASSERT_EQ(c.min_eig_T.size(), 4u);
  EXPECT_DOUBLE_EQ(*std::min_element(c.min_eig_T.begin(), c.min_eig_T.end()), pe.min_eig_T);
}
