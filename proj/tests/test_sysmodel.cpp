#include <random>

#include <gtest/gtest.h>

#include "sosctl/errors.hpp"
#include "sosctl/sysmodel.hpp"
#include "test_support.hpp"

using namespace sosctl;
using sosctl::testing::vec1;
using sosctl::testing::vec2;

TEST(Weights, VertexPoints) {
  const auto sys = benchmark_system();
  Eigen::VectorXd e0 = Eigen::VectorXd::Zero(4), e3 = Eigen::VectorXd::Zero(4);
  e0[0] = 1;
  e3[3] = 1;
  EXPECT_LT((sys.weights(vec2(0, 0)) - e0).norm(), 1e-15);
  EXPECT_LT((sys.weights(vec2(1, 1)) - e3).norm(), 1e-15);
}

TEST(Weights, InteriorPoint) {
  Eigen::VectorXd expect(4);
  expect << 0.09, 0.81, 0.01, 0.09;
  EXPECT_LT((benchmark_system().weights(vec2(0.1, 0.9)) - expect).norm(), 1e-15);
}

TEST(Weights, StayOnSimplexOverTheBox) {
  const auto sys = benchmark_system();
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const Eigen::VectorXd h = sys.weights(vec2(u(rng), u(rng)));
    EXPECT_NEAR(h.sum(), 1.0, 1e-14);
    EXPECT_GE(h.minCoeff(), 0.0);
  }
}

TEST(Weights, OutsideTheBoxIsRejected) {
  EXPECT_THROW(benchmark_system().weights(vec2(1.5, 0.0)), SimplexViolation);
}

TEST(Weights, CustomFamilyOffSimplexIsRejected) {
  auto z = poly::MonomialBasis::from_exponents({{1}});
  auto wf = WeightFunction::custom(1, 1, [](const Eigen::VectorXd&) { return vec1(0.7); });
  // Checked on the parameter support at construction time.
  EXPECT_THROW(PolytopicSystem(z, {poly::PolyMatrix::constant(-Eigen::MatrixXd::Ones(1, 1), 1)},
                               {poly::PolyMatrix::constant(Eigen::MatrixXd::Ones(1, 1), 1)}, wf,
                               FiniteDistribution::uniform({vec1(0)}),
                               FiniteDistribution::uniform({vec1(1)})),
               SimplexViolation);
}

TEST(Drift, EquilibriumAtOrigin) {
  const auto sys = benchmark_system();
  for (const auto& th : sys.theta().points) EXPECT_EQ(sys.drift(vec2(0, 0), th), vec2(0, 0));
}

TEST(Drift, HandEvaluatedPoints) {
  const auto sys = benchmark_system();
  EXPECT_LT((sys.drift(vec2(1, 0), vec2(0, 0)) - vec2(0, 1)).norm(), 1e-14);
  EXPECT_LT((sys.drift(vec2(0, 1), vec2(1, 1)) - vec2(1, 1)).norm(), 1e-14);
}

TEST(Drift, MatchesClosedFormEverywhere) {
  const auto sys = benchmark_system();
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> ux(-3, 3), ut(0, 1);
  for (int i = 0; i < 200; ++i) {
    const Eigen::VectorXd x = vec2(ux(rng), ux(rng));
    const Eigen::VectorXd th = vec2(ut(rng), ut(rng));
    const Eigen::VectorXd a = sys.drift(x, th);
    const Eigen::VectorXd b = benchmark_drift_formula(x, th);
    EXPECT_LT((a - b).norm(), 1e-12 * std::max(1.0, b.norm()));
  }
}

TEST(Drift, InputMatrix) {
  const auto sys = benchmark_system();
  const Eigen::MatrixXd G = sys.input_matrix(vec2(0.5, 2.0), vec2(0.1, 0.9));
  ASSERT_EQ(G.rows(), 2);
  ASSERT_EQ(G.cols(), 1);
  EXPECT_NEAR(G(0, 0), 0.1, 1e-15);
  EXPECT_NEAR(G(1, 0), 1.9, 1e-15);
}

TEST(ClosedLoop, ZeroInputReducesToDrift) {
  const auto sys = benchmark_system();
  const Controller zero = [](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(1); };
  const Eigen::VectorXd x = vec2(0.4, -1.1), th = vec2(0.9, 0.1);
  EXPECT_LT((sys.closed_loop_rhs(zero, x, th) - sys.drift(x, th)).norm(), 1e-15);
}

TEST(ClosedLoop, HandEvaluatedInput) {
  const auto sys = benchmark_system();
  const Controller minus_one = [](const Eigen::VectorXd&) { return vec1(-1.0); };
  EXPECT_LT(sys.closed_loop_rhs(minus_one, vec2(1, 0), vec2(0, 0)).norm(), 1e-14);
}

TEST(ClosedLoop, OverflowRaisesNonFinite) {
  const auto sys = benchmark_system();
  const Controller huge = [](const Eigen::VectorXd&) { return vec1(1e308); };
  EXPECT_THROW(sys.closed_loop_rhs(huge, vec2(1e200, 1e200), vec2(1, 1)), NonFinite);
}

TEST(Distributions, BenchmarkSupports) {
  const auto sys = benchmark_system();
  EXPECT_EQ(sys.theta().size(), 16);
  EXPECT_EQ(sys.x0().size(), 8);
  sys.theta().validate("theta");
  sys.x0().validate("x0");
  for (const auto& x : sys.x0().points) EXPECT_GT(x.norm(), 0.0);
}

TEST(Distributions, ValidationCatchesBadProbabilities) {
  FiniteDistribution d = FiniteDistribution::uniform({vec1(0), vec1(1)});
  d.probs = {0.7, 0.7};
  EXPECT_THROW(d.validate("d"), ConfigError);
  d.probs = {1.5, -0.5};
  EXPECT_THROW(d.validate("d"), ConfigError);
}

TEST(Distributions, SampledIsReproducible) {
  auto draw = [](std::mt19937_64& g) {
    std::uniform_real_distribution<double> u(0, 1);
    return vec1(u(g));
  };
  const auto a = FiniteDistribution::sampled(draw, 5, 42);
  const auto b = FiniteDistribution::sampled(draw, 5, 42);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(a.points[i], b.points[i]);
}

TEST(System, NonStrictBasisIsRejected) {
  auto z = poly::MonomialBasis::from_exponents({{0}, {1}});
  auto wf = WeightFunction::custom(1, 1, [](const Eigen::VectorXd&) { return vec1(1); });
  EXPECT_THROW(PolytopicSystem(z, {poly::PolyMatrix(1, 2, 1)}, {poly::PolyMatrix(1, 1, 1)}, wf,
                               FiniteDistribution::uniform({vec1(0)}),
                               FiniteDistribution::uniform({vec1(1)})),
               ConfigError);
}

TEST(Controller, PolynomialLawMatchesCompiledForm) {
  PolynomialController c;
  c.z = poly::MonomialBasis::from_exponents({{1, 0}, {0, 1}});
  c.Z = poly::PolyMatrix::from_basis_row(poly::graded_basis(2, 0, 2));
  std::mt19937_64 rng(4);
  c.W = sosctl::testing::random_matrix(6, 2, rng);
  const Controller f = c.as_function();
  for (int i = 0; i < 10; ++i) {
    const Eigen::VectorXd x = sosctl::testing::random_vector(2, rng);
    const Eigen::VectorXd direct =
        c.Z.eval(x) * c.W * c.z.eval(x);
    EXPECT_LT((c(x) - direct).norm(), 1e-12);
    EXPECT_LT((f(x) - direct).norm(), 1e-12);
  }
}
