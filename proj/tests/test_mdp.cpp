#include <gtest/gtest.h>

#include <random>

#include "qswitch/mdp.hpp"
#include "qswitch/policies.hpp"
#include "test_util.hpp"

using namespace qswitch;

namespace {

Mdp uniform_two_state(double gamma) {
  // r(s,a,0) = 0, r(s,a,1) = 1
  return Mdp(2, 2, gamma, std::vector<double>(8, 0.5), {0, 1, 0, 1, 0, 1, 0, 1});
}

// Q^pi solved exactly per deterministic policy; Q* is the best of them.
QVector q_star_by_enumeration(const Mdp& mdp) {
  const Dims dims = dims_of(mdp);
  const Vector r = expected_reward(mdp);
  const auto n = static_cast<Eigen::Index>(mdp.n_sa());
  QVector best = QVector::Constant(n, -1e300);
  for (const auto& pi : enumerate_policies(dims)) {
    const Matrix a = Matrix::Identity(n, n) - mdp.gamma() * mdp.p_matrix() * pi_matrix(pi, dims);
    const QVector q = a.fullPivLu().solve(r);
    best = best.cwiseMax(q);
  }
  return best;
}

}  // namespace

TEST(Mdp, IndexOrderingRoundTrip) {
  std::mt19937_64 g(1);
  const Mdp mdp = qtest::random_mdp(3, 2, 0.9, g);
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t a = 0; a < 2; ++a) {
      const std::size_t i = mdp.index(s, a);
      EXPECT_EQ(i, a * 3 + s);
      EXPECT_EQ(mdp.state_of(i), s);
      EXPECT_EQ(mdp.action_of(i), a);
    }
}

TEST(Mdp, RejectsInvalidInput) {
  EXPECT_THROW(Mdp(2, 1, 0.9, {0.5, 0.6, 0.5, 0.5}, std::vector<double>(4, 0.0)), std::invalid_argument);
  EXPECT_THROW(Mdp(2, 1, 0.9, {1.5, -0.5, 0.5, 0.5}, std::vector<double>(4, 0.0)), std::invalid_argument);
  EXPECT_THROW(Mdp(2, 1, 1.0, {0.5, 0.5, 0.5, 0.5}, std::vector<double>(4, 0.0)), std::invalid_argument);
  EXPECT_THROW(Mdp(0, 1, 0.9, {}, {}), std::invalid_argument);
  EXPECT_THROW(Mdp(2, 1, 0.9, {0.5, 0.5, 0.5}, std::vector<double>(3, 0.0)), std::invalid_argument);
}

TEST(Mdp, RMaxIsLargestAbsoluteReward) {
  const Mdp mdp(1, 2, 0.5, {1.0, 1.0}, {-3.0, 2.0});
  EXPECT_DOUBLE_EQ(mdp.r_max(), 3.0);
}

TEST(ExpectedReward, DegenerateKernel) {
  const double c = 2.5;
  const Mdp mdp(2, 2, 0.9, {0, 1, 0, 1, 0, 1, 0, 1}, std::vector<double>(8, c));
  EXPECT_TRUE(expected_reward(mdp).isApproxToConstant(c, 1e-15));
}

TEST(ExpectedReward, UniformKernelSymmetry) {
  EXPECT_TRUE(expected_reward(uniform_two_state(0.9)).isApproxToConstant(0.5, 1e-15));
}

TEST(ExpectedReward, MatchesBruteForce) {
  std::mt19937_64 g(2);
  const Mdp mdp = qtest::random_mdp(3, 2, 0.8, g);
  const Vector r = expected_reward(mdp);
  const auto& p = mdp.raw_transitions();
  const auto& rw = mdp.raw_rewards();
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t a = 0; a < 2; ++a) {
      double acc = 0.0;
      for (std::size_t j = 0; j < 3; ++j) acc += p[(s * 2 + a) * 3 + j] * rw[(s * 2 + a) * 3 + j];
      EXPECT_NEAR(r(static_cast<Eigen::Index>(a * 3 + s)), acc, 1e-15);
    }
}

TEST(Bellman, ZeroDiscountGivesReward) {
  std::mt19937_64 g(3);
  const Mdp mdp = qtest::random_mdp(2, 3, 0.0, g);
  const QVector q = qtest::random_vector(mdp.n_sa(), g, 5.0);
  EXPECT_TRUE(bellman_optimality(mdp, q).isApprox(expected_reward(mdp), 1e-15));
}

TEST(Bellman, ComponentwiseOracle) {
  std::mt19937_64 g(4);
  const Mdp mdp = qtest::random_mdp(2, 2, 0.9, g);
  for (int trial = 0; trial < 20; ++trial) {
    const QVector q = qtest::random_vector(4, g, 3.0);
    const QVector f = bellman_optimality(mdp, q);
    for (std::size_t s = 0; s < 2; ++s)
      for (std::size_t a = 0; a < 2; ++a) {
        double acc = 0.0;
        for (std::size_t j = 0; j < 2; ++j) {
          const double v = std::max(q(static_cast<Eigen::Index>(j)), q(static_cast<Eigen::Index>(2 + j)));
          acc += mdp.p(s, a, j) * (mdp.r(s, a, j) + mdp.gamma() * v);
        }
        EXPECT_NEAR(f(static_cast<Eigen::Index>(a * 2 + s)), acc, 1e-13);
      }
  }
}

TEST(Bellman, Contraction) {
  std::mt19937_64 g(5);
  const Mdp mdp = qtest::random_mdp(4, 3, 0.85, g);
  for (int trial = 0; trial < 200; ++trial) {
    const QVector q1 = qtest::random_vector(12, g, 4.0);
    const QVector q2 = qtest::random_vector(12, g, 4.0);
    const double lhs = (bellman_optimality(mdp, q1) - bellman_optimality(mdp, q2)).lpNorm<Eigen::Infinity>();
    EXPECT_LE(lhs, 0.85 * (q1 - q2).lpNorm<Eigen::Infinity>() + 1e-13);
  }
}

TEST(Bellman, Monotone) {
  std::mt19937_64 g(6);
  const Mdp mdp = qtest::random_mdp(3, 3, 0.9, g);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const QVector q1 = qtest::random_vector(9, g, 4.0);
    QVector q2 = q1;
    for (Eigen::Index i = 0; i < 9; ++i) q2(i) += u(g);
    EXPECT_TRUE(((bellman_optimality(mdp, q2) - bellman_optimality(mdp, q1)).array() >= -1e-14).all());
  }
}

TEST(Bellman, DimensionMismatch) {
  EXPECT_THROW(bellman_optimality(uniform_two_state(0.9), QVector::Zero(3)), std::invalid_argument);
}

TEST(SolveQStar, ZeroReward) {
  const Mdp mdp(2, 2, 0.9, std::vector<double>(8, 0.5), std::vector<double>(8, 0.0));
  EXPECT_EQ(solve_q_star(mdp).lpNorm<Eigen::Infinity>(), 0.0);
}

TEST(SolveQStar, GeometricSeries) {
  const double gamma = 0.8;
  const Mdp mdp(1, 1, gamma, {1.0}, {1.0});
  EXPECT_NEAR(solve_q_star(mdp)(0), 1.0 / (1.0 - gamma), 1e-10);
}

TEST(SolveQStar, FixedPoint) {
  std::mt19937_64 g(7);
  const Mdp mdp = qtest::random_mdp(3, 2, 0.95, g);
  const QVector q = solve_q_star(mdp);
  EXPECT_LE((bellman_optimality(mdp, q) - q).lpNorm<Eigen::Infinity>(), 1e-10);
}

TEST(SolveQStar, AgreesWithPolicyEnumeration) {
  std::mt19937_64 g(8);
  for (int trial = 0; trial < 10; ++trial) {
    const Mdp mdp = qtest::random_mdp(2, 2, 0.9, g);
    const double tol = 1e-10;
    EXPECT_LE((solve_q_star(mdp, tol) - q_star_by_enumeration(mdp)).lpNorm<Eigen::Infinity>(), tol);
  }
  const Mdp bigger = qtest::random_mdp(3, 3, 0.7, g);
  EXPECT_LE((solve_q_star(bigger) - q_star_by_enumeration(bigger)).lpNorm<Eigen::Infinity>(), 1e-10);
}

TEST(SolveQStar, NormEnvelope) {
  std::mt19937_64 g(9);
  for (int trial = 0; trial < 10; ++trial) {
    const Mdp mdp = qtest::random_mdp(3, 2, 0.9, g, 2.0);
    EXPECT_LE(solve_q_star(mdp).lpNorm<Eigen::Infinity>(), mdp.r_max() / (1.0 - 0.9) + 1e-10);
  }
}

TEST(SolveQStar, CapExhaustion) {
  std::mt19937_64 g(10);
  const Mdp mdp = qtest::random_mdp(2, 2, 0.99, g);
  EXPECT_THROW(solve_q_star(mdp, 1e-10, 3), BudgetError);
}

TEST(MdpJson, RoundTrip) {
  std::mt19937_64 g(11);
  const Mdp mdp = qtest::random_mdp(3, 2, 0.9, g);
  const Mdp back = mdp_from_json(mdp_to_json(mdp));
  EXPECT_EQ(back.raw_transitions(), mdp.raw_transitions());
  EXPECT_EQ(back.raw_rewards(), mdp.raw_rewards());
  EXPECT_EQ(back.gamma(), mdp.gamma());
}

TEST(MdpJson, StrictSchema) {
  nlohmann::json j = mdp_to_json(uniform_two_state(0.9));
  j["typo"] = 1;
  EXPECT_THROW(mdp_from_json(j), ConfigError);
  j = mdp_to_json(uniform_two_state(0.9));
  j["P"][0][0][0] = 0.7;
  EXPECT_THROW(mdp_from_json(j), ConfigError);
  j = mdp_to_json(uniform_two_state(0.9));
  j["r"][1].erase(1);
  EXPECT_THROW(mdp_from_json(j), ConfigError);
}
