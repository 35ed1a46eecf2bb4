#include <gtest/gtest.h>

#include <random>

#include "qswitch/mdp.hpp"
#include "qswitch/qlearn.hpp"
#include "test_util.hpp"

using namespace qswitch;

namespace {

Vector uniform_d(std::size_t n) { return Vector::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n)); }

struct Moments {
  Vector mean;
  Vector se;
  double second = 0.0;
};

template <class Draw>
Moments noise_moments(std::size_t n, std::size_t samples, Draw draw) {
  Vector sum = Vector::Zero(static_cast<Eigen::Index>(n));
  Vector sum2 = Vector::Zero(static_cast<Eigen::Index>(n));
  double sq = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const Vector w = draw(static_cast<std::uint64_t>(i));
    sum += w;
    sum2 += w.cwiseProduct(w);
    sq += w.squaredNorm();
  }
  const double m = static_cast<double>(samples);
  Moments out;
  out.mean = sum / m;
  const Vector var = (sum2 / m - out.mean.cwiseProduct(out.mean)) * (m / (m - 1.0));
  out.se = (var.cwiseMax(0.0) / m).cwiseSqrt();
  out.second = sq / m;
  return out;
}

}  // namespace

TEST(IidSampler, RejectsBadDistributions) {
  EXPECT_THROW(IidSampler((Vector(2) << 1.0, 0.0).finished(), 1), std::invalid_argument);
  EXPECT_THROW(IidSampler((Vector(2) << 0.6, 0.6).finished(), 1), std::invalid_argument);
}

TEST(IidSampler, EmpiricalFrequencies) {
  const Vector d = (Vector(3) << 0.2, 0.5, 0.3).finished();
  const IidSampler s(d, 42);
  Vector counts = Vector::Zero(3);
  const int n = 100000;
  for (int k = 0; k < n; ++k) counts(static_cast<Eigen::Index>(s.draw_coord(static_cast<std::uint64_t>(k)))) += 1.0;
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(counts(i) / n, d(i), 4.0 * std::sqrt(d(i) * (1 - d(i)) / n));
}

TEST(QlearnStep, UpdatesOnlySampledCoordinate) {
  std::mt19937_64 g(1);
  const Mdp mdp = qtest::random_mdp(3, 2, 0.9, g);
  const IidSampler s(uniform_d(6), 3);
  const QVector q = qtest::random_vector(6, g);
  for (std::uint64_t k = 0; k < 50; ++k) {
    const StepResult r = qlearn_step_iid(q, s, mdp, 0.3, k);
    const auto i = static_cast<Eigen::Index>(r.sample.coord);
    for (Eigen::Index j = 0; j < 6; ++j) {
      if (j != i) {
        EXPECT_EQ(r.q_next(j), q(j));
      }
    }
    const std::size_t sn = r.sample.next_state;
    const double target = r.sample.reward + 0.9 * std::max(q(static_cast<Eigen::Index>(sn)), q(static_cast<Eigen::Index>(3 + sn)));
    EXPECT_NEAR(r.q_next(i), q(i) + 0.3 * (target - q(i)), 1e-14);
  }
}

TEST(QlearnStep, ZeroTdLeavesQUnchanged) {
  const double gamma = 0.7;
  const Mdp mdp(1, 1, gamma, {1.0}, {1.0});
  const QVector q = QVector::Constant(1, 1.0 / (1.0 - gamma));
  const StepResult r = qlearn_step_iid(q, IidSampler(uniform_d(1), 1), mdp, 0.5, 0);
  EXPECT_NEAR(r.td, 0.0, 1e-14);
  EXPECT_NEAR(r.q_next(0), q(0), 1e-14);
}

TEST(QlearnStep, NoiseIsOneHotTdMinusConditionalMean) {
  std::mt19937_64 g(2);
  const Mdp mdp = qtest::random_mdp(2, 2, 0.8, g);
  const Vector d = qtest::random_distribution(4, g);
  const IidSampler s(d, 9);
  const QVector q = qtest::random_vector(4, g);
  const StepResult r = qlearn_step_iid(q, s, mdp, 0.2, 17);
  Vector expected = -(d.asDiagonal() * (bellman_optimality(mdp, q) - q));
  expected(static_cast<Eigen::Index>(r.sample.coord)) += r.td;
  EXPECT_LE((r.noise - expected).lpNorm<Eigen::Infinity>(), 1e-15);
}

TEST(QlearnStep, NoiseMartingaleAndSecondMoment) {
  std::mt19937_64 g(3);
  const Mdp mdp = qtest::random_mdp(2, 2, 0.9, g);
  const Vector d = qtest::random_distribution(4, g);
  const IidSampler s(d, 11);
  const QVector q0 = QVector::Zero(4);
  const QVector q = 0.5 * solve_q_star(mdp);
  const Vector r = expected_reward(mdp);
  const Moments m = noise_moments(4, 100000, [&](std::uint64_t k) { return qlearn_step_iid(q, s, mdp, 0.1, k, r).noise; });
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_LE(std::abs(m.mean(i)), 4.0 * m.se(i));
  EXPECT_LE(m.second, noise_constant(mdp, q0).w_max);
}

TEST(MarkovStep, NoiseMartingaleAndSecondMoment) {
  std::mt19937_64 g(4);
  const Mdp mdp = qtest::random_mdp(2, 2, 0.9, g);
  const MarkovSampler s(mdp, StochasticPolicy::uniform(dims_of(mdp)), 13, 0);
  const QVector q = 0.3 * solve_q_star(mdp);
  const Vector r = expected_reward(mdp);
  for (std::size_t coord = 0; coord < 4; ++coord) {
    const Moments m = noise_moments(
        4, 100000, [&](std::uint64_t k) { return markov_transition(q, s, mdp, 0.1, k, coord, r).noise; });
    for (Eigen::Index i = 0; i < 4; ++i) EXPECT_LE(std::abs(m.mean(i)), 4.0 * m.se(i) + 1e-15);
    EXPECT_LE(m.second, noise_constant(mdp, QVector::Zero(4)).w_max);
  }
}

TEST(MarkovStep, PermutationKernelVisitsCyclically) {
  // two states that swap deterministically, one action
  const Mdp mdp(2, 1, 0.9, {0.0, 1.0, 1.0, 0.0}, std::vector<double>(4, 1.0));
  const StochasticPolicy b = StochasticPolicy::uniform(dims_of(mdp));
  EXPECT_THROW(MarkovSampler(mdp, b, 1, 0), std::invalid_argument);
  MarkovSampler s(mdp, b, 1, 0, false);
  QVector q = QVector::Zero(2);
  for (std::uint64_t k = 0; k < 10; ++k) {
    EXPECT_EQ(s.coord(), k % 2);
    q = qlearn_step_markov(q, s, mdp, 0.5, k).q_next;
  }
}

TEST(MarkovStep, MatchesIidConditionalLaw) {
  // same seed and counter: the transition draw at a fixed coordinate is shared
  std::mt19937_64 g(5);
  const Mdp mdp = qtest::random_mdp(3, 2, 0.9, g);
  const MarkovSampler ms(mdp, StochasticPolicy::uniform(dims_of(mdp)), 21, 0);
  const IidSampler is(ms.stationary(), 21);
  const QVector q = qtest::random_vector(6, g);
  const Vector r = expected_reward(mdp);
  int compared = 0;
  for (std::uint64_t k = 0; k < 200; ++k) {
    const StepResult a = qlearn_step_iid(q, is, mdp, 0.2, k, r);
    const StepResult b = markov_transition(q, ms, mdp, 0.2, k, a.sample.coord, r);
    EXPECT_EQ(a.sample.next_state, b.sample.next_state);
    EXPECT_EQ(a.q_next, b.q_next);
    ++compared;
  }
  EXPECT_EQ(compared, 200);
}

TEST(Stationary, DoublyStochasticIsUniform) {
  const Matrix k = (Matrix(3, 3) << 0.2, 0.3, 0.5, 0.5, 0.2, 0.3, 0.3, 0.5, 0.2).finished();
  EXPECT_LE((stationary_distribution(k) - Vector::Constant(3, 1.0 / 3.0)).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(Stationary, TwoStateBalance) {
  const Matrix k = (Matrix(2, 2) << 0.9, 0.1, 0.5, 0.5).finished();
  const Vector d = stationary_distribution(k);
  EXPECT_NEAR(d(0), 5.0 / 6.0, 1e-12);
  EXPECT_NEAR(d(1), 1.0 / 6.0, 1e-12);
  EXPECT_LE((k.transpose() * d - d).lpNorm<1>(), 1e-10);
}

TEST(Stationary, RejectsPeriodicAndReducible) {
  const Matrix perm = (Matrix(3, 3) << 0, 1, 0, 0, 0, 1, 1, 0, 0).finished();
  EXPECT_THROW(stationary_distribution(perm), std::invalid_argument);
  EXPECT_EQ(analyze_chain(perm).period, 3u);
  EXPECT_NO_THROW(stationary_distribution(perm, false));
  const Matrix reducible = (Matrix(2, 2) << 1.0, 0.0, 0.5, 0.5).finished();
  EXPECT_FALSE(analyze_chain(reducible).irreducible);
  EXPECT_THROW(stationary_distribution(reducible), std::invalid_argument);
}

TEST(Stationary, BehaviorKernelRowsAreSimplices) {
  std::mt19937_64 g(6);
  const Mdp mdp = qtest::random_mdp(3, 2, 0.9, g);
  const Matrix k = behavior_kernel(mdp, qtest::random_policy(dims_of(mdp), g));
  EXPECT_LE((k.rowwise().sum() - Vector::Ones(6)).lpNorm<Eigen::Infinity>(), 1e-12);
  EXPECT_GE(k.minCoeff(), 0.0);
}

TEST(NoiseConstant, FormulaExample) {
  // R_max = 1, gamma = 0.5, Q0 = 0: B_Q = 2, W_max = (1 + 1.5 * 2)^2 = 16
  const Mdp mdp(1, 2, 0.5, {1.0, 1.0}, {1.0, -0.5});
  const NoiseConstants c = noise_constant(mdp, QVector::Zero(2));
  EXPECT_DOUBLE_EQ(c.b_q, 2.0);
  EXPECT_DOUBLE_EQ(c.w_max, 16.0);
  ASSERT_TRUE(c.normalized_envelope.has_value());
  EXPECT_LE(c.w_max, *c.normalized_envelope);
}

TEST(NoiseConstant, ZeroReward) {
  const Mdp mdp(1, 2, 0.5, {1.0, 1.0}, {0.0, 0.0});
  const QVector q0 = (QVector(2) << 3.0, -1.0).finished();
  EXPECT_DOUBLE_EQ(noise_constant(mdp, q0).w_max, std::pow(1.5 * 3.0, 2));
}

TEST(NoiseConstant, EnvelopeForZeroInit) {
  std::mt19937_64 g(7);
  for (int i = 0; i < 20; ++i) {
    const Mdp mdp = qtest::random_mdp(3, 3, 0.95, g, 4.0);
    const NoiseConstants c = noise_constant(mdp, QVector::Zero(9));
    ASSERT_TRUE(c.normalized_envelope.has_value());
    EXPECT_LE(c.w_max, *c.normalized_envelope * (1 + 1e-15));
  }
}

TEST(Trajectory, ZeroStepsHoldsInitialState) {
  std::mt19937_64 g(8);
  const Mdp mdp = qtest::random_mdp(2, 2, 0.9, g);
  const QVector q0 = qtest::random_vector(4, g);
  const TrajectoryRecord rec = run_trajectory(mdp, IidSampler(uniform_d(4), 1), 0.1, 0, q0);
  EXPECT_TRUE(rec.steps.empty());
  ASSERT_EQ(rec.q.size(), 1u);
  EXPECT_EQ(rec.q.front(), q0);
}

TEST(Trajectory, BoundednessOverLongRuns) {
  std::mt19937_64 g(9);
  const Mdp mdp = qtest::random_mdp(3, 2, 0.9, g, 2.0);
  RecordOptions lean;
  lean.snapshots = false;
  lean.noise = false;
  const QVector q0 = qtest::random_vector(6, g, 30.0);
  const double envelope = std::max(q0.lpNorm<Eigen::Infinity>(), mdp.r_max() / 0.1);
  const TrajectoryRecord a = run_trajectory(mdp, IidSampler(uniform_d(6), 2), 0.5, 100000, q0, lean);
  const TrajectoryRecord b =
      run_trajectory(mdp, MarkovSampler(mdp, StochasticPolicy::uniform(dims_of(mdp)), 3, 1), 0.5, 100000, q0, lean);
  for (const auto* rec : {&a, &b}) {
    ASSERT_EQ(rec->q_inf.size(), 100001u);
    for (double v : rec->q_inf) ASSERT_LE(v, envelope * (1 + 1e-12));
  }
}

TEST(Trajectory, DeterministicAndReplayable) {
  std::mt19937_64 g(10);
  const Mdp mdp = qtest::random_mdp(2, 3, 0.8, g);
  const QVector q0 = qtest::random_vector(6, g);
  const MarkovSampler ms(mdp, qtest::random_policy(dims_of(mdp), g), 5, 2);
  const TrajectoryRecord a = run_trajectory(mdp, ms, 0.2, 500, q0);
  const TrajectoryRecord b = run_trajectory(mdp, ms, 0.2, 500, q0);
  ASSERT_EQ(a.q.size(), b.q.size());
  for (std::size_t k = 0; k < a.q.size(); ++k) EXPECT_EQ(a.q[k], b.q[k]);
  const auto re = replay(mdp, a);
  for (std::size_t k = 0; k < a.q.size(); ++k) EXPECT_EQ(re[k], a.q[k]);
  const TrajectoryRecord c = run_trajectory(mdp, IidSampler(uniform_d(6), 5), 0.2, 500, q0);
  const TrajectoryRecord d = run_trajectory(mdp, IidSampler(uniform_d(6), 5), 0.2, 500, q0);
  for (std::size_t k = 0; k < c.q.size(); ++k) EXPECT_EQ(c.q[k], d.q[k]);
  const TrajectoryRecord e = run_trajectory(mdp, IidSampler(uniform_d(6), 6), 0.2, 500, q0);
  EXPECT_NE(c.q.back(), e.q.back());
}

TEST(Trajectory, MarkovStartsAtInitialCoord) {
  std::mt19937_64 g(11);
  const Mdp mdp = qtest::random_mdp(2, 2, 0.8, g);
  const MarkovSampler ms(mdp, StochasticPolicy::uniform(dims_of(mdp)), 5, 3);
  const TrajectoryRecord a = run_trajectory(mdp, ms, 0.2, 50, QVector::Zero(4));
  EXPECT_EQ(a.steps.front().coord, 3u);
  for (std::size_t k = 1; k < a.steps.size(); ++k) EXPECT_EQ(a.steps[k].coord, a.steps[k - 1].next_coord);
}
