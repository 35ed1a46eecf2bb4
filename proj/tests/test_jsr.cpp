#include <gtest/gtest.h>

#include <random>

#include "qswitch/harness.hpp"
#include "qswitch/jsr.hpp"
#include "test_util.hpp"

using namespace qswitch;

namespace {
std::vector<Matrix> random_family(std::size_t count, Eigen::Index n, std::mt19937_64& g) {
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(Matrix(qtest::random_vector(static_cast<std::size_t>(n * n), g).reshaped(n, n)) * 0.5);
  return out;
}
}  // namespace

TEST(Jsr, DiagonalSingleton) {
  const std::vector<Matrix> modes{(Matrix(2, 2) << 0.9, 0.0, 0.0, 0.5).finished()};
  const JsrReport r = jsr_bounds(modes);
  EXPECT_NEAR(r.lower, 0.9, 1e-6);
  EXPECT_NEAR(r.upper, 0.9, 1e-6);
}

TEST(Jsr, ScaledIdentityExactAtDepthOne) {
  const std::vector<Matrix> modes{0.7 * Matrix::Identity(3, 3), 0.7 * Matrix::Identity(3, 3)};
  JsrOptions opts;
  opts.max_depth = 1;
  const JsrReport r = jsr_bounds(modes, opts);
  EXPECT_NEAR(r.lower, 0.7, 1e-14);
  EXPECT_NEAR(r.upper, 0.7, 1e-14);
  EXPECT_EQ(r.depth, 1u);
}

TEST(Jsr, TwoStateExample) {
  const SwitchingFamily fam = build_family(example_mdp(), example_distribution(), kExampleAlpha);
  JsrOptions opts;
  opts.max_depth = 6;
  const JsrReport r = jsr_bounds(fam, opts);
  EXPECT_NEAR(r.lower, 0.9848, 5e-4);
  EXPECT_LE(r.lower, r.upper);
  EXPECT_LT(r.upper, r.rho_row);
  EXPECT_NEAR(r.rho_row, 0.991, 1e-12);
}

TEST(Jsr, NonCommutingPairKnownValue) {
  // {[[1,1],[0,1]], [[1,0],[1,1]]} has JSR equal to the golden ratio
  const std::vector<Matrix> modes{(Matrix(2, 2) << 1, 1, 0, 1).finished(), (Matrix(2, 2) << 1, 0, 1, 1).finished()};
  JsrOptions opts;
  opts.max_depth = 10;
  const JsrReport r = jsr_bounds(modes, opts);
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  EXPECT_NEAR(r.lower, phi, 1e-12);
  EXPECT_GE(r.upper, phi - 1e-12);
  Matrix w = Matrix::Identity(2, 2);
  for (std::size_t i : r.witness) w = modes[i] * w;
  EXPECT_NEAR(std::pow(spectral_radius(w), 1.0 / static_cast<double>(r.witness.size())), r.lower, 1e-14);
}

TEST(RowSumRate, Cases) {
  EXPECT_NEAR(build_family(example_mdp(), example_distribution(), 0.9).rho_row(), 0.991, 1e-15);
  std::mt19937_64 g(1);
  const Mdp half = qtest::random_mdp(2, 2, 0.5, g);
  const SwitchingFamily fam = build_family(half, Vector::Constant(4, 0.25), 0.1);
  EXPECT_NEAR(row_sum_rate(fam), 0.9875, 1e-15);
  const Mdp near_one = qtest::random_mdp(2, 2, 0.999999, g);
  EXPECT_GT(row_sum_rate(build_family(near_one, Vector::Constant(4, 0.25), 0.1)), 1.0 - 1e-7);
}

TEST(Jsr, BracketWithinRowRate) {
  std::mt19937_64 g(2);
  for (int inst = 0; inst < 5; ++inst) {
    const Mdp mdp = qtest::random_mdp(2, 2, 0.9, g);
    const SwitchingFamily fam = build_family(mdp, qtest::random_distribution(4, g), 0.5);
    JsrOptions opts;
    opts.max_depth = 5;
    const JsrReport r = jsr_bounds(fam, opts);
    EXPECT_LE(r.lower, r.upper + 1e-12);
    EXPECT_LE(r.upper, r.rho_row + 1e-12);
  }
}

TEST(Jsr, MonotoneTightening) {
  std::mt19937_64 g(3);
  const auto modes = random_family(3, 3, g);
  JsrOptions opts;
  opts.max_depth = 7;
  const JsrReport r = jsr_bounds(modes, opts);
  ASSERT_EQ(r.lower_by_depth.size(), r.depth);
  for (std::size_t k = 1; k < r.depth; ++k) {
    EXPECT_GE(r.lower_by_depth[k], r.lower_by_depth[k - 1]);
    EXPECT_LE(r.upper_by_depth[k], r.upper_by_depth[k - 1]);
  }
  // deeper runs never loosen the bracket
  JsrOptions shallow = opts;
  shallow.max_depth = 3;
  const JsrReport s = jsr_bounds(modes, shallow);
  EXPECT_LE(s.lower, r.lower);
  EXPECT_GE(s.upper, r.upper);
}

TEST(Jsr, UpperAgreesWithUnprunedProfile) {
  std::mt19937_64 g(4);
  const auto modes = random_family(2, 3, g);
  JsrOptions opts;
  opts.max_depth = 6;
  opts.prune_slack = 0.0;
  const JsrReport r = jsr_bounds(modes, opts);
  const ProductNormProfile prof = product_norm_profile(modes, 6);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k <= 6; ++k) {
    const double kk = static_cast<double>(k);
    best = std::min({best, std::pow(prof.spectral[k], 1.0 / kk), std::pow(prof.infinity[k], 1.0 / kk)});
  }
  EXPECT_NEAR(r.upper, best, 1e-12);
  EXPECT_EQ(r.pruned, 0u);
}

TEST(Jsr, ScaleCovariance) {
  std::mt19937_64 g(5);
  const auto modes = random_family(2, 3, g);
  std::vector<Matrix> scaled;
  for (const auto& m : modes) scaled.push_back(2.0 * m);
  JsrOptions opts;
  opts.max_depth = 6;
  const JsrReport a = jsr_bounds(modes, opts);
  const JsrReport b = jsr_bounds(scaled, opts);
  EXPECT_NEAR(b.lower, 2.0 * a.lower, 1e-10);
  EXPECT_NEAR(b.upper, 2.0 * a.upper, 1e-10);
}

TEST(Jsr, Deterministic) {
  std::mt19937_64 g(6);
  const auto modes = random_family(3, 2, g);
  const JsrReport a = jsr_bounds(modes);
  const JsrReport b = jsr_bounds(modes);
  EXPECT_EQ(a.lower, b.lower);
  EXPECT_EQ(a.upper, b.upper);
  EXPECT_EQ(a.witness, b.witness);
}

TEST(Jsr, BudgetAndInputErrors) {
  std::mt19937_64 g(7);
  const auto modes = random_family(4, 2, g);
  JsrOptions opts;
  opts.budget = 3;
  EXPECT_THROW(jsr_bounds(modes, opts), BudgetError);
  opts.budget = 30;
  opts.max_depth = 10;
  opts.prune_slack = 0.0;
  const JsrReport r = jsr_bounds(modes, opts);
  EXPECT_LE(r.products, 30u);
  EXPECT_LT(r.depth, 10u);
  EXPECT_THROW(jsr_bounds(std::vector<Matrix>{}), std::invalid_argument);
  EXPECT_THROW(jsr_bounds(std::vector<Matrix>{Matrix::Identity(2, 2), Matrix::Identity(3, 3)}), std::invalid_argument);
  EXPECT_THROW(product_norm_profile(modes, 12, 100), BudgetError);
}

TEST(ConvexHull, MixtureInsideAddsNothing) {
  std::mt19937_64 g(8);
  const Mdp mdp = qtest::random_mdp(2, 2, 0.9, g);
  const Vector d = qtest::random_distribution(4, g);
  const SwitchingFamily fam = build_family(mdp, d, 0.5);
  std::vector<Matrix> mixes;
  for (int t = 0; t < 3; ++t) mixes.push_back(direct_mode(mdp, d, 0.5, qtest::random_policy(fam.dims, g)));
  EXPECT_LE(convex_hull_jsr_check(fam.modes, mixes, 3), 1e-12);
}

TEST(ConvexHull, MixtureOutsideIsDetected) {
  const std::vector<Matrix> modes{0.5 * Matrix::Identity(2, 2)};
  const std::vector<Matrix> outside{(Matrix(2, 2) << 0.9, 0.0, 0.0, 0.1).finished()};
  EXPECT_GT(convex_hull_jsr_check(modes, outside, 2), 0.3);
}

TEST(JsrJson, Fields) {
  const SwitchingFamily fam = build_family(example_mdp(), example_distribution(), kExampleAlpha);
  const nlohmann::json j = to_json(jsr_bounds(fam));
  for (const char* k : {"lower", "upper", "depth", "norm_used", "witness_word", "rho_row"}) EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_TRUE(to_json(jsr_bounds(std::vector<Matrix>{Matrix::Identity(1, 1)}))["rho_row"].is_null());
}
