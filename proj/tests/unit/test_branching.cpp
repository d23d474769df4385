#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "kesten/branching.hpp"
#include "kesten/errors.hpp"

using namespace kesten;

namespace {

Vector scalar(double x) { return Vector::Constant(1, x); }

Scenario constant_scalar(double c, double b = 1.0) {
  Scenario sc;
  sc.dim = 1;
  sc.mu = MatrixLaw::finite({{PositiveMatrix(Matrix::Constant(1, 1, c)), 1.0}});
  sc.eta = VectorLaw::point(scalar(b));
  return sc;
}

Scenario two_atom_scalar() {
  Scenario sc;
  sc.dim = 1;
  sc.mu = MatrixLaw::finite({{PositiveMatrix(Matrix::Constant(1, 1, 0.1)), 0.7},
                             {PositiveMatrix(Matrix::Constant(1, 1, 0.6)), 0.3}});
  sc.eta = VectorLaw::product({Uniform1D{0.5, 1.5}});
  return sc;
}

}  // namespace

TEST(TreeNodes, CountAndBudget) {
  EXPECT_EQ(tree_node_count(2, 0), 1u);
  EXPECT_EQ(tree_node_count(2, 3), 15u);
  EXPECT_EQ(tree_node_count(3, 2), 13u);
  EXPECT_NO_THROW(check_budget(2, 10, 1u << 12));
  try {
    check_budget(2, 20, 1u << 12);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BudgetExceeded);
  }
}

TEST(SampleW, DepthZeroIsBDraw) {
  const auto sc = two_atom_scalar();
  Stream a(11), b(11);
  const auto w = sample_W(sc, 0, a);
  EXPECT_EQ(w.node_count, 1u);
  EXPECT_EQ(w.w(0), sc.eta.sample(b)(0));
}

TEST(SampleW, ConstantScalarIsGeometric) {
  const auto sc = constant_scalar(0.3);
  Stream rng(1);
  for (int n = 0; n <= 8; ++n) {
    const auto w = sample_W(sc, n, rng);
    EXPECT_NEAR(w.w(0), std::pow(0.6, n), 1e-14 * std::pow(0.6, n));
    EXPECT_EQ(w.node_count, tree_node_count(2, n));
  }
}

TEST(SampleW, FirstMomentMatchesClosedForm) {
  const auto sc = two_atom_scalar();
  const double oracle = 2.0 * (0.7 * 0.1 + 0.3 * 0.6) * 1.0;
  const int n = 100000;
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) {
    Stream rng = Stream::derive(5, {static_cast<std::uint64_t>(i)});
    x[i] = sample_W(sc, 1, rng).w(0);
  }
  const auto ci = mean_ci(x, 0.999);
  EXPECT_LE(ci.lo, oracle);
  EXPECT_GE(ci.hi, oracle);
}

TEST(SampleR, DepthZeroIsBDraw) {
  const auto sc = two_atom_scalar();
  BranchingConfig cfg;
  cfg.depth = 0;
  Stream a(3), b(3);
  EXPECT_EQ(sample_R(sc, cfg, a).r(0), sc.eta.sample(b)(0));
}

TEST(SampleR, GeometricSeries) {
  const double c = 0.2;
  const auto sc = constant_scalar(c);
  BranchingConfig cfg;
  for (int n : {1, 5, 12}) {
    cfg.depth = n;
    Stream rng(2);
    const auto s = sample_R(sc, cfg, rng);
    EXPECT_NEAR(s.r(0), (1 - std::pow(2 * c, n + 1)) / (1 - 2 * c), 1e-13);
    ASSERT_EQ(s.levels.size(), static_cast<std::size_t>(n + 1));
  }
}

TEST(SampleR, LevelsSumToR) {
  const auto sc = two_atom_scalar();
  BranchingConfig cfg;
  cfg.depth = 6;
  Stream rng(4);
  const auto s = sample_R(sc, cfg, rng);
  double total = 0.0;
  for (const auto& l : s.levels) total += l(0);
  EXPECT_NEAR(total, s.r(0), 1e-12 * s.r(0));
}

TEST(SampleR, ConsecutiveDepthsDifferByNextLevel) {
  const auto sc = two_atom_scalar();
  const double mean_a = 0.7 * 0.1 + 0.3 * 0.6;
  BranchingConfig cfg;
  cfg.samples = 60000;
  cfg.depth = 3;
  const auto r3 = sample_R_batch(sc, cfg, 1, 1).r;
  cfg.depth = 4;
  const auto r4 = sample_R_batch(sc, cfg, 2, 1).r;
  // E W_4 = (N E A)^4 E B for independent entries
  const double oracle = std::pow(2 * mean_a, 4);
  const auto m3 = mean_ci(r3.data), m4 = mean_ci(r4.data);
  const double se = std::hypot(m3.se, m4.se);
  EXPECT_NEAR(m4.mean - m3.mean, oracle, 4 * se);
}

TEST(SampleRBatch, ThreadCountInvariant) {
  const auto sc = two_atom_scalar();
  BranchingConfig cfg;
  cfg.samples = 500;
  cfg.depth = 5;
  EXPECT_EQ(sample_R_batch(sc, cfg, 9, 1).r.data, sample_R_batch(sc, cfg, 9, 3).r.data);
}

TEST(SampleRBatch, BudgetExceeded) {
  const auto sc = two_atom_scalar();
  BranchingConfig cfg;
  cfg.samples = 2;
  cfg.depth = 30;
  cfg.node_budget = 1u << 20;
  try {
    sample_R_batch(sc, cfg, 1, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BudgetExceeded);
  }
}

TEST(PlanDepth, DeterministicGeometric) {
  const double c = 0.3, eps = 1e-3;
  const auto sc = constant_scalar(c);
  const auto plan = plan_depth(sc, c, 1.0, eps, 200, 1);
  EXPECT_NEAR(plan.eta_hat, 2 * c, 1e-10);
  const int expected = static_cast<int>(std::ceil(std::log(eps * (1 - 2 * c)) / std::log(2 * c))) - 1;
  EXPECT_EQ(plan.depth, expected);
}

TEST(PlanDepth, HalvingEpsAddsLogRatio) {
  const double eta = 0.5;
  const int d1 = depth_from_fit(1.0, eta, 1.0, 1e-6);
  const int d2 = depth_from_fit(1.0, eta, 1.0, 0.5e-6);
  EXPECT_EQ(d2 - d1, static_cast<int>(std::lround(std::log(2.0) / std::log(1.0 / eta))));
  const int step = depth_from_fit(1.0, 0.8, 1.0, 0.25e-3) - depth_from_fit(1.0, 0.8, 1.0, 1e-3);
  EXPECT_NEAR(step, std::log(4.0) / std::log(1.25), 1.0);
}

TEST(PlanDepth, NoContraction) {
  const auto sc = constant_scalar(0.6);
  try {
    plan_depth(sc, 0.6, 1.0, 1e-3, 100, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoContraction);
  }
}

TEST(MomentDecay, ConstantScalarRate) {
  const double c = 0.35;
  const auto rep = moment_decay_study(constant_scalar(c), 1.0, 6, 50, 1, c);
  for (const auto& l : rep.levels) EXPECT_NEAR(l.mean, std::pow(2 * c, l.n), 1e-12);
  EXPECT_NEAR(rep.fitted_rate, 2 * c, 1e-10);
  EXPECT_NEAR(rep.ratio, 1.0, 1e-10);
}

TEST(MomentDecay, ZeroMomentIsOne) {
  const auto rep = moment_decay_study(two_atom_scalar(), 0.0, 5, 200, 1, 1.0);
  for (const auto& l : rep.levels) EXPECT_DOUBLE_EQ(l.mean, 1.0);
  EXPECT_NEAR(rep.fitted_rate, 1.0, 1e-12);
}

TEST(FixedPoint, DeterministicScalarKsZero) {
  BranchingConfig cfg;
  cfg.depth = 6;
  const auto rep = fixed_point_test(constant_scalar(0.25), cfg, 200, default_directions(1), 1);
  ASSERT_EQ(rep.directions.size(), 1u);
  EXPECT_EQ(rep.directions[0].ks, 0.0);
}

TEST(FixedPoint, NullCheckWithinKsLaw) {
  BranchingConfig cfg;
  cfg.depth = 6;
  const auto rep = fixed_point_test(two_atom_scalar(), cfg, 20000, default_directions(1), 3, 1, true);
  ASSERT_EQ(rep.null_directions.size(), 1u);
  EXPECT_GT(rep.null_directions[0].p_value, 0.001);
  EXPECT_GT(rep.directions[0].p_value, 0.001);
}

TEST(Coupling, ZeroInitialLawIsExact) {
  const auto sc = two_atom_scalar();
  const auto rep = uniqueness_coupling_test(sc, 5, VectorLaw::point(scalar(0.0)), 2000, default_directions(1), 1.0,
                                            0.7 * 0.1 + 0.3 * 0.6, 1);
  EXPECT_LE(rep.path_gap, 1e-13);
  for (const auto& d : rep.directions) EXPECT_GT(d.p_value, 0.001);
  for (const auto& w : rep.w_moments) EXPECT_EQ(w.mean, 0.0);
  EXPECT_EQ(rep.fitted_rate, 0.0);
}

TEST(Coupling, OnesInitialLawDecaysAtSpectralRate) {
  const auto sc = two_atom_scalar();
  const double kappa = 0.7 * 0.1 + 0.3 * 0.6;
  const auto rep =
      uniqueness_coupling_test(sc, 6, VectorLaw::point(scalar(1.0)), 20000, default_directions(1), 1.0, kappa, 2);
  EXPECT_NEAR(rep.fitted_rate / (2 * kappa), 1.0, 0.15);
  EXPECT_LE(rep.path_gap, 1e-13);
}

TEST(Coupling, InitialLawsMerge) {
  const auto sc = two_atom_scalar();
  const auto ks = initial_law_convergence(sc, VectorLaw::point(scalar(0.0)), VectorLaw::point(scalar(5.0)), 10, 4000,
                                          scalar(1.0), 4);
  ASSERT_EQ(ks.size(), 10u);
  EXPECT_LT(ks.back(), ks.front());
  EXPECT_LT(ks.back(), 0.05);
}
