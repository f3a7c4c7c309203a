#include "mpg/diagnostics.hpp"

#include <gtest/gtest.h>

#include "testutil.hpp"

namespace mpg {
namespace {

using test::random_mat;

Mat pendulum_states(Eigen::Index n, std::mt19937_64& rng) {
  return random_mat(n, 4, rng, -0.3, 0.3);
}

Mat vehicle_states(Eigen::Index n, std::mt19937_64& rng) {
  Mat obs(n, 6);
  for (Eigen::Index i = 0; i < n; ++i) {
    obs(i, 0) = uniform(rng, -2, 2);
    obs(i, 1) = uniform(rng, -0.3, 0.3);
    obs(i, 2) = uniform(rng, -0.2, 0.2);
    obs(i, 3) = uniform(rng, -1.5, 1.5);
    obs(i, 4) = uniform(rng, -0.15, 0.15);
    obs(i, 5) = uniform(rng, 0, 1200);
  }
  return obs;
}

TEST(Theorem1, SingleStepIsExact) {
  std::mt19937_64 rng(1);
  PendulumParams pp;
  PendulumOracleModel oracle(pp);
  Eigen::RowVectorXd bounds(1);
  bounds << pp.force_bound;
  Mlp policy = Mlp::policy(4, 8, bounds);
  policy.init(rng);
  Mlp critic = Mlp::critic(4, 1, 8);
  critic.init(rng);
  Mat obs = pendulum_states(4, rng);
  Theorem1Result res = theorem1_check(obs, 1, policy, critic, oracle, 0.98);
  EXPECT_LT(res.rel_diff, 1e-14);
}

TEST(Theorem1, ZeroDiscountReducesToOneStepTerm) {
  std::mt19937_64 rng(2);
  PendulumParams pp;
  PendulumOracleModel oracle(pp);
  Eigen::RowVectorXd bounds(1);
  bounds << pp.force_bound;
  Mlp policy = Mlp::policy(4, 8, bounds);
  policy.init(rng);
  Mlp critic = Mlp::critic(4, 1, 8);
  critic.init(rng);
  Mat obs = pendulum_states(4, rng);
  Theorem1Result res = theorem1_check(obs, 5, policy, critic, oracle, 0.0);
  EXPECT_LT(res.rel_diff, 1e-12);
}

TEST(Theorem1, HoldsOnBothTasksForModerateHorizons) {
  std::mt19937_64 rng(3);
  {
    PendulumParams pp;
    PendulumOracleModel oracle(pp);
    Eigen::RowVectorXd bounds(1);
    bounds << pp.force_bound;
    for (int n : {2, 5}) {
      Mlp policy = Mlp::policy(4, 8, bounds);
      policy.init(rng);
      Mlp critic = Mlp::critic(4, 1, 8);
      critic.init(rng);
      Mat obs = pendulum_states(3, rng);
      Theorem1Result res = theorem1_check(obs, n, policy, critic, oracle, 0.98);
      EXPECT_LT(res.rel_diff, 1e-8) << "pendulum n=" << n;
    }
  }
  {
    VehicleParams vp;
    VehicleOracleModel oracle(vp);
    Eigen::RowVectorXd bounds(2);
    bounds << vp.delta_bound, vp.acc_bound;
    for (int n : {2, 5}) {
      Mlp policy = Mlp::policy(6, 8, bounds);
      policy.init(rng);
      Mlp critic = Mlp::critic(6, 2, 8);
      critic.init(rng);
      Mat obs = vehicle_states(3, rng);
      Theorem1Result res = theorem1_check(obs, n, policy, critic, oracle, 0.98);
      EXPECT_LT(res.rel_diff, 1e-8) << "vehicle n=" << n;
    }
  }
}

TEST(BiasDiagnostic, NoErrorRegimeIsFlatZero) {
  BiasDiagnosticConfig cfg;
  cfg.horizons = {0, 1, 2, 5};
  cfg.seeds = 2;
  cfg.batch = 4;
  cfg.hidden = 16;
  BiasCurve curve =
      pg_bias_diagnostic(BiasRegime::kNone, "path_tracking", cfg, 7);
  for (double b : curve.mean_bias) EXPECT_LT(b, 1e-6);
}

TEST(BiasDiagnostic, CriticErrorShrinksAndModelErrorGrowsWithHorizon) {
  BiasDiagnosticConfig cfg;
  cfg.horizons = {0, 1, 2, 5, 10};
  cfg.seeds = 5;
  cfg.batch = 4;
  cfg.hidden = 16;
  std::vector<double> h(cfg.horizons.begin(), cfg.horizons.end());

  BiasCurve critic_err =
      pg_bias_diagnostic(BiasRegime::kCriticError, "path_tracking", cfg, 11);
  EXPECT_LT(spearman(h, critic_err.mean_bias), 0.0);

  BiasCurve model_err =
      pg_bias_diagnostic(BiasRegime::kModelError, "path_tracking", cfg, 11);
  EXPECT_GT(spearman(h, model_err.mean_bias), 0.0);
  // horizon zero has no model influence at all
  EXPECT_LT(model_err.mean_bias[0], 1e-9);
}

TEST(Spearman, RanksAndTies) {
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3}, {10, 20, 30}), 1.0);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3}, {30, 20, 10}), -1.0);
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {1, 1, 2, 2}), 0.894427, 1e-5);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3}, {5, 5, 5}), 0.0);
}

}  // namespace
}  // namespace mpg
