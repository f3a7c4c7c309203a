#include "mpg/schedule.hpp"

#include <gtest/gtest.h>

#include <random>

namespace mpg {
namespace {

TEST(Lambda, RampEndpointsAndMidpoint) {
  EXPECT_DOUBLE_EQ(lambda_value(0, 0.1, 9000), 0.9);
  EXPECT_DOUBLE_EQ(lambda_value(9000, 0.1, 9000), 1.1);
  EXPECT_DOUBLE_EQ(lambda_value(20000, 0.1, 9000), 1.1);
  EXPECT_DOUBLE_EQ(lambda_value(4500, 0.1, 9000), 1.0);
  EXPECT_THROW(lambda_value(-1, 0.1, 9000), ScheduleError);
}

TEST(RuleWeights, UniformAtLambdaOne) {
  auto w = rule_weights(1.0, {0, 25});
  EXPECT_DOUBLE_EQ(w[0], 0.5);
  EXPECT_DOUBLE_EQ(w[1], 0.5);
  auto w4 = rule_weights(1.0, {0, 5, 10, 25});
  for (double v : w4) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(RuleWeights, ExtremesDominate) {
  auto low = rule_weights(0.9, {0, 25});
  EXPECT_GT(low[1], 0.999);  // model side dominates early
  auto high = rule_weights(1.1, {0, 25});
  EXPECT_GT(high[0], 0.999);  // data side dominates late
  // direct evaluation: 1/err = {1, 1/0.9^25}
  double inv = 1.0 / std::pow(0.9, 25);
  double expect_wh = 1.0 / (1.0 + std::exp(1.0 - inv));
  EXPECT_NEAR(low[1], expect_wh, 1e-12);
}

TEST(RuleWeights, SimplexOverLambdaSweep) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> lam(0.9, 1.1);
  std::vector<std::vector<int>> horizon_sets = {
      {0, 25}, {0, 1}, {0, 5, 25}, {0, 2, 5, 10}, {0, 1, 2, 5, 25}};
  for (int i = 0; i < 2000; ++i) {
    const auto& hs = horizon_sets[static_cast<size_t>(i) % horizon_sets.size()];
    auto w = rule_weights(lam(rng), hs);
    double total = 0.0;
    for (double v : w) {
      EXPECT_GE(v, 0.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(RuleWeights, SymmetryAroundOne) {
  for (double x : {0.0, 0.02, 0.05, 0.1}) {
    auto lo = rule_weights(1.0 - x, {0, 25});
    auto hi = rule_weights(1.0 + x, {0, 25});
    EXPECT_NEAR(lo[0], hi[1], 1e-12);
    EXPECT_NEAR(lo[1], hi[0], 1e-12);
  }
}

TEST(RuleWeights, Validation) {
  EXPECT_THROW(rule_weights(1.0, {}), ScheduleError);
  EXPECT_THROW(rule_weights(1.0, {1, 5}), ScheduleError);  // must include 0
  EXPECT_THROW(rule_weights(2.5, {0, 5}), ScheduleError);
}

TEST(WeightSchedule, TracksLambdaRamp) {
  WeightSchedule ws{0.1, 9000, 25};
  auto [w0_early, wh_early] = ws.at(0);
  EXPECT_GT(wh_early, 0.999);
  auto [w0_mid, wh_mid] = ws.at(4500);
  EXPECT_DOUBLE_EQ(w0_mid, 0.5);
  EXPECT_DOUBLE_EQ(wh_mid, 0.5);
  auto [w0_late, wh_late] = ws.at(9000);
  EXPECT_GT(w0_late, 0.999);
  (void)w0_early;
  (void)wh_late;
}

}  // namespace
}  // namespace mpg
