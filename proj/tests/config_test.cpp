#include "mpg/config.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

namespace mpg {
namespace {

// Golden check: the default configuration is exactly the published
// hyperparameter set.
TEST(ConfigDefaults, MatchPublishedHyperparameters) {
  RunConfig c;
  EXPECT_EQ(c.hidden_units, 256);
  EXPECT_EQ(c.replay_capacity, 500000);
  EXPECT_EQ(c.batch_size, 256);
  EXPECT_DOUBLE_EQ(c.policy_lr, 3e-4);
  EXPECT_DOUBLE_EQ(c.policy_lr_final, 3e-6);
  EXPECT_DOUBLE_EQ(c.value_lr, 8e-4);
  EXPECT_DOUBLE_EQ(c.value_lr_final, 8e-6);
  EXPECT_DOUBLE_EQ(c.gamma, 0.98);
  EXPECT_DOUBLE_EQ(c.tau, 0.005);
  EXPECT_EQ(c.actors, 2);
  EXPECT_EQ(c.buffers, 2);
  EXPECT_EQ(c.learners, 12);
  EXPECT_DOUBLE_EQ(c.eta, 0.1);
  EXPECT_EQ(c.horizon, 25);
  EXPECT_EQ(c.n_step, 25);
  EXPECT_EQ(c.delayed_update, 2);
  EXPECT_DOUBLE_EQ(c.exploration_std, 0.1);
  EXPECT_DOUBLE_EQ(c.smoothing_std, 0.1);
  EXPECT_DOUBLE_EQ(c.smoothing_clip, 0.5);
  EXPECT_EQ(c.eval_interval, 3000);
  EXPECT_EQ(c.eval_episodes, 5);

  // task-resolved values
  c.task = "path_tracking";
  EXPECT_EQ(c.make_algorithm_spec().weight_ramp, 9000);
  EXPECT_EQ(c.make_setup(0).eval_horizon, 200);
  EXPECT_EQ(c.make_algorithm_spec().batch_reuse, 10);
  c.task = "inverted_pendulum";
  EXPECT_EQ(c.make_algorithm_spec().weight_ramp, 4000);
  EXPECT_EQ(c.make_setup(0).eval_horizon, 100);
  c.algorithm = "td3";
  EXPECT_EQ(c.make_algorithm_spec().batch_reuse, 1);

  // Adam moment defaults
  Adam adam({Mat::Zero(1, 1)}, LinearDecay{1e-3, 1e-3, 1});
  (void)adam;

  // vehicle and pendulum parameter tables
  EXPECT_DOUBLE_EQ(c.vehicle.cf, -88000.0);
  EXPECT_DOUBLE_EQ(c.vehicle.cr, -94000.0);
  EXPECT_DOUBLE_EQ(c.vehicle.a, 1.14);
  EXPECT_DOUBLE_EQ(c.vehicle.b, 1.40);
  EXPECT_DOUBLE_EQ(c.vehicle.mass, 1500.0);
  EXPECT_DOUBLE_EQ(c.vehicle.iz, 2420.0);
  EXPECT_DOUBLE_EQ(c.vehicle.f_sam, 10.0);
  EXPECT_DOUBLE_EQ(c.vehicle.f_sys, 200.0);
  EXPECT_DOUBLE_EQ(c.pendulum.m1, 9.42);
  EXPECT_DOUBLE_EQ(c.pendulum.m2, 4.89);
  EXPECT_DOUBLE_EQ(c.pendulum.l, 0.6);
  EXPECT_DOUBLE_EQ(c.pendulum.g, 9.81);
  EXPECT_DOUBLE_EQ(c.pendulum.f_sam, 25.0);
  EXPECT_DOUBLE_EQ(c.pendulum.f_sys, 50.0);
  EXPECT_EQ(c.budget, 30000);
}

TEST(Config, SerializationRoundTripsLosslessly) {
  RunConfig c;
  c.task = "inverted_pendulum";
  c.algorithm = "td3";
  c.seeds = {5, 17, 99};
  c.gamma = 0.987654321;
  c.policy_lr = 1.23456789e-4;
  c.pendulum.force_bound = 17.5;
  c.vehicle_reset.dy_min = -0.123456789012345;
  c.deterministic_timing = true;

  std::string text = serialize_config(c);
  std::istringstream in(text);
  RunConfig back = parse_config(in);
  EXPECT_EQ(serialize_config(back), text);
  EXPECT_EQ(back.seeds, c.seeds);
  EXPECT_DOUBLE_EQ(back.gamma, c.gamma);
  EXPECT_DOUBLE_EQ(back.pendulum.force_bound, 17.5);
  EXPECT_DOUBLE_EQ(back.vehicle_reset.dy_min, c.vehicle_reset.dy_min);
  EXPECT_TRUE(back.deterministic_timing);
}

TEST(Config, ParserHandlesCommentsAndErrors) {
  std::istringstream good(
      "# a comment\n"
      "[run]\n"
      "task = inverted_pendulum   ; trailing comment\n"
      "\n"
      "[hyper]\n"
      "gamma = 0.9\n");
  RunConfig c = parse_config(good);
  EXPECT_EQ(c.task, "inverted_pendulum");
  EXPECT_DOUBLE_EQ(c.gamma, 0.9);

  std::istringstream unknown("[run]\nbogus = 3\n");
  EXPECT_THROW(parse_config(unknown), ConfigError);

  std::istringstream badvalue("[hyper]\ngamma = fast\n");
  try {
    parse_config(badvalue);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    std::string what = e.what();
    EXPECT_NE(what.find("gamma"), std::string::npos);
    EXPECT_NE(what.find("(0, 1)"), std::string::npos);
  }
}

TEST(Config, ValidationNamesFieldAndRange) {
  RunConfig c;
  c.seeds.clear();
  try {
    validate_config(c);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("seeds"), std::string::npos);
  }
  c = RunConfig{};
  c.gamma = 1.5;
  EXPECT_THROW(validate_config(c), ConfigError);
  c = RunConfig{};
  c.mode = "parallel";
  EXPECT_THROW(validate_config(c), ConfigError);
}

TEST(Config, EnvironmentOverrides) {
  setenv("MPG_RUN_BUDGET", "123", 1);
  setenv("MPG_HYPER_GAMMA", "0.5", 1);
  setenv("MPG_TOPOLOGY_LEARNERS", "3", 1);
  RunConfig c;
  apply_env_overrides(c);
  EXPECT_EQ(c.budget, 123);
  EXPECT_DOUBLE_EQ(c.gamma, 0.5);
  EXPECT_EQ(c.learners, 3);
  unsetenv("MPG_RUN_BUDGET");
  unsetenv("MPG_HYPER_GAMMA");
  unsetenv("MPG_TOPOLOGY_LEARNERS");
}

TEST(MinimumReturn, PaperConstants) {
  EXPECT_DOUBLE_EQ(minimum_return("path_tracking"), -30.0);
  EXPECT_DOUBLE_EQ(minimum_return("inverted_pendulum"), -2.0);
  EXPECT_THROW(minimum_return("cartpole"), ConfigError);
}

}  // namespace
}  // namespace mpg
