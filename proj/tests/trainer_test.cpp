#include "mpg/trainer.hpp"

#include <gtest/gtest.h>

#include <filesystem>

namespace mpg {
namespace {

TrainSetup small_setup(const std::string& task, Algorithm variant,
                       long budget = 24) {
  TrainSetup s;
  s.task = task;
  s.spec = make_spec(variant);
  s.spec.n = 4;
  s.spec.horizon = 4;
  s.spec.batch_reuse = 3;
  s.spec.weight_ramp = 100;
  s.hidden = 16;
  s.budget = budget;
  s.eval_interval = 8;
  s.eval_episodes = 2;
  s.eval_horizon = 20;
  s.batch_size = 16;
  s.replay_capacity = 4096;
  s.n_agent = 8;
  s.policy_lr = {3e-4, 3e-6, budget};
  s.value_lr = {8e-4, 8e-6, budget};
  s.seed = 99;
  s.deterministic_timing = true;
  return s;
}

TEST(SerialTrain, ZeroBudgetReturnsInitialParameters) {
  TrainSetup s = small_setup("inverted_pendulum", Algorithm::kMpgV2, 0);
  std::mt19937_64 rng = derive_stream(s.seed, StreamKind::kInit);
  NetSet fresh = NetSet::init(s, rng);
  TrainResult r = serial_train(s);
  EXPECT_EQ(r.applied_updates, 0);
  EXPECT_TRUE(r.log.rows.empty());
  for (size_t i = 0; i < fresh.pi.layers().size(); ++i)
    EXPECT_EQ(0.0, (r.nets.pi.layers()[i] - fresh.pi.layers()[i])
                       .cwiseAbs()
                       .maxCoeff());
}

TEST(SerialTrain, ZeroLearningRatesFreezeParametersButFillBuffer) {
  TrainSetup s = small_setup("inverted_pendulum", Algorithm::kMpgV2, 10);
  s.policy_lr = {0, 0, 10};
  s.value_lr = {0, 0, 10};
  std::mt19937_64 rng = derive_stream(s.seed, StreamKind::kInit);
  NetSet fresh = NetSet::init(s, rng);
  TrainResult r = serial_train(s);
  EXPECT_EQ(r.applied_updates, 10);
  for (size_t i = 0; i < fresh.pi.layers().size(); ++i) {
    EXPECT_EQ(0.0, (r.nets.pi.layers()[i] - fresh.pi.layers()[i])
                       .cwiseAbs()
                       .maxCoeff());
    EXPECT_EQ(0.0, (r.nets.q1.layers()[i] - fresh.q1.layers()[i])
                       .cwiseAbs()
                       .maxCoeff());
  }
}

TEST(SerialTrain, IdenticalSeedsGiveIdenticalMetricLogs) {
  for (const char* task : {"inverted_pendulum", "path_tracking"}) {
    TrainSetup s = small_setup(
        task, task[0] == 'i' ? Algorithm::kMpgV2 : Algorithm::kMpgV1);
    TrainResult a = serial_train(s);
    TrainResult b = serial_train(s);
    EXPECT_EQ(a.log.to_csv(), b.log.to_csv()) << task;
    EXPECT_FALSE(a.log.rows.empty());
  }
}

TEST(SerialTrain, EveryVariantRuns) {
  for (Algorithm v : {Algorithm::kMpgV1, Algorithm::kMpgV2,
                      Algorithm::kNStepDpg, Algorithm::kNStepAdp,
                      Algorithm::kTd3}) {
    TrainSetup s = small_setup("path_tracking", v, 12);
    TrainResult r = serial_train(s);
    EXPECT_EQ(r.applied_updates, 12) << algorithm_name(v);
    EXPECT_EQ(r.log.rows.size(), 1u);
    EXPECT_TRUE(std::isfinite(r.log.rows[0].eval_return_mean));
  }
}

TEST(SerialTrain, MetricRowsLandOnEvalGrid) {
  TrainSetup s = small_setup("inverted_pendulum", Algorithm::kTd3, 24);
  TrainResult r = serial_train(s);
  ASSERT_EQ(r.log.rows.size(), 3u);
  EXPECT_EQ(r.log.rows[0].iteration, 8);
  EXPECT_EQ(r.log.rows[1].iteration, 16);
  EXPECT_EQ(r.log.rows[2].iteration, 24);
  // mixing weights live on the simplex wherever a policy update happened
  for (const MetricRow& row : r.log.rows) {
    EXPECT_NEAR(row.w0 + row.wH, 1.0, 1e-9);
    EXPECT_EQ(row.grad_staleness_mean, 0.0);
  }
}

TEST(Evaluate, ZeroPolicyDriftReturnMatchesClosedFormRollout) {
  // zero-action policy from a zero-error start: the vehicle coasts straight
  // while the reference curves away; transcribe that drift independently
  TrainSetup s = small_setup("path_tracking", Algorithm::kMpgV1);
  Mlp zero = Mlp::policy(6, 4, s.action_bounds(), s.input_scale());

  TrackingEnv env;
  Eigen::VectorXd start(6);
  start << 0, 0, 0, 0, 0, 0;
  env.reset_to(start);
  double got = run_episode(env, zero, 200);

  VehicleParams p;
  double u = 20.0, y = 0.0, x = 0.0;
  double phi = reference_path(0.0).phi_ref;  // dphi = 0 at the start
  double expect = 0.0;
  for (int step = 0; step < 200; ++step) {
    ReferencePoint ref = reference_path(x);
    TrackingObs o{u - 20.0, 0.0, 0.0, y - ref.y_ref, phi - ref.phi_ref, x};
    if (tracking_terminal(o, p)) break;
    expect += tracking_reward(o, 0.0, 0.0);
    for (int sub = 0; sub < 20; ++sub) {
      y += (1.0 / 200.0) * (u * std::sin(phi));
      x += (1.0 / 200.0) * (u * std::cos(phi));
    }
  }
  EXPECT_NEAR(got, expect, 1e-9);
  EXPECT_LE(got, 0.0);
}

TEST(Evaluate, DeterministicPerIndexAndNonPositive) {
  TrainSetup s = small_setup("inverted_pendulum", Algorithm::kMpgV2);
  std::mt19937_64 rng = derive_stream(1, StreamKind::kInit);
  NetSet nets = NetSet::init(s, rng);
  EvalResult a = evaluate(s, nets.pi, 3);
  EvalResult b = evaluate(s, nets.pi, 3);
  ASSERT_EQ(a.returns.size(), b.returns.size());
  for (size_t i = 0; i < a.returns.size(); ++i) {
    EXPECT_EQ(a.returns[i], b.returns[i]);
    EXPECT_LE(a.returns[i], 0.0);
  }
  EvalResult c = evaluate(s, nets.pi, 4);
  EXPECT_NE(a.mean, c.mean);  // different draw of start states
}

TEST(SerialTrain, NanLossAbortsWithCheckpoint) {
  TrainSetup s = small_setup("inverted_pendulum", Algorithm::kTd3, 6);
  s.abort_dir = std::filesystem::temp_directory_path().string();
  // poison the critic so the very first value loss is non-finite
  std::mt19937_64 rng = derive_stream(s.seed, StreamKind::kInit);
  NetSet nets = NetSet::init(s, rng);
  GradientMessage msg;
  msg.value_loss = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(check_losses(s, nets, 1, msg), TrainError);
  try {
    check_losses(s, nets, 1, msg);
  } catch (const TrainError& e) {
    std::string what = e.what();
    EXPECT_NE(what.find("post-mortem"), std::string::npos);
    std::string path = what.substr(what.find("checkpoint: ") + 12);
    path.pop_back();  // trailing ')'
    Checkpoint ck = load_checkpoint(path);
    EXPECT_EQ(ck.iteration, 1);
    std::remove(path.c_str());
  }
}

TEST(MetricLogT, CsvRoundTripsThroughParsing) {
  MetricLog log;
  MetricRow r;
  r.iteration = 3000;
  r.eval_return_mean = -12.345678901234567;
  r.w0 = 0.25;
  r.wH = 0.75;
  log.rows.push_back(r);
  std::string csv = log.to_csv();
  EXPECT_NE(csv.find("iteration,"), std::string::npos);
  EXPECT_NE(csv.find("3000,"), std::string::npos);
  EXPECT_NE(csv.find("-12.345678901234567"), std::string::npos);
}

}  // namespace
}  // namespace mpg
