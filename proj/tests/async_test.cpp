#include "mpg/async_trainer.hpp"

#include <gtest/gtest.h>

#include <set>

namespace mpg {
namespace {

TrainSetup small_setup(const std::string& task, Algorithm variant,
                       long budget) {
  TrainSetup s;
  s.task = task;
  s.spec = make_spec(variant);
  s.spec.n = 4;
  s.spec.horizon = 4;
  s.spec.batch_reuse = 3;
  s.spec.weight_ramp = 100;
  s.hidden = 16;
  s.budget = budget;
  s.eval_interval = 10;
  s.eval_episodes = 2;
  s.eval_horizon = 20;
  s.batch_size = 16;
  s.replay_capacity = 4096;
  s.n_agent = 8;
  s.policy_lr = {3e-4, 3e-6, budget};
  s.value_lr = {8e-4, 8e-6, budget};
  s.seed = 7;
  s.deterministic_timing = true;
  return s;
}

TEST(AsyncTrain, RendezvousReproducesSerialBitwise) {
  for (const char* task : {"inverted_pendulum", "path_tracking"}) {
    for (Algorithm v : {Algorithm::kMpgV1, Algorithm::kMpgV2}) {
      TrainSetup s = small_setup(task, v, 30);
      TrainResult serial = serial_train(s);
      Topology topo;
      topo.actors = topo.buffers = topo.learners = 1;
      topo.rendezvous = true;
      TrainResult async = async_train(s, topo);
      EXPECT_EQ(serial.log.to_csv(), async.log.to_csv())
          << task << " " << algorithm_name(v);
      EXPECT_EQ(async.applied_updates, 30);
      for (size_t i = 0; i < serial.nets.pi.layers().size(); ++i) {
        EXPECT_EQ(0.0, (serial.nets.pi.layers()[i] - async.nets.pi.layers()[i])
                           .cwiseAbs()
                           .maxCoeff());
      }
    }
  }
}

TEST(AsyncTrain, RendezvousRequiresUnitTopology) {
  TrainSetup s = small_setup("inverted_pendulum", Algorithm::kMpgV2, 4);
  Topology topo;
  topo.rendezvous = true;
  topo.learners = 2;
  topo.actors = topo.buffers = 1;
  EXPECT_THROW(async_train(s, topo), TrainError);
}

TEST(AsyncTrain, AppliedCountMatchesBudgetAndStalenessIsBounded) {
  TrainSetup s = small_setup("inverted_pendulum", Algorithm::kMpgV2, 400);
  s.eval_interval = 100;
  Topology topo;
  topo.actors = 2;
  topo.buffers = 2;
  topo.learners = 4;
  topo.grad_queue_capacity = 4;
  TrainResult r = async_train(s, topo);
  EXPECT_EQ(r.applied_updates, 400);
  EXPECT_EQ(r.staleness.size(), 400u);
  long cap = static_cast<long>(topo.grad_queue_capacity) + topo.learners;
  for (long st : r.staleness) {
    EXPECT_GE(st, 0);
    EXPECT_LE(st, cap);
  }
  // eval rows land on the nominal grid
  ASSERT_EQ(r.log.rows.size(), 4u);
  for (size_t i = 0; i < 4; ++i)
    EXPECT_EQ(r.log.rows[i].iteration, static_cast<long>(100 * (i + 1)));
}

TEST(AsyncTrain, MultipleLearnersActuallyContribute) {
  TrainSetup s = small_setup("inverted_pendulum", Algorithm::kTd3, 300);
  s.eval_interval = 300;
  Topology topo;
  topo.actors = 1;
  topo.buffers = 1;
  topo.learners = 3;
  TrainResult r = async_train(s, topo);
  EXPECT_EQ(r.applied_updates, 300);
  // staleness > 0 appears once several learners race the optimizer
  long positive = 0;
  for (long st : r.staleness) positive += (st > 0) ? 1 : 0;
  EXPECT_GT(positive, 0);
}

TEST(AsyncTrain, WorkerFailureReportsStageAndShutsDown) {
  TrainSetup s = small_setup("inverted_pendulum", Algorithm::kMpgV1, 50);
  // a NaN learning rate poisons the parameters on the first policy update;
  // the next learner pass sees a non-finite loss and fails
  s.policy_lr = {std::numeric_limits<double>::quiet_NaN(),
                 std::numeric_limits<double>::quiet_NaN(), 100};
  Topology topo;
  topo.actors = 1;
  topo.buffers = 1;
  topo.learners = 1;
  try {
    async_train(s, topo);
    FAIL() << "expected TrainError";
  } catch (const TrainError& e) {
    std::string what = e.what();
    EXPECT_NE(what.find("failed"), std::string::npos);
    EXPECT_NE(what.find("learner"), std::string::npos);
  }
}

TEST(AsyncTrain, ThroughputImprovesWithLearners) {
  // smoke-scale check that more learners raise the apply rate; the full
  // criterion runs in the acceptance suite
  TrainSetup s = small_setup("inverted_pendulum", Algorithm::kMpgV2, 120);
  s.deterministic_timing = false;
  s.eval_interval = 120;
  s.spec.horizon = 12;
  Topology one;
  one.actors = 1;
  one.buffers = 1;
  one.learners = 1;
  auto t0 = std::chrono::steady_clock::now();
  async_train(s, one);
  double dt1 = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  Topology two = one;
  two.learners = 2;
  t0 = std::chrono::steady_clock::now();
  async_train(s, two);
  double dt2 = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(dt2, dt1 * 1.1);  // at worst comparable, normally faster
}

}  // namespace
}  // namespace mpg
