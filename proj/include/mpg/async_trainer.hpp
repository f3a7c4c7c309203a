#pragma once

#include <atomic>
#include <deque>
#include <thread>

#include "mpg/queue.hpp"
#include "mpg/trainer.hpp"

namespace mpg {

struct Topology {
  int actors = 2;
  int buffers = 2;
  int learners = 12;
  size_t grad_queue_capacity = 4;
  size_t exp_queue_capacity = 8;
  // Test mode: strict actor -> buffer -> learner -> optimizer turn taking,
  // reproducing the serial trainer's trajectory through the worker and queue
  // machinery. Requires a 1/1/1 topology.
  bool rendezvous = false;
};

namespace detail_async {

enum Stage : int { kActorTurn = 0, kBufferTurn, kLearnerTurn, kOptimizerTurn };

// Turn token for rendezvous mode; a no-op when inactive.
class Sequencer {
 public:
  explicit Sequencer(bool active) : active_(active) {}

  bool active() const { return active_; }

  // Returns false if aborted while waiting.
  bool wait(int stage) {
    if (!active_) return true;
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return stage_ == stage || aborted_; });
    return !aborted_;
  }

  void grant(int stage) {
    if (!active_) return;
    std::unique_lock lock(mu_);
    stage_ = stage;
    cv_.notify_all();
  }

  void abort() {
    if (!active_) return;
    std::unique_lock lock(mu_);
    aborted_ = true;
    cv_.notify_all();
  }

 private:
  bool active_;
  std::mutex mu_;
  std::condition_variable cv_;
  int stage_ = kActorTurn;
  bool aborted_ = false;
};

// Admits gradient pushes in snapshot order. Tickets are taken when a learner
// copies the parameters; forcing queue entry into ticket order makes the
// staleness bound (queue capacity + learner count) hold regardless of how
// the scheduler interleaves slow and fast learners.
class OrderedGate {
 public:
  long take() { return next_.fetch_add(1); }

  template <class PushFn>
  bool push_in_order(long ticket, PushFn push) {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return ticket == admit_ || closed_; });
    if (closed_) return false;
    bool ok = push();
    ++admit_;
    cv_.notify_all();
    return ok;
  }

  void close() {
    std::unique_lock lock(mu_);
    closed_ = true;
    cv_.notify_all();
  }

 private:
  std::atomic<long> next_{0};
  std::mutex mu_;
  std::condition_variable cv_;
  long admit_ = 0;
  bool closed_ = false;
};

// Canonical parameters plus run statistics, owned by the optimizer thread;
// everyone else reads snapshots.
struct Hub {
  mutable std::mutex mu;
  std::condition_variable version_cv;
  NetSet nets;
  long version = 0;
  bool training_done = false;

  double last_value_loss = 0, last_policy_loss = 0;
  double w0 = 0, wH = 0, lambda = 1;
  double staleness_acc = 0, update_ms_acc = 0, grad_ms_acc = 0;
  long acc_count = 0;

  NetSet snapshot(long* ver) const {
    std::unique_lock lock(mu);
    if (ver) *ver = version;
    return nets;
  }

  // Snapshot plus queue-admission ticket, taken under one lock so ticket
  // order equals snapshot order.
  NetSet snapshot_ticketed(OrderedGate& gate, long* ver, long* ticket) const {
    std::unique_lock lock(mu);
    *ver = version;
    *ticket = gate.take();
    return nets;
  }

  Mlp policy_snapshot() const {
    std::unique_lock lock(mu);
    return nets.pi;
  }
};

struct WorkerError {
  std::mutex mu;
  bool failed = false;
  std::string stage, what;

  void set(const std::string& s, const std::string& w) {
    std::unique_lock lock(mu);
    if (failed) return;
    failed = true;
    stage = s;
    what = w;
  }
};

}  // namespace detail_async

/// Asynchronous training: actors generate experience into randomly chosen
/// buffers, buffers feed sampled batches to a bounded experience queue,
/// learners turn batches into gradient messages against fresh parameter
/// snapshots, and the optimizer applies messages in arrival order. Bounding
/// the gradient queue bounds the staleness of every applied gradient.
inline TrainResult async_train(const TrainSetup& setup, const Topology& topo,
                               const EvalSink& on_eval = {}) {
  using namespace detail_async;
  if (topo.actors < 1 || topo.buffers < 1 || topo.learners < 1)
    throw TrainError("async_train: topology counts must be >= 1");
  if (topo.rendezvous &&
      (topo.actors != 1 || topo.buffers != 1 || topo.learners != 1))
    throw TrainError("async_train: rendezvous mode requires topology 1/1/1");

  Sequencer seq(topo.rendezvous);
  Hub hub;
  WorkerError err;
  std::atomic<bool> stop{false};

  std::mt19937_64 init_rng = derive_stream(setup.seed, StreamKind::kInit);
  OptimizerState opt(setup, NetSet::init(setup, init_rng));
  hub.nets = opt.nets();

  std::vector<std::unique_ptr<BoundedQueue<std::vector<Transition>>>> ingest;
  for (int i = 0; i < topo.buffers; ++i)
    ingest.push_back(
        std::make_unique<BoundedQueue<std::vector<Transition>>>(64));
  BoundedQueue<Batch> exp_q(topo.exp_queue_capacity);
  BoundedQueue<GradientMessage> grad_q(topo.grad_queue_capacity);
  OrderedGate gate;

  auto shutdown = [&] {
    stop.store(true);
    seq.abort();
    for (auto& q : ingest) q->close();
    exp_q.close();
    grad_q.close();
    gate.close();
    std::unique_lock lock(hub.mu);
    hub.training_done = true;
    hub.version_cv.notify_all();
  };

  auto guard = [&](const char* stage, auto body) {
    return [&, stage, body] {
      try {
        body();
      } catch (const std::exception& e) {
        err.set(stage, e.what());
        shutdown();
      }
    };
  };

  std::vector<std::thread> threads;

  // actors
  for (int a = 0; a < topo.actors; ++a) {
    threads.emplace_back(guard("actor", [&, a] {
      Collector collector(setup, static_cast<std::uint64_t>(a));
      std::mt19937_64 route = derive_stream(
          setup.seed, StreamKind::kActor, 1000 + static_cast<std::uint64_t>(a));
      std::deque<std::vector<Transition>> stash;
      while (!stop.load()) {
        if (!seq.wait(kActorTurn)) break;
        if (stop.load()) break;
        Mlp pi = hub.policy_snapshot();
        stash.push_back(collector.step(pi));
        // wait-free handoff: try a random buffer, then the rest; keep the
        // batch locally when everyone is busy
        while (!stash.empty() && !stop.load()) {
          size_t base = route() % static_cast<size_t>(topo.buffers);
          bool placed = false;
          for (int off = 0; off < topo.buffers && !placed; ++off) {
            placed = ingest[(base + static_cast<size_t>(off)) %
                            static_cast<size_t>(topo.buffers)]
                         ->try_push(stash.front());
          }
          if (!placed) break;
          stash.pop_front();
        }
        seq.grant(kBufferTurn);
      }
    }));
  }

  // buffers
  for (int bi = 0; bi < topo.buffers; ++bi) {
    threads.emplace_back(guard("buffer", [&, bi] {
      ReplayBuffer replay(setup.replay_capacity);
      std::mt19937_64 rng = derive_stream(setup.seed, StreamKind::kBuffer,
                                          static_cast<std::uint64_t>(bi));
      const size_t want = static_cast<size_t>(setup.batch_size);
      bool prefilled = false;
      long turn = 0;
      while (!stop.load()) {
        if (topo.rendezvous) {
          if (!seq.wait(kBufferTurn)) break;
          if (stop.load()) break;
          while (auto chunk = ingest[static_cast<size_t>(bi)]->try_pop())
            for (Transition& t : *chunk) replay.push(std::move(t));
          if (!prefilled) {
            // mirror the serial prefill: readiness is decided before the
            // iteration-0 collection lands
            if (replay.ready(want)) prefilled = true;
            seq.grant(kActorTurn);
            continue;
          }
          if (turn % setup.spec.batch_reuse == 0) {
            auto batch = replay.sample(want, rng);
            if (!exp_q.push(std::move(*batch))) break;
          }
          ++turn;
          seq.grant(kLearnerTurn);
          continue;
        }
        while (auto chunk = ingest[static_cast<size_t>(bi)]->try_pop())
          for (Transition& t : *chunk) replay.push(std::move(t));
        if (!replay.ready(want)) {
          auto chunk = ingest[static_cast<size_t>(bi)]->pop();
          if (!chunk) break;
          for (Transition& t : *chunk) replay.push(std::move(t));
          continue;
        }
        auto batch = replay.sample(want, rng);
        if (!exp_q.push(std::move(*batch))) break;
      }
    }));
  }

  // learners
  for (int l = 0; l < topo.learners; ++l) {
    threads.emplace_back(guard("learner", [&, l] {
      LearnerCore core(setup, l);
      long msg_count = 0;
      std::optional<Batch> batch;
      Eigen::VectorXd targets;
      while (!stop.load()) {
        if (topo.rendezvous) {
          if (!seq.wait(kLearnerTurn)) break;
          if (stop.load()) break;
          long ver = 0, ticket = 0;
          NetSet snap = hub.snapshot_ticketed(gate, &ver, &ticket);
          if (msg_count % setup.spec.batch_reuse == 0) {
            batch = exp_q.pop();
            if (!batch) break;
            targets = core.targets(snap, *batch);
          }
          bool with_policy =
              ((msg_count + 1) % setup.spec.delayed_update == 0);
          GradientMessage msg =
              core.compute(snap, *batch, targets, ver, with_policy);
          msg.compute_version = ver;
          check_losses(setup, snap, ver, msg);
          ++msg_count;
          if (!gate.push_in_order(ticket,
                                  [&] { return grad_q.push(std::move(msg)); }))
            break;
          seq.grant(kOptimizerTurn);
          continue;
        }
        batch = exp_q.pop();
        if (!batch) break;
        long ver = 0, ticket = 0;
        NetSet snap = hub.snapshot_ticketed(gate, &ver, &ticket);
        targets = core.targets(snap, *batch);
        bool keep_going = true;
        for (int j = 0; j < setup.spec.batch_reuse && keep_going && !stop.load();
             ++j) {
          if (j > 0) snap = hub.snapshot_ticketed(gate, &ver, &ticket);
          bool with_policy =
              ((msg_count + 1) % setup.spec.delayed_update == 0);
          GradientMessage msg =
              core.compute(snap, *batch, targets, ver, with_policy);
          msg.compute_version = ver;
          check_losses(setup, snap, ver, msg);
          ++msg_count;
          keep_going = gate.push_in_order(
              ticket, [&] { return grad_q.push(std::move(msg)); });
        }
        if (!keep_going) break;
      }
    }));
  }

  // evaluator (free-running mode; rendezvous evaluates inline below)
  MetricLog log;
  std::mutex log_mu;
  std::vector<long> staleness;
  if (!topo.rendezvous) {
    threads.emplace_back(guard("evaluator", [&] {
      std::uint64_t eval_index = 0;
      long next_eval = setup.eval_interval;
      while (true) {
        {
          std::unique_lock lock(hub.mu);
          hub.version_cv.wait(lock, [&] {
            return hub.version >= next_eval || hub.training_done || stop.load();
          });
          if (hub.version < next_eval) break;  // done and drained
        }
        if (next_eval > setup.budget) break;
        Mlp pi = hub.policy_snapshot();
        EvalResult ev = evaluate(setup, pi, eval_index++);
        MetricRow row;
        {
          std::unique_lock lock(hub.mu);
          row.iteration = next_eval;
          row.eval_return_mean = ev.mean;
          row.eval_return_ci = ev.ci;
          row.value_loss = hub.last_value_loss;
          row.policy_loss = hub.last_policy_loss;
          row.w0 = hub.w0;
          row.wH = hub.wH;
          row.lambda = hub.lambda;
          if (hub.acc_count > 0) {
            row.grad_staleness_mean = hub.staleness_acc / hub.acc_count;
            row.update_time_ms = hub.update_ms_acc / hub.acc_count;
            row.grad_compute_time_ms = hub.grad_ms_acc / hub.acc_count;
          }
          hub.staleness_acc = hub.update_ms_acc = hub.grad_ms_acc = 0;
          hub.acc_count = 0;
        }
        {
          std::unique_lock lock(log_mu);
          log.rows.push_back(row);
          if (on_eval) on_eval(row.iteration, hub.snapshot(nullptr), row);
        }
        next_eval += setup.eval_interval;
      }
    }));
  }

  // optimizer update loop on this thread
  auto start = std::chrono::steady_clock::now();
  std::uint64_t rendezvous_eval_index = 0;
  try {
    if (topo.rendezvous) seq.grant(kActorTurn);
    while (opt.iteration() < setup.budget && !stop.load()) {
      if (topo.rendezvous && !seq.wait(kOptimizerTurn)) break;
      auto t0 = std::chrono::steady_clock::now();
      std::optional<GradientMessage> msg = grad_q.pop();
      if (!msg) break;
      ApplyInfo info = opt.apply(*msg);
      double update_ms =
          setup.deterministic_timing
              ? 0.0
              : std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
      staleness.push_back(info.staleness);
      {
        std::unique_lock lock(hub.mu);
        hub.nets = opt.nets();
        hub.version = opt.iteration();
        hub.last_value_loss = msg->value_loss;
        if (msg->has_policy()) {
          hub.last_policy_loss = msg->policy_loss;
          hub.w0 = msg->w0;
          hub.wH = msg->wH;
          hub.lambda = msg->lambda;
        }
        hub.staleness_acc += static_cast<double>(info.staleness);
        hub.update_ms_acc += update_ms;
        hub.grad_ms_acc += msg->grad_compute_ms;
        hub.acc_count += 1;
        hub.version_cv.notify_all();
      }
      if (topo.rendezvous) {
        long k = opt.iteration();
        if (k % setup.eval_interval == 0) {
          EvalResult ev = evaluate(setup, opt.nets().pi, rendezvous_eval_index++);
          MetricRow row;
          row.iteration = k;
          row.wall_clock_s =
              setup.deterministic_timing
                  ? 0.0
                  : std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - start)
                        .count();
          row.eval_return_mean = ev.mean;
          row.eval_return_ci = ev.ci;
          std::unique_lock lock(hub.mu);
          row.value_loss = hub.last_value_loss;
          row.policy_loss = hub.last_policy_loss;
          row.w0 = hub.w0;
          row.wH = hub.wH;
          row.lambda = hub.lambda;
          row.grad_staleness_mean = hub.acc_count
                                        ? hub.staleness_acc / hub.acc_count
                                        : 0.0;
          row.update_time_ms =
              hub.acc_count ? hub.update_ms_acc / hub.acc_count : 0.0;
          row.grad_compute_time_ms =
              hub.acc_count ? hub.grad_ms_acc / hub.acc_count : 0.0;
          hub.staleness_acc = hub.update_ms_acc = hub.grad_ms_acc = 0;
          hub.acc_count = 0;
          log.rows.push_back(row);
          if (on_eval) on_eval(k, opt.nets(), row);
        }
        if (opt.iteration() < setup.budget) seq.grant(kActorTurn);
      }
    }
  } catch (const std::exception& e) {
    err.set("optimizer", e.what());
  }
  shutdown();
  for (auto& t : threads) t.join();
  {
    std::unique_lock lock(err.mu);
    if (err.failed)
      throw TrainError("async_train: " + err.stage + " failed: " + err.what);
  }

  TrainResult result;
  result.log = std::move(log);
  result.nets = opt.nets();
  result.applied_updates = opt.iteration();
  result.staleness = std::move(staleness);
  return result;
}

}  // namespace mpg
