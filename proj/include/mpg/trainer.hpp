#pragma once

#include <chrono>
#include <cstdio>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mpg/algo.hpp"
#include "mpg/checkpoint.hpp"
#include "mpg/diagnostics.hpp"
#include "mpg/optim.hpp"
#include "mpg/replay.hpp"

namespace mpg {

struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Everything a training run needs, value-owned so workers can clone it.
struct TrainSetup {
  std::string task = "path_tracking";
  AlgorithmSpec spec;
  int hidden = 256;
  long budget = 30000;
  long eval_interval = 3000;
  int eval_episodes = 5;
  int eval_horizon = 200;
  int batch_size = 256;
  size_t replay_capacity = 500000;
  int n_agent = 128;
  LinearDecay policy_lr{3e-4, 3e-6, 30000};
  LinearDecay value_lr{8e-4, 8e-6, 30000};
  std::uint64_t seed = 0;
  bool deterministic_timing = false;
  std::string abort_dir;  // non-empty: write a post-mortem checkpoint here
  VehicleParams vehicle;
  VehicleResetRange vehicle_reset;
  PendulumParams pendulum;
  PendulumResetRange pendulum_reset;
  double pendulum_collect_angle = 0.2;
  Eigen::RowVectorXd obs_scale;  // empty: per-task default

  std::unique_ptr<Env> make_env() const {
    return mpg::make_env(task, vehicle, vehicle_reset, pendulum,
                         pendulum_reset, pendulum_collect_angle);
  }
  std::unique_ptr<DiffModel> make_model() const {
    return make_prior_model(task, vehicle, pendulum);
  }
  Eigen::RowVectorXd action_bounds() const {
    if (task == "path_tracking") {
      Eigen::RowVectorXd b(2);
      b << vehicle.delta_bound, vehicle.acc_bound;
      return b;
    }
    Eigen::RowVectorXd b(1);
    b << pendulum.force_bound;
    return b;
  }
  int obs_dim() const { return task == "path_tracking" ? 6 : 4; }
  int act_dim() const { return task == "path_tracking" ? 2 : 1; }
  Eigen::RowVectorXd input_scale() const {
    if (obs_scale.size() != 0) return obs_scale;
    Eigen::RowVectorXd s = Eigen::RowVectorXd::Ones(obs_dim());
    if (task == "path_tracking") s[5] = 1.0 / 1200.0;
    return s;
  }
};

/// Online networks plus their Polyak targets; the twin pair exists only for
/// the clipped-double-Q variants.
struct NetSet {
  Mlp pi, pi_target, q1, q1_target;
  std::optional<Mlp> q2, q2_target;

  static NetSet init(const TrainSetup& setup, std::mt19937_64& rng) {
    NetSet n;
    n.pi = Mlp::policy(setup.obs_dim(), setup.hidden, setup.action_bounds(),
                       setup.input_scale());
    n.pi.init(rng);
    n.pi_target = n.pi;
    n.q1 = Mlp::critic(setup.obs_dim(), setup.act_dim(), setup.hidden,
                       setup.input_scale());
    n.q1.init(rng);
    n.q1_target = n.q1;
    if (setup.spec.twin_critic()) {
      n.q2 = Mlp::critic(setup.obs_dim(), setup.act_dim(), setup.hidden,
                         setup.input_scale());
      n.q2->init(rng);
      n.q2_target = *n.q2;
    }
    return n;
  }
};

/// Flat gradient bundle tagged with the parameter version it was computed
/// from. Policy entries are present only on delayed-update messages.
struct GradientMessage {
  Eigen::VectorXd q1_grad, q2_grad;
  Eigen::VectorXd pi_grad;  // ascent direction; empty if no policy update
  double value_loss = 0;
  double policy_loss = 0;
  double w0 = 0, wH = 0, lambda = 1;
  long compute_version = 0;
  int learner_id = 0;
  double grad_compute_ms = 0;

  bool has_policy() const { return pi_grad.size() != 0; }
};

// ---- experience collection --------------------------------------------------

/// Batched experience generation: one call steps every agent once under the
/// exploration policy and returns the transitions. Exploration noise is
/// Gaussian per action dimension, scaled by the actuator bound, then clamped.
class Collector {
 public:
  Collector(const TrainSetup& setup, std::uint64_t stream_index)
      : env_proto_(setup.make_env()),
        batch_(*env_proto_, setup.n_agent),
        bounds_(setup.action_bounds()),
        noise_std_(setup.spec.exploration_std),
        rng_(derive_stream(setup.seed, StreamKind::kActor, stream_index)) {
    batch_.reset_all(rng_);
  }

  std::vector<Transition> step(const Mlp& policy) {
    Mat obs = batch_.observations();
    Mat actions = policy.forward_plain(obs);
    for (Eigen::Index i = 0; i < actions.rows(); ++i) {
      for (Eigen::Index j = 0; j < actions.cols(); ++j) {
        double eps = normal(rng_, 0.0, noise_std_ * bounds_[j]);
        actions(i, j) = std::clamp(actions(i, j) + eps, -bounds_[j], bounds_[j]);
      }
    }
    BatchedEnv::BatchStep out = batch_.step(actions, rng_);
    std::vector<Transition> transitions;
    transitions.reserve(static_cast<size_t>(obs.rows()));
    for (Eigen::Index i = 0; i < obs.rows(); ++i) {
      Transition t;
      t.s = obs.row(i);
      t.a = actions.row(i);
      t.r = out.rewards[i];
      t.s2 = out.next_obs.row(i);
      t.done = out.done[static_cast<size_t>(i)] != 0;
      transitions.push_back(std::move(t));
    }
    return transitions;
  }

 private:
  std::unique_ptr<Env> env_proto_;
  BatchedEnv batch_;
  Eigen::RowVectorXd bounds_;
  double noise_std_;
  std::mt19937_64 rng_;
};

// ---- learner ----------------------------------------------------------------

/// Per-learner compute: value targets once per batch, then gradients against
/// a parameter snapshot. Owns a private simulator pool for the n-step target
/// rollouts and an independent noise stream.
class LearnerCore {
 public:
  LearnerCore(const TrainSetup& setup, int learner_id)
      : setup_(setup),
        id_(learner_id),
        model_(setup.make_model()),
        rng_(derive_stream(setup.seed, StreamKind::kLearner,
                           static_cast<std::uint64_t>(learner_id))) {
    if (setup_.spec.nstep_targets()) {
      auto env = setup_.make_env();
      rollout_.emplace(*env, setup_.batch_size);
    }
  }

  Eigen::VectorXd targets(const NetSet& nets, const Batch& batch) {
    const AlgorithmSpec& s = setup_.spec;
    switch (s.variant) {
      case Algorithm::kMpgV1:
      case Algorithm::kNStepDpg:
      case Algorithm::kNStepAdp:
        return rollout_->build(batch, s.n, s.gamma, nets.pi, nets.pi_target,
                               nets.q1_target);
      case Algorithm::kMpgV2:
        return clipped_double_q_targets(batch, nets.pi_target, nets.q1_target,
                                        *nets.q2_target, s.gamma);
      case Algorithm::kTd3:
        return td3_targets(batch, nets.pi_target, nets.q1_target,
                           *nets.q2_target, s.gamma, s.smoothing_std,
                           s.smoothing_clip, setup_.action_bounds(), rng_);
    }
    throw TrainError("LearnerCore::targets: unhandled variant");
  }

  GradientMessage compute(const NetSet& nets, const Batch& batch,
                          const Eigen::VectorXd& targets, long iteration,
                          bool with_policy) {
    auto t0 = std::chrono::steady_clock::now();
    GradientMessage msg;
    msg.learner_id = id_;

    ValueGradResult vg = value_gradient(
        batch, targets, nets.q1, nets.q2 ? &*nets.q2 : nullptr);
    msg.q1_grad = flatten(vg.q1_grad);
    if (!vg.q2_grad.empty()) msg.q2_grad = flatten(vg.q2_grad);
    msg.value_loss = vg.loss;

    if (with_policy) {
      const AlgorithmSpec& s = setup_.spec;
      Tape t;
      Mlp::Bound b = nets.pi.bind(t);
      Tensor objective;
      switch (s.variant) {
        case Algorithm::kMpgV1:
        case Algorithm::kMpgV2: {
          WeightSchedule ws = s.weight_schedule();
          msg.lambda = ws.lambda(iteration);
          std::tie(msg.w0, msg.wH) = ws.at(iteration);
          objective = mixed_policy_objective(t, constant(batch.s), nets.pi, b,
                                             nets.q1, *model_, msg.w0, msg.wH,
                                             s.horizon, s.gamma, &rng_);
          break;
        }
        case Algorithm::kNStepDpg:
        case Algorithm::kTd3:
          msg.w0 = 1.0;
          objective = dpg_policy_objective(t, constant(batch.s), nets.pi, b,
                                           nets.q1);
          break;
        case Algorithm::kNStepAdp:
          msg.wH = 1.0;
          objective = adp_policy_objective(t, constant(batch.s), nets.pi, b,
                                           nets.q1, *model_, s.horizon,
                                           s.gamma, &rng_);
          break;
      }
      t.backward(objective);
      msg.pi_grad = flatten(nets.pi.grads(t, b));
      msg.policy_loss = -objective.scalar();
    }

    if (!setup_.deterministic_timing) {
      msg.grad_compute_ms =
          std::chrono::duration<double, std::milli>(
              std::chrono::steady_clock::now() - t0)
              .count();
    }
    return msg;
  }

 private:
  TrainSetup setup_;
  int id_;
  std::unique_ptr<DiffModel> model_;
  std::optional<NStepTargetBuilder> rollout_;
  std::mt19937_64 rng_;
};

// ---- optimizer --------------------------------------------------------------

struct ApplyInfo {
  long iteration = 0;   // 1-based count of applied value gradients
  long staleness = 0;
  bool policy_updated = false;
};

/// Owns the canonical parameters and applies gradient messages in arrival
/// order: Adam on the value critics every message, Adam ascent on the policy
/// plus Polyak target updates on delayed-update messages.
class OptimizerState {
 public:
  OptimizerState(const TrainSetup& setup, NetSet nets)
      : setup_(setup), nets_(std::move(nets)) {
    pi_opt_ = Adam(nets_.pi.layers(), setup.policy_lr);
    q1_opt_ = Adam(nets_.q1.layers(), setup.value_lr);
    if (nets_.q2) q2_opt_ = Adam(nets_.q2->layers(), setup.value_lr);
  }

  const NetSet& nets() const { return nets_; }
  long iteration() const { return iteration_; }

  ApplyInfo apply(const GradientMessage& msg) {
    ApplyInfo info;
    info.staleness = iteration_ - msg.compute_version;
    if (info.staleness < 0)
      throw TrainError("OptimizerState::apply: gradient from the future");

    std::vector<Mat> q1g(nets_.q1.layers().size());
    for (size_t i = 0; i < q1g.size(); ++i)
      q1g[i].resize(nets_.q1.layers()[i].rows(), nets_.q1.layers()[i].cols());
    unflatten(msg.q1_grad, q1g);
    q1_opt_.step(nets_.q1.layers(), q1g, iteration_);
    if (nets_.q2) {
      std::vector<Mat> q2g(nets_.q2->layers().size());
      for (size_t i = 0; i < q2g.size(); ++i)
        q2g[i].resize(nets_.q2->layers()[i].rows(),
                      nets_.q2->layers()[i].cols());
      unflatten(msg.q2_grad, q2g);
      q2_opt_.step(nets_.q2->layers(), q2g, iteration_);
    }

    if (msg.has_policy()) {
      std::vector<Mat> pig(nets_.pi.layers().size());
      for (size_t i = 0; i < pig.size(); ++i)
        pig[i].resize(nets_.pi.layers()[i].rows(),
                      nets_.pi.layers()[i].cols());
      unflatten(Eigen::VectorXd(-msg.pi_grad), pig);  // ascend the objective
      pi_opt_.step(nets_.pi.layers(), pig, iteration_);
      double tau = setup_.spec.tau;
      polyak_update(nets_.pi_target.layers(), nets_.pi.layers(), tau);
      polyak_update(nets_.q1_target.layers(), nets_.q1.layers(), tau);
      if (nets_.q2)
        polyak_update(nets_.q2_target->layers(), nets_.q2->layers(), tau);
      info.policy_updated = true;
    }
    ++iteration_;
    info.iteration = iteration_;
    return info;
  }

 private:
  TrainSetup setup_;
  NetSet nets_;
  Adam pi_opt_, q1_opt_, q2_opt_;
  long iteration_ = 0;
};

// ---- evaluation -------------------------------------------------------------

struct EvalResult {
  double mean = 0;
  double ci = 0;  // 95% normal-approximation half width
  std::vector<double> returns;
};

inline double run_episode(Env& env, const Mlp& policy, int horizon) {
  double total = 0;
  for (int step = 0; step < horizon; ++step) {
    Eigen::VectorXd a =
        policy.forward_plain(env.observe().transpose()).row(0).transpose();
    StepOut out = env.step(a);
    total += out.reward;
    if (out.done) break;
  }
  return total;
}

/// Deterministic-policy evaluation: fixed horizon, no exploration noise,
/// terminal states end an episode early. The stream is keyed by the eval
/// index so serial and asynchronous runs evaluate identically.
inline EvalResult evaluate(const TrainSetup& setup, const Mlp& policy,
                           std::uint64_t eval_index) {
  std::mt19937_64 rng = derive_stream(setup.seed, StreamKind::kEval, eval_index);
  std::unique_ptr<Env> env = setup.make_env();
  EvalResult out;
  for (int ep = 0; ep < setup.eval_episodes; ++ep) {
    env->reset(rng);
    out.returns.push_back(run_episode(*env, policy, setup.eval_horizon));
  }
  double n = static_cast<double>(out.returns.size());
  out.mean = std::accumulate(out.returns.begin(), out.returns.end(), 0.0) / n;
  double var = 0;
  for (double r : out.returns) var += (r - out.mean) * (r - out.mean);
  var = out.returns.size() > 1 ? var / (n - 1.0) : 0.0;
  out.ci = 1.96 * std::sqrt(var / n);
  return out;
}

// ---- metric log ---------------------------------------------------------------

struct MetricRow {
  long iteration = 0;
  double wall_clock_s = 0;
  double eval_return_mean = 0;
  double eval_return_ci = 0;
  double value_loss = 0;
  double policy_loss = 0;
  double w0 = 0, wH = 0, lambda = 1;
  double grad_staleness_mean = 0;
  double update_time_ms = 0;
  double grad_compute_time_ms = 0;
};

struct MetricLog {
  std::vector<MetricRow> rows;

  static std::string csv_header() {
    return "iteration,wall_clock_s,eval_return_mean,eval_return_ci,"
           "value_loss,policy_loss,w0,wH,lambda,grad_staleness_mean,"
           "update_time_ms,grad_compute_time_ms";
  }

  std::string to_csv() const {
    std::string out = csv_header() + "\n";
    char buf[512];
    for (const MetricRow& r : rows) {
      std::snprintf(buf, sizeof(buf),
                    "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                    "%.17g,%.17g,%.17g\n",
                    r.iteration, r.wall_clock_s, r.eval_return_mean,
                    r.eval_return_ci, r.value_loss, r.policy_loss, r.w0, r.wH,
                    r.lambda, r.grad_staleness_mean, r.update_time_ms,
                    r.grad_compute_time_ms);
      out += buf;
    }
    return out;
  }
};

struct TrainResult {
  MetricLog log;
  NetSet nets;
  long applied_updates = 0;
  std::vector<long> staleness;  // one entry per applied gradient
};

using EvalSink =
    std::function<void(long iteration, const NetSet&, const MetricRow&)>;

inline Checkpoint checkpoint_of(const NetSet& nets, long iteration) {
  Checkpoint ck;
  ck.iteration = iteration;
  ck.add("pi", nets.pi.layers());
  ck.add("pi_target", nets.pi_target.layers());
  ck.add("q1", nets.q1.layers());
  ck.add("q1_target", nets.q1_target.layers());
  if (nets.q2) {
    ck.add("q2", nets.q2->layers());
    ck.add("q2_target", nets.q2_target->layers());
  }
  return ck;
}

inline void check_losses(const TrainSetup& setup, const NetSet& nets,
                         long iteration, const GradientMessage& msg);

// Post-mortem dump on a non-finite loss, then propagate the error.
[[noreturn]] inline void abort_with_checkpoint(const TrainSetup& setup,
                                               const NetSet& nets,
                                               long iteration,
                                               const std::string& reason) {
  std::string msg = reason;
  if (!setup.abort_dir.empty()) {
    std::string path = setup.abort_dir + "/abort_iter" +
                       std::to_string(iteration) + ".ckpt";
    save_checkpoint(path, checkpoint_of(nets, iteration));
    msg += " (post-mortem checkpoint: " + path + ")";
  }
  throw TrainError(msg);
}

inline void check_losses(const TrainSetup& setup, const NetSet& nets,
                         long iteration, const GradientMessage& msg) {
  if (std::isfinite(msg.value_loss) && std::isfinite(msg.policy_loss)) return;
  abort_with_checkpoint(setup, nets, iteration,
                        "non-finite loss at iteration " +
                            std::to_string(iteration));
}

// ---- serial trainer -----------------------------------------------------------

/// The single-threaded training loop: collect, sample every batch-reuse
/// boundary, value step every iteration, policy and target steps on the
/// delayed-update interval.
inline TrainResult serial_train(const TrainSetup& setup,
                                const EvalSink& on_eval = {}) {
  std::mt19937_64 init_rng = derive_stream(setup.seed, StreamKind::kInit);
  NetSet nets = NetSet::init(setup, init_rng);
  OptimizerState opt(setup, std::move(nets));
  Collector collector(setup, 0);
  ReplayBuffer buffer(setup.replay_capacity);
  std::mt19937_64 buffer_rng = derive_stream(setup.seed, StreamKind::kBuffer, 0);
  LearnerCore learner(setup, 0);

  auto start = std::chrono::steady_clock::now();
  auto now_s = [&] {
    if (setup.deterministic_timing) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  };

  while (!buffer.ready(static_cast<size_t>(setup.batch_size))) {
    for (Transition& t : collector.step(opt.nets().pi)) buffer.push(std::move(t));
  }

  TrainResult result;
  Batch batch;
  Eigen::VectorXd targets;
  GradientMessage last_policy_msg;
  double last_value_loss = 0;
  double update_ms_acc = 0, grad_ms_acc = 0;
  long acc_count = 0;
  std::uint64_t eval_index = 0;

  for (long g = 0; g < setup.budget; ++g) {
    for (Transition& t : collector.step(opt.nets().pi)) buffer.push(std::move(t));

    if (g % setup.spec.batch_reuse == 0) {
      auto sampled =
          buffer.sample(static_cast<size_t>(setup.batch_size), buffer_rng);
      if (!sampled) throw TrainError("serial_train: replay unexpectedly empty");
      batch = std::move(*sampled);
      targets = learner.targets(opt.nets(), batch);
    }

    bool with_policy = ((g + 1) % setup.spec.delayed_update == 0);
    auto t0 = std::chrono::steady_clock::now();
    GradientMessage msg =
        learner.compute(opt.nets(), batch, targets, g, with_policy);
    msg.compute_version = g;
    check_losses(setup, opt.nets(), g + 1, msg);
    opt.apply(msg);
    result.staleness.push_back(0);
    if (!setup.deterministic_timing) {
      update_ms_acc += std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
      grad_ms_acc += msg.grad_compute_ms;
    }
    ++acc_count;
    last_value_loss = msg.value_loss;
    if (msg.has_policy()) last_policy_msg = msg;

    long k = g + 1;
    if (k % setup.eval_interval == 0) {
      EvalResult ev = evaluate(setup, opt.nets().pi, eval_index++);
      MetricRow row;
      row.iteration = k;
      row.wall_clock_s = now_s();
      row.eval_return_mean = ev.mean;
      row.eval_return_ci = ev.ci;
      row.value_loss = last_value_loss;
      row.policy_loss = last_policy_msg.policy_loss;
      row.w0 = last_policy_msg.w0;
      row.wH = last_policy_msg.wH;
      row.lambda = last_policy_msg.lambda;
      row.grad_staleness_mean = 0;
      row.update_time_ms = acc_count ? update_ms_acc / acc_count : 0;
      row.grad_compute_time_ms = acc_count ? grad_ms_acc / acc_count : 0;
      update_ms_acc = grad_ms_acc = 0;
      acc_count = 0;
      result.log.rows.push_back(row);
      if (on_eval) on_eval(k, opt.nets(), row);
    }
  }
  result.nets = opt.nets();
  result.applied_updates = opt.iteration();
  return result;
}

}  // namespace mpg
