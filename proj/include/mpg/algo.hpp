#pragma once

#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mpg/nn.hpp"
#include "mpg/prior.hpp"
#include "mpg/replay.hpp"
#include "mpg/schedule.hpp"

namespace mpg {

struct AlgoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Algorithm { kMpgV1, kMpgV2, kNStepDpg, kNStepAdp, kTd3 };

inline Algorithm parse_algorithm(const std::string& name) {
  if (name == "mpg_v1") return Algorithm::kMpgV1;
  if (name == "mpg_v2") return Algorithm::kMpgV2;
  if (name == "nstep_dpg") return Algorithm::kNStepDpg;
  if (name == "nstep_adp") return Algorithm::kNStepAdp;
  if (name == "td3") return Algorithm::kTd3;
  throw AlgoError("unknown algorithm '" + name + "'");
}

inline std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kMpgV1: return "mpg_v1";
    case Algorithm::kMpgV2: return "mpg_v2";
    case Algorithm::kNStepDpg: return "nstep_dpg";
    case Algorithm::kNStepAdp: return "nstep_adp";
    case Algorithm::kTd3: return "td3";
  }
  return "?";
}

/// Per-variant knobs. Field presence follows the algorithm family: twin
/// critics for the clipped-double-Q variants, rollout horizons for the
/// n-step ones.
struct AlgorithmSpec {
  Algorithm variant = Algorithm::kMpgV1;
  int n = 25;              // value-target horizon
  int horizon = 25;        // policy rollout horizon H
  int delayed_update = 2;  // policy/target update interval m
  int batch_reuse = 10;
  double gamma = 0.98;
  double tau = 0.005;
  double exploration_std = 0.1;
  double smoothing_std = 0.1;   // TD3 target policy smoothing
  double smoothing_clip = 0.5;
  double eta = 0.1;
  long weight_ramp = 9000;  // iterations to ramp lambda

  bool twin_critic() const {
    return variant == Algorithm::kMpgV2 || variant == Algorithm::kTd3;
  }
  bool nstep_targets() const {
    return variant == Algorithm::kMpgV1 || variant == Algorithm::kNStepDpg ||
           variant == Algorithm::kNStepAdp;
  }
  bool mixed_pg() const {
    return variant == Algorithm::kMpgV1 || variant == Algorithm::kMpgV2;
  }

  WeightSchedule weight_schedule() const {
    return WeightSchedule{eta, weight_ramp, horizon};
  }
};

inline AlgorithmSpec make_spec(Algorithm variant) {
  AlgorithmSpec s;
  s.variant = variant;
  if (variant == Algorithm::kTd3) s.batch_reuse = 1;
  return s;
}

// ---- policy objectives (scalar-on-tape, maximized) -------------------------

/// i-step model-predictive return per batch row. The first action is the
/// recorded policy (theta path alive); every later action and the terminal
/// critic bootstrap use frozen applications, so the theta-gradient of the
/// mean equals the horizon-i unified policy gradient. Critic parameters stay
/// constant throughout.
inline Tensor model_return(Tape& t, int i, const Tensor& obs,
                           const Mlp& policy, const Mlp::Bound& policy_bound,
                           const Mlp& critic, const DiffModel& model,
                           double gamma, std::mt19937_64* rng,
                           int max_horizon) {
  if (i < 0) throw AlgoError("model_return: negative horizon");
  if (i > max_horizon) throw AlgoError("model_return: horizon exceeds maximum");
  Tensor a0 = policy.apply(t, policy_bound, obs);
  if (i == 0) return critic.apply_frozen(t, hcat(t, obs, a0));
  Tensor ret = model.reward(t, obs, a0);
  Tensor s = model.step(t, obs, a0, rng);
  double disc = gamma;
  for (int j = 1; j < i; ++j) {
    Tensor a = policy.apply_frozen(t, s);
    ret = add(t, ret, mul_scalar(t, model.reward(t, s, a), disc));
    s = model.step(t, s, a, rng);
    disc *= gamma;
  }
  Tensor a_tail = policy.apply_frozen(t, s);
  Tensor q = critic.apply_frozen(t, hcat(t, s, a_tail));
  return add(t, ret, mul_scalar(t, q, disc));
}

/// Mean over the batch of w0*X_0 + wH*X_H; gradient ascent on this scalar is
/// the mixed policy gradient.
inline Tensor mixed_policy_objective(Tape& t, const Tensor& obs,
                                     const Mlp& policy,
                                     const Mlp::Bound& policy_bound,
                                     const Mlp& critic, const DiffModel& model,
                                     double w0, double wH, int H, double gamma,
                                     std::mt19937_64* rng) {
  Tensor x0 = model_return(t, 0, obs, policy, policy_bound, critic, model,
                           gamma, rng, H);
  Tensor xh = model_return(t, H, obs, policy, policy_bound, critic, model,
                           gamma, rng, H);
  Tensor mix = add(t, mul_scalar(t, x0, w0), mul_scalar(t, xh, wH));
  return mean_all(t, mix);
}

/// Data-driven objective: mean of Q(s, pi(s)) with the critic frozen.
inline Tensor dpg_policy_objective(Tape& t, const Tensor& obs,
                                   const Mlp& policy,
                                   const Mlp::Bound& policy_bound,
                                   const Mlp& critic) {
  Tensor a = policy.apply(t, policy_bound, obs);
  return mean_all(t, critic.apply_frozen(t, hcat(t, obs, a)));
}

/// Model-driven objective: the recorded policy acts at every rollout step,
/// so gradients flow through the whole chain (full BPTT), unlike the frozen
/// tails of model_return. The terminal bootstrap action depends on the final
/// state only (frozen parameters), matching the chain-rule expansion that
/// makes this objective decompose exactly into discounted fixed-horizon
/// gradients.
inline Tensor adp_policy_objective(Tape& t, const Tensor& obs,
                                   const Mlp& policy,
                                   const Mlp::Bound& policy_bound,
                                   const Mlp& critic, const DiffModel& model,
                                   int H, double gamma, std::mt19937_64* rng) {
  if (H < 1) throw AlgoError("adp_policy_objective: horizon must be >= 1");
  Tensor s = obs;
  Tensor ret;
  double disc = 1.0;
  for (int j = 0; j < H; ++j) {
    Tensor a = policy.apply(t, policy_bound, s);
    Tensor rj = mul_scalar(t, model.reward(t, s, a), disc);
    ret = (j == 0) ? rj : add(t, ret, rj);
    s = model.step(t, s, a, rng);
    disc *= gamma;
  }
  Tensor a_tail = policy.apply_frozen(t, s);
  Tensor q = critic.apply_frozen(t, hcat(t, s, a_tail));
  return mean_all(t, add(t, ret, mul_scalar(t, q, disc)));
}

// ---- value targets (detached) ----------------------------------------------

/// Clipped-double-Q one-step target: r + gamma * min_i Q'_i(s', pi'(s')).
/// Terminal transitions keep only the stored reward.
inline Eigen::VectorXd clipped_double_q_targets(const Batch& b,
                                                const Mlp& policy_target,
                                                const Mlp& q1_target,
                                                const Mlp& q2_target,
                                                double gamma) {
  Mat a2 = policy_target.forward_plain(b.s2);
  Mat sa(b.s2.rows(), b.s2.cols() + a2.cols());
  sa << b.s2, a2;
  Mat q1 = q1_target.forward_plain(sa);
  Mat q2 = q2_target.forward_plain(sa);
  Eigen::VectorXd out(b.size());
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    double boot = b.done[static_cast<size_t>(i)] ? 0.0
                                                 : std::min(q1(i, 0), q2(i, 0));
    out[i] = b.r[i] + gamma * boot;
  }
  return out;
}

/// TD3 target: the target action is smoothed with clipped Gaussian noise and
/// clamped back to the actuator bounds before the clipped-double-Q bootstrap.
inline Eigen::VectorXd td3_targets(const Batch& b, const Mlp& policy_target,
                                   const Mlp& q1_target, const Mlp& q2_target,
                                   double gamma, double smoothing_std,
                                   double smoothing_clip,
                                   const Eigen::RowVectorXd& bounds,
                                   std::mt19937_64& rng) {
  Mat a2 = policy_target.forward_plain(b.s2);
  for (Eigen::Index i = 0; i < a2.rows(); ++i) {
    for (Eigen::Index j = 0; j < a2.cols(); ++j) {
      double eps = std::clamp(normal(rng, 0.0, smoothing_std), -smoothing_clip,
                              smoothing_clip);
      a2(i, j) = std::clamp(a2(i, j) + eps, -bounds[j], bounds[j]);
    }
  }
  Mat sa(b.s2.rows(), b.s2.cols() + a2.cols());
  sa << b.s2, a2;
  Mat q1 = q1_target.forward_plain(sa);
  Mat q2 = q2_target.forward_plain(sa);
  Eigen::VectorXd out(b.size());
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    double boot = b.done[static_cast<size_t>(i)] ? 0.0
                                                 : std::min(q1(i, 0), q2(i, 0));
    out[i] = b.r[i] + gamma * boot;
  }
  return out;
}

/// n-step TD targets from real simulator rollouts. Each batch row restarts a
/// private environment at its stored next state and follows the current
/// policy deterministically; rollouts truncate at terminal states with the
/// bootstrap dropped.
class NStepTargetBuilder {
 public:
  NStepTargetBuilder(const Env& proto, Eigen::Index batch) {
    envs_.reserve(static_cast<size_t>(batch));
    for (Eigen::Index i = 0; i < batch; ++i) envs_.push_back(proto.clone());
  }

  Eigen::VectorXd build(const Batch& b, int n, double gamma, const Mlp& policy,
                        const Mlp& policy_target, const Mlp& critic_target) {
    if (n < 1) throw AlgoError("NStepTargetBuilder: n must be >= 1");
    if (b.size() > static_cast<Eigen::Index>(envs_.size()))
      throw AlgoError("NStepTargetBuilder: batch larger than builder");
    Eigen::Index nb = b.size();
    Eigen::VectorXd total = b.r;
    std::vector<uint8_t> alive(static_cast<size_t>(nb), 1);
    Mat states = b.s2;
    for (Eigen::Index i = 0; i < nb; ++i) {
      if (b.done[static_cast<size_t>(i)]) {
        alive[static_cast<size_t>(i)] = 0;
      } else {
        envs_[static_cast<size_t>(i)]->reset_to(b.s2.row(i).transpose());
      }
    }
    double disc = gamma;
    for (int j = 1; j < n; ++j) {
      Mat actions = policy.forward_plain(states);
      for (Eigen::Index i = 0; i < nb; ++i) {
        if (!alive[static_cast<size_t>(i)]) continue;
        StepOut so = envs_[static_cast<size_t>(i)]->step(actions.row(i).transpose());
        total[i] += disc * so.reward;
        states.row(i) = so.obs;
        if (so.done) alive[static_cast<size_t>(i)] = 0;
      }
      disc *= gamma;
    }
    // bootstrap at s_{t+n} for rows that survived
    Mat a_tail = policy_target.forward_plain(states);
    Mat sa(states.rows(), states.cols() + a_tail.cols());
    sa << states, a_tail;
    Mat q = critic_target.forward_plain(sa);
    for (Eigen::Index i = 0; i < nb; ++i) {
      if (alive[static_cast<size_t>(i)]) total[i] += disc * q(i, 0);
    }
    return total;
  }

 private:
  std::vector<std::unique_ptr<Env>> envs_;
};

// ---- value gradient ---------------------------------------------------------

struct ValueGradResult {
  double loss = 0;  // 1/2 mean squared residual, summed over critics
  std::vector<Mat> q1_grad;
  std::vector<Mat> q2_grad;  // empty for single-critic variants
};

/// Gradient of the half mean squared error of Q against detached targets.
/// Twin variants regress both critics to the same target.
inline ValueGradResult value_gradient(const Batch& b,
                                      const Eigen::VectorXd& targets,
                                      const Mlp& q1, const Mlp* q2) {
  Mat sa(b.s.rows(), b.s.cols() + b.a.cols());
  sa << b.s, b.a;
  Tensor input = constant(sa);
  Tensor target = constant(Mat(targets));
  ValueGradResult out;

  Tape t1;
  Mlp::Bound b1 = q1.bind(t1);
  Tensor loss1 = mul_scalar(
      t1, mean_all(t1, square(t1, sub(t1, q1.apply(t1, b1, input), target))),
      0.5);
  t1.backward(loss1);
  out.q1_grad = q1.grads(t1, b1);
  out.loss = loss1.scalar();

  if (q2 != nullptr) {
    Tape t2;
    Mlp::Bound b2 = q2->bind(t2);
    Tensor loss2 = mul_scalar(
        t2,
        mean_all(t2, square(t2, sub(t2, q2->apply(t2, b2, input), target))),
        0.5);
    t2.backward(loss2);
    out.q2_grad = q2->grads(t2, b2);
    out.loss += loss2.scalar();
  }
  return out;
}

}  // namespace mpg
