#pragma once

#include <memory>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "mpg/pendulum.hpp"
#include "mpg/rng.hpp"
#include "mpg/tensor.hpp"
#include "mpg/vehicle.hpp"

namespace mpg {

struct EnvError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StepOut {
  Eigen::VectorXd obs;
  double reward = 0;
  bool done = false;
};

/// Ground-truth simulator interface. Instances are single-owner; clone for
/// private per-worker copies.
class Env {
 public:
  virtual ~Env() = default;
  virtual int obs_dim() const = 0;
  virtual int act_dim() const = 0;
  virtual Eigen::RowVectorXd action_bounds() const = 0;
  virtual Eigen::VectorXd reset(std::mt19937_64& rng) = 0;
  virtual void reset_to(const Eigen::VectorXd& obs) = 0;
  virtual Eigen::VectorXd observe() const = 0;
  virtual StepOut step(const Eigen::VectorXd& action) = 0;
  virtual bool terminal(const Eigen::VectorXd& obs) const = 0;
  // Collection-side episode cut: when to restart an exploration episode.
  // Terminal states always cut; tasks may cut earlier to keep the replay
  // distribution on useful states without changing the MDP (evaluation
  // ignores this).
  virtual bool collect_reset(const Eigen::VectorXd& obs) const {
    return terminal(obs);
  }
  virtual std::unique_ptr<Env> clone() const = 0;
};

/// Uniform per-dimension reset ranges; overridable from the run config.
struct VehicleResetRange {
  double u_min = 15.0, u_max = 25.0;
  double v_min = -0.5, v_max = 0.5;
  double r_min = -0.1, r_max = 0.1;
  double dy_min = -1.5, dy_max = 1.5;
  double dphi_min = -0.17, dphi_max = 0.17;
  double x_min = 0.0, x_max = 1200.0;
};

struct PendulumResetRange {
  double lo = -0.05, hi = 0.05;
};

class TrackingEnv final : public Env {
 public:
  TrackingEnv() = default;
  TrackingEnv(VehicleParams params, VehicleResetRange range)
      : params_(params), range_(range) {}

  int obs_dim() const override { return 6; }
  int act_dim() const override { return 2; }

  Eigen::RowVectorXd action_bounds() const override {
    Eigen::RowVectorXd b(2);
    b << params_.delta_bound, params_.acc_bound;
    return b;
  }

  Eigen::VectorXd reset(std::mt19937_64& rng) override {
    TrackingObs o;
    o.du = uniform(rng, range_.u_min, range_.u_max) - params_.u_ref;
    o.v = uniform(rng, range_.v_min, range_.v_max);
    o.r = uniform(rng, range_.r_min, range_.r_max);
    o.dy = uniform(rng, range_.dy_min, range_.dy_max);
    o.dphi = uniform(rng, range_.dphi_min, range_.dphi_max);
    o.x = uniform(rng, range_.x_min, range_.x_max);
    state_ = tracking_state(o, params_);
    return observe();
  }

  void reset_to(const Eigen::VectorXd& obs) override {
    check_obs(obs);
    TrackingObs o = unpack(obs);
    if (tracking_terminal(o, params_))
      throw EnvError("TrackingEnv::reset_to: state is terminal");
    state_ = tracking_state(o, params_);
  }

  Eigen::VectorXd observe() const override {
    return pack(tracking_obs(state_, params_));
  }

  StepOut step(const Eigen::VectorXd& action) override {
    if (action.size() != 2) throw EnvError("TrackingEnv::step: need 2 actions");
    double delta = std::clamp(action[0], -params_.delta_bound, params_.delta_bound);
    double acc = std::clamp(action[1], -params_.acc_bound, params_.acc_bound);
    TrackingObs now = tracking_obs(state_, params_);
    StepOut out;
    out.reward = tracking_reward(now, delta, acc);
    state_ = vehicle_step(state_, delta, acc, params_);
    out.obs = observe();
    out.done = tracking_terminal(unpack(out.obs), params_);
    return out;
  }

  bool terminal(const Eigen::VectorXd& obs) const override {
    return tracking_terminal(unpack(obs), params_);
  }

  std::unique_ptr<Env> clone() const override {
    return std::make_unique<TrackingEnv>(*this);
  }

  const VehicleParams& params() const { return params_; }
  const VehicleState& raw_state() const { return state_; }

  static Eigen::VectorXd pack(const TrackingObs& o) {
    Eigen::VectorXd v(6);
    v << o.du, o.v, o.r, o.dy, o.dphi, o.x;
    return v;
  }

  static TrackingObs unpack(const Eigen::VectorXd& v) {
    return TrackingObs{v[0], v[1], v[2], v[3], v[4], v[5]};
  }

 private:
  void check_obs(const Eigen::VectorXd& obs) const {
    if (obs.size() != 6) throw EnvError("TrackingEnv: observation must be 6-d");
    if (!obs.allFinite()) throw EnvError("TrackingEnv: non-finite observation");
  }

  VehicleParams params_;
  VehicleResetRange range_;
  VehicleState state_;
};

class PendulumEnv final : public Env {
 public:
  PendulumEnv() = default;
  PendulumEnv(PendulumParams params, PendulumResetRange range,
              double collect_angle = 0.2)
      : params_(params), range_(range), collect_angle_(collect_angle) {}

  int obs_dim() const override { return 4; }
  int act_dim() const override { return 1; }

  Eigen::RowVectorXd action_bounds() const override {
    Eigen::RowVectorXd b(1);
    b << params_.force_bound;
    return b;
  }

  Eigen::VectorXd reset(std::mt19937_64& rng) override {
    state_.x = uniform(rng, range_.lo, range_.hi);
    state_.th = uniform(rng, range_.lo, range_.hi);
    state_.xd = uniform(rng, range_.lo, range_.hi);
    state_.thd = uniform(rng, range_.lo, range_.hi);
    return observe();
  }

  void reset_to(const Eigen::VectorXd& obs) override {
    if (obs.size() != 4) throw EnvError("PendulumEnv: observation must be 4-d");
    if (!obs.allFinite()) throw EnvError("PendulumEnv: non-finite observation");
    state_ = PendulumState{obs[0], obs[1], obs[2], obs[3]};
  }

  Eigen::VectorXd observe() const override {
    Eigen::VectorXd v(4);
    v << state_.x, state_.th, state_.xd, state_.thd;
    return v;
  }

  StepOut step(const Eigen::VectorXd& action) override {
    if (action.size() != 1) throw EnvError("PendulumEnv::step: need 1 action");
    double f = std::clamp(action[0], -params_.force_bound, params_.force_bound);
    StepOut out;
    out.reward = pendulum_reward(state_);
    state_ = pendulum_step(state_, f, params_);
    out.obs = observe();
    out.done = false;  // fixed-horizon task
    return out;
  }

  bool terminal(const Eigen::VectorXd&) const override { return false; }

  // Fallen poles carry no signal for balancing; restart the collection
  // episode once the angle leaves the catchable band.
  bool collect_reset(const Eigen::VectorXd& obs) const override {
    return collect_angle_ > 0 && std::abs(obs[1]) > collect_angle_;
  }

  std::unique_ptr<Env> clone() const override {
    return std::make_unique<PendulumEnv>(*this);
  }

  const PendulumParams& params() const { return params_; }

 private:
  PendulumParams params_;
  PendulumResetRange range_;
  double collect_angle_ = 0.2;
  PendulumState state_;
};

struct Transition {
  Eigen::VectorXd s;
  Eigen::VectorXd a;
  double r = 0;
  Eigen::VectorXd s2;
  bool done = false;
};

/// Fixed-size team of independent simulator instances stepped elementwise.
/// Agents that reach a terminal state are auto-reset and flagged; the stored
/// next observation is the pre-reset one.
class BatchedEnv {
 public:
  BatchedEnv(const Env& proto, int n_agents)
      : obs_(n_agents, proto.obs_dim()) {
    for (int i = 0; i < n_agents; ++i) envs_.push_back(proto.clone());
  }

  int size() const { return static_cast<int>(envs_.size()); }
  int obs_dim() const { return envs_[0]->obs_dim(); }
  int act_dim() const { return envs_[0]->act_dim(); }

  void reset_all(std::mt19937_64& rng) {
    for (int i = 0; i < size(); ++i) obs_.row(i) = envs_[i]->reset(rng);
  }

  const Mat& observations() const { return obs_; }

  struct BatchStep {
    Mat next_obs;               // pre-reset observations
    Eigen::VectorXd rewards;
    std::vector<uint8_t> done;  // terminal flags (agent was auto-reset)
  };

  BatchStep step(const Mat& actions, std::mt19937_64& rng) {
    if (actions.rows() != size() || actions.cols() != act_dim())
      throw EnvError("BatchedEnv::step: action batch shape mismatch");
    BatchStep out;
    out.next_obs.resize(size(), obs_dim());
    out.rewards.resize(size());
    out.done.assign(static_cast<size_t>(size()), 0);
    for (int i = 0; i < size(); ++i) {
      StepOut so = envs_[i]->step(actions.row(i).transpose());
      out.next_obs.row(i) = so.obs;
      out.rewards[i] = so.reward;
      out.done[static_cast<size_t>(i)] = so.done ? 1 : 0;
      if (so.done || envs_[i]->collect_reset(so.obs)) {
        obs_.row(i) = envs_[i]->reset(rng);
      } else {
        obs_.row(i) = so.obs;
      }
    }
    return out;
  }

 private:
  std::vector<std::unique_ptr<Env>> envs_;
  Mat obs_;
};

inline std::unique_ptr<Env> make_env(const std::string& task,
                                     const VehicleParams& vp,
                                     const VehicleResetRange& vr,
                                     const PendulumParams& pp,
                                     const PendulumResetRange& pr,
                                     double pendulum_collect_angle = 0.2) {
  if (task == "path_tracking") return std::make_unique<TrackingEnv>(vp, vr);
  if (task == "inverted_pendulum")
    return std::make_unique<PendulumEnv>(pp, pr, pendulum_collect_angle);
  throw EnvError("make_env: unknown task '" + task + "'");
}

}  // namespace mpg
