#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "mpg/algo.hpp"

namespace mpg {

// ---- exact decomposition of the model-driven gradient ----------------------

struct Theorem1Result {
  Eigen::VectorXd lhs;  // gradient of the H-step model objective
  Eigen::VectorXd rhs;  // discounted sum of fixed-horizon gradients along the rollout
  double max_abs_diff = 0;
  double rel_diff = 0;
};

/// With the model equal to the true dynamics, the gradient of the n-step
/// model objective decomposes into sum_k gamma^k * (gradient of the
/// (n-k)-step return started at the k-th rollout state). Both sides are
/// computed through independent tapes.
inline Theorem1Result theorem1_check(const Mat& obs0, int n, const Mlp& policy,
                                     const Mlp& critic, const DiffModel& model,
                                     double gamma) {
  Theorem1Result out;
  {
    Tape t;
    Mlp::Bound b = policy.bind(t);
    Tensor j = adp_policy_objective(t, constant(obs0), policy, b, critic,
                                    model, n, gamma, nullptr);
    t.backward(j);
    out.lhs = flatten(policy.grads(t, b));
  }
  // rollout start points under the current policy
  std::vector<Mat> states;
  states.reserve(static_cast<size_t>(n));
  Mat s = obs0;
  for (int k = 0; k < n; ++k) {
    states.push_back(s);
    s = model.step_plain(s, policy.forward_plain(s));
  }
  out.rhs = Eigen::VectorXd::Zero(out.lhs.size());
  double disc = 1.0;
  for (int k = 0; k < n; ++k) {
    Tape t;
    Mlp::Bound b = policy.bind(t);
    Tensor x = model_return(t, n - k, constant(states[static_cast<size_t>(k)]),
                            policy, b, critic, model, gamma, nullptr, n);
    t.backward(mean_all(t, x));
    out.rhs += disc * flatten(policy.grads(t, b));
    disc *= gamma;
  }
  out.max_abs_diff = (out.lhs - out.rhs).cwiseAbs().maxCoeff();
  out.rel_diff = out.max_abs_diff / (1.0 + out.lhs.cwiseAbs().maxCoeff());
  return out;
}

// ---- bias of the fixed-horizon gradient vs the true gradient ---------------

/// Truncated rollout return on tape: r(s,a) plus discounted rewards of a
/// frozen-policy rollout. Differentiable in (s, a); the policy parameters
/// stay constant. This stands in for the true action value wherever the
/// diagnostic needs an exact critic.
inline Tensor rollout_q(Tape& t, const Tensor& obs, const Tensor& act,
                        const Mlp& policy, const DiffModel& model,
                        double gamma, int steps) {
  Tensor ret = model.reward(t, obs, act);
  Tensor s = model.step(t, obs, act, nullptr);
  double disc = gamma;
  for (int l = 1; l < steps; ++l) {
    Tensor a = policy.apply_frozen(t, s);
    ret = add(t, ret, mul_scalar(t, model.reward(t, s, a), disc));
    s = model.step(t, s, a, nullptr);
    disc *= gamma;
  }
  return ret;
}

enum class BiasRegime { kNone, kCriticError, kModelError };

struct BiasDiagnosticConfig {
  std::vector<int> horizons = {0, 1, 2, 5, 10, 25};
  double gamma = 0.9;
  double cutoff = 1e-6;  // discount-mass truncation of the exact return
  int batch = 8;
  int hidden = 32;
  int seeds = 20;
  double critic_perturbation = 0.5;
};

inline int cutoff_steps(double gamma, double cutoff) {
  return static_cast<int>(std::ceil(std::log(cutoff) / std::log(gamma)));
}

namespace detail {

using CriticFn =
    std::function<Tensor(Tape&, const Tensor& s, const Tensor& a)>;

// Policy gradient of the horizon-n return with a pluggable critic and
// rollout model, flattened.
inline Eigen::VectorXd horizon_gradient(const Mat& obs, int n,
                                        const Mlp& policy,
                                        const DiffModel& rollout_model,
                                        const CriticFn& critic, double gamma) {
  Tape t;
  Mlp::Bound b = policy.bind(t);
  Tensor ret;
  Tensor s = constant(obs);
  Tensor a0 = policy.apply(t, b, s);
  if (n == 0) {
    ret = critic(t, s, a0);
  } else {
    ret = rollout_model.reward(t, s, a0);
    s = rollout_model.step(t, s, a0, nullptr);
    double disc = gamma;
    for (int j = 1; j < n; ++j) {
      Tensor a = policy.apply_frozen(t, s);
      ret = add(t, ret, mul_scalar(t, rollout_model.reward(t, s, a), disc));
      s = rollout_model.step(t, s, a, nullptr);
      disc *= gamma;
    }
    Tensor a_tail = policy.apply_frozen(t, s);
    ret = add(t, ret, mul_scalar(t, critic(t, s, a_tail), disc));
  }
  t.backward(mean_all(t, ret));
  return flatten(policy.grads(t, b));
}

inline Mat sample_states(const std::string& task, int batch,
                         std::mt19937_64& rng) {
  if (task == "path_tracking") {
    Mat obs(batch, 6);
    for (int i = 0; i < batch; ++i) {
      obs(i, 0) = uniform(rng, -2, 2);
      obs(i, 1) = uniform(rng, -0.3, 0.3);
      obs(i, 2) = uniform(rng, -0.2, 0.2);
      obs(i, 3) = uniform(rng, -1.5, 1.5);
      obs(i, 4) = uniform(rng, -0.15, 0.15);
      obs(i, 5) = uniform(rng, 0, 1200);
    }
    return obs;
  }
  Mat obs(batch, 4);
  for (int i = 0; i < batch; ++i)
    for (int j = 0; j < 4; ++j) obs(i, j) = uniform(rng, -0.05, 0.05);
  return obs;
}

}  // namespace detail

struct BiasCurve {
  std::vector<int> horizons;
  std::vector<double> mean_bias;  // Euclidean gradient error per horizon
};

/// Empirical gradient-bias-vs-horizon curve under one error regime:
///  - kNone: exact model and exact (rolled-out) critic; the bias is numerical
///    noise only.
///  - kCriticError: exact model, critic perturbed by a random network whose
///    influence enters only through the discounted tail.
///  - kModelError: exact critic, rollout through the mismatched prior model
///    (process noise disabled).
inline BiasCurve pg_bias_diagnostic(BiasRegime regime, const std::string& task,
                                    const BiasDiagnosticConfig& cfg,
                                    uint64_t root_seed) {
  VehicleParams vp;
  PendulumParams pp;
  const std::unique_ptr<DiffModel> oracle = make_oracle_model(task, vp, pp);
  const std::unique_ptr<DiffModel> prior = make_prior_model(task, vp, pp);
  const int total_len = cutoff_steps(cfg.gamma, cfg.cutoff);
  const int obs_dim = oracle->obs_dim();
  const int act_dim = oracle->act_dim();
  Eigen::RowVectorXd bounds(act_dim);
  if (task == "path_tracking") {
    bounds << vp.delta_bound, vp.acc_bound;
  } else {
    bounds << pp.force_bound;
  }

  BiasCurve curve;
  curve.horizons = cfg.horizons;
  curve.mean_bias.assign(cfg.horizons.size(), 0.0);

  for (int seed = 0; seed < cfg.seeds; ++seed) {
    std::mt19937_64 rng =
        derive_stream(root_seed, StreamKind::kDiagnostic,
                      static_cast<uint64_t>(seed));
    // Input-normalized, small-gain policies: the long exact-return rollouts
    // must stay inside the dynamics' envelope. Without the x feature scaled
    // down the tanh head saturates to full steering, and a full-steer
    // rollout drags the vehicle's u through zero into the tire-model
    // singularity at u ~ -0.6.
    Eigen::RowVectorXd in_scale = Eigen::RowVectorXd::Ones(obs_dim);
    if (task == "path_tracking") in_scale[5] = 1.0 / 1200.0;
    Mlp policy = Mlp::policy(obs_dim, cfg.hidden, bounds, in_scale);
    policy.init(rng);
    policy.layers()[4] *= 0.05;
    policy.layers()[5].setZero();
    Mlp perturb = Mlp::critic(obs_dim, act_dim, cfg.hidden);
    perturb.init(rng);
    Mat obs = detail::sample_states(task, cfg.batch, rng);

    auto exact_q = [&](int tail) {
      return detail::CriticFn([&, tail](Tape& t, const Tensor& s,
                                        const Tensor& a) {
        return rollout_q(t, s, a, policy, *oracle, cfg.gamma, tail);
      });
    };
    Eigen::VectorXd g_true = detail::horizon_gradient(
        obs, 0, policy, *oracle, exact_q(total_len), cfg.gamma);

    for (size_t h = 0; h < cfg.horizons.size(); ++h) {
      int n = cfg.horizons[h];
      const DiffModel& rollout_model =
          (regime == BiasRegime::kModelError) ? *prior : *oracle;
      detail::CriticFn critic;
      if (regime == BiasRegime::kCriticError) {
        critic = [&](Tape& t, const Tensor& s, const Tensor& a) {
          Tensor base = rollout_q(t, s, a, policy, *oracle, cfg.gamma,
                                  total_len - n);
          Tensor bump = perturb.apply_frozen(t, hcat(t, s, a));
          return add(t, base, mul_scalar(t, bump, cfg.critic_perturbation));
        };
      } else {
        critic = exact_q(total_len - n);
      }
      Eigen::VectorXd g_n = detail::horizon_gradient(
          obs, n, policy, rollout_model, critic, cfg.gamma);
      curve.mean_bias[h] += (g_n - g_true).norm() / cfg.seeds;
    }
  }
  return curve;
}

/// Spearman rank correlation with average ranks on ties.
inline double spearman(const std::vector<double>& xs,
                       const std::vector<double>& ys) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(),
              [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    size_t i = 0;
    while (i < idx.size()) {
      size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  std::vector<double> rx = ranks(xs), ry = ranks(ys);
  double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / rx.size();
  double my = std::accumulate(ry.begin(), ry.end(), 0.0) / ry.size();
  double num = 0, dx = 0, dy = 0;
  for (size_t i = 0; i < rx.size(); ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    dx += (rx[i] - mx) * (rx[i] - mx);
    dy += (ry[i] - my) * (ry[i] - my);
  }
  if (dx == 0 || dy == 0) return 0.0;
  return num / std::sqrt(dx * dy);
}

}  // namespace mpg
