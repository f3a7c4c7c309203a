#pragma once

#include <memory>
#include <random>

#include "mpg/env.hpp"
#include "mpg/tensor.hpp"

namespace mpg {

/// Differentiable transition model plus its reward, both recordable on a
/// tape. `rng == nullptr` disables process noise; the noise enters as an
/// additive constant, so gradients never depend on the draw.
class DiffModel {
 public:
  virtual ~DiffModel() = default;
  virtual int obs_dim() const = 0;
  virtual int act_dim() const = 0;
  virtual Tensor step(Tape& tape, const Tensor& obs, const Tensor& act,
                      std::mt19937_64* rng) const = 0;
  virtual Tensor reward(Tape& tape, const Tensor& obs, const Tensor& act) const = 0;
  virtual std::unique_ptr<DiffModel> clone() const = 0;

  // Untaped convenience: constants in, constants out, nothing recorded.
  Mat step_plain(const Mat& obs, const Mat& act) const {
    Tape scratch;
    return *step(scratch, constant(obs), constant(act), nullptr).value;
  }
  Mat reward_plain(const Mat& obs, const Mat& act) const {
    Tape scratch;
    return *reward(scratch, constant(obs), constant(act)).value;
  }
};

namespace detail {

struct VehicleCols {
  Tensor u, v, r, y, phi, x;
};

inline VehicleCols vehicle_substep_tape(Tape& t, const VehicleCols& s,
                                        const Tensor& delta, const Tensor& acc,
                                        const VehicleParams& p,
                                        const VehicleDerived& d) {
  Tensor den_v = add_scalar(t, mul_scalar(t, s.u, p.mass), d.c_den_v);
  Tensor den_r = add_scalar(t, mul_scalar(t, s.u, -p.iz), d.c_den_r);
  if (den_v.mat().cwiseAbs().minCoeff() < 1e-8 ||
      den_r.mat().cwiseAbs().minCoeff() < 1e-8) {
    throw SimulatorFault("vehicle model: singular tire-dynamics denominator");
  }
  Tensor du = mul(t, delta, s.u);
  Tensor sp = sin_op(t, s.phi), cp = cos_op(t, s.phi);
  VehicleCols n;
  n.u = add(t, s.u, mul_scalar(t, add(t, acc, mul(t, s.v, s.r)), d.T));
  Tensor t1 = mul_scalar(t, mul(t, s.v, s.u), p.mass);
  Tensor t2 = mul_scalar(t, s.r, d.c_vr);
  Tensor t3 = mul_scalar(t, du, d.c_tcf);
  Tensor t4 = mul_scalar(t, mul(t, mul(t, s.u, s.u), s.r), d.c_tm);
  n.v = div(t, sub(t, sub(t, add(t, t1, t2), t3), t4), den_v);
  Tensor s1 = mul_scalar(t, mul(t, s.r, s.u), -p.iz);
  Tensor s2 = mul_scalar(t, s.v, d.c_vr);
  Tensor s3 = mul_scalar(t, du, d.c_tacf);
  n.r = div(t, add(t, sub(t, s1, s2), s3), den_r);
  n.y = add(t, s.y,
            mul_scalar(t, add(t, mul(t, s.u, sp), mul(t, s.v, cp)), d.T));
  n.phi = add(t, s.phi, mul_scalar(t, s.r, d.T));
  n.x = add(t, s.x,
            mul_scalar(t, sub(t, mul(t, s.u, cp), mul(t, s.v, sp)), d.T));
  return n;
}

inline Tensor reference_y_tape(Tape& t, const Tensor& x) {
  Tensor a = mul_scalar(t, sin_op(t, mul_scalar(t, x, kPathK1)), 7.5);
  Tensor b = mul_scalar(t, sin_op(t, mul_scalar(t, x, kPathK2)), 2.5);
  Tensor c = mul_scalar(t, sin_op(t, mul_scalar(t, x, kPathK3)), -5.0);
  return add(t, add(t, a, b), c);
}

inline Tensor reference_phi_tape(Tape& t, const Tensor& x) {
  Tensor a = mul_scalar(t, cos_op(t, mul_scalar(t, x, kPathK1)), 7.5 * kPathK1);
  Tensor b = mul_scalar(t, cos_op(t, mul_scalar(t, x, kPathK2)), 2.5 * kPathK2);
  Tensor c = mul_scalar(t, cos_op(t, mul_scalar(t, x, kPathK3)), -5.0 * kPathK3);
  return atan_op(t, add(t, add(t, a, b), c));
}

// Tracking reward over observation columns; the prior keeps raw y, phi in
// the deviation slots (straight-line reference), the oracle keeps true
// deviations, so the one formula serves both.
inline Tensor vehicle_reward_tape(Tape& t, const Tensor& obs, const Tensor& act) {
  Tensor a0 = mul_scalar(t, square(t, col(t, obs, 0)), -0.01);
  Tensor a1 = mul_scalar(t, square(t, col(t, obs, 3)), -0.04);
  Tensor a2 = mul_scalar(t, square(t, col(t, obs, 4)), -0.1);
  Tensor a3 = mul_scalar(t, square(t, col(t, obs, 2)), -0.02);
  Tensor a4 = mul_scalar(t, square(t, col(t, act, 0)), -5.0);
  Tensor a5 = mul_scalar(t, square(t, col(t, act, 1)), -0.05);
  return add(t, add(t, add(t, add(t, add(t, a0, a1), a2), a3), a4), a5);
}

struct PendulumCols {
  Tensor x, th, xd, thd;
};

inline PendulumCols pendulum_substep_tape(Tape& t, const PendulumCols& s,
                                          const Tensor& force,
                                          const PendulumDerived& d) {
  Tensor st = sin_op(t, s.th), ct = cos_op(t, s.th);
  Tensor d01 = mul_scalar(t, ct, d.c_pole);
  Tensor z0 = add(
      t, mul_scalar(t, mul(t, mul(t, s.thd, s.thd), st), d.c_pole), force);
  Tensor z1 = mul_scalar(t, st, d.c_zg);
  Tensor det = add_scalar(t, mul_scalar(t, mul(t, d01, d01), -1.0),
                          d.c_d00 * d.c_d11);
  if (det.mat().cwiseAbs().minCoeff() < 1e-10) {
    throw SimulatorFault("pendulum model: singular mass matrix");
  }
  Tensor xdd = div(t, sub(t, mul_scalar(t, z0, d.c_d11), mul(t, d01, z1)), det);
  Tensor thdd = div(t, sub(t, mul_scalar(t, z1, d.c_d00), mul(t, d01, z0)), det);
  PendulumCols n;
  n.x = add(t, s.x, mul_scalar(t, s.xd, d.T));
  n.th = add(t, s.th, mul_scalar(t, s.thd, d.T));
  n.xd = clamp_op(t, add(t, s.xd, mul_scalar(t, xdd, d.T)), -d.xd_cap, d.xd_cap);
  n.thd = clamp_op(t, add(t, s.thd, mul_scalar(t, thdd, d.T)), -d.thd_cap,
                   d.thd_cap);
  return n;
}

inline Mat column_noise(Eigen::Index rows, double mean, double stddev,
                        std::mt19937_64* rng) {
  Mat m(rows, 1);
  for (Eigen::Index i = 0; i < rows; ++i) m(i, 0) = normal(*rng, mean, stddev);
  return m;
}

}  // namespace detail

/// Prior vehicle model: tracks a straight line (the deviation slots hold raw
/// y and phi), integrates one Euler step at the sampling period, and adds a
/// biased Gaussian to the lateral position. Mean/variance (0.5, 0.01).
class VehiclePriorModel final : public DiffModel {
 public:
  VehiclePriorModel() = default;
  explicit VehiclePriorModel(VehicleParams p) : params_(p) {}

  int obs_dim() const override { return 6; }
  int act_dim() const override { return 2; }

  double noise_mean() const { return noise_mean_; }
  double noise_std() const { return noise_std_; }
  void set_noise(double mean, double stddev) {
    noise_mean_ = mean;
    noise_std_ = stddev;
  }

  Tensor step(Tape& t, const Tensor& obs, const Tensor& act,
              std::mt19937_64* rng) const override {
    VehicleDerived d(params_, 1.0 / params_.f_sam);
    detail::VehicleCols s;
    s.u = add_scalar(t, col(t, obs, 0), params_.u_ref);
    s.v = col(t, obs, 1);
    s.r = col(t, obs, 2);
    s.y = col(t, obs, 3);
    s.phi = col(t, obs, 4);
    s.x = col(t, obs, 5);
    detail::VehicleCols n = detail::vehicle_substep_tape(
        t, s, col(t, act, 0), col(t, act, 1), params_, d);
    Tensor y = n.y;
    if (rng != nullptr) {
      y = add(t, y, constant(detail::column_noise(obs.rows(), noise_mean_,
                                                  noise_std_, rng)));
    }
    return hcat(t, {add_scalar(t, n.u, -params_.u_ref), n.v, n.r, y, n.phi, n.x});
  }

  Tensor reward(Tape& t, const Tensor& obs, const Tensor& act) const override {
    return detail::vehicle_reward_tape(t, obs, act);
  }

  std::unique_ptr<DiffModel> clone() const override {
    return std::make_unique<VehiclePriorModel>(*this);
  }

 private:
  VehicleParams params_;
  double noise_mean_ = 0.5;
  double noise_std_ = 0.1;  // variance 0.01
};

/// The true vehicle dynamics wrapped as a differentiable model: observation
/// deviations are lifted to raw states through the reference path, stepped at
/// the system frequency, and mapped back. Used by the exact-decomposition and
/// bias checks where the model must equal the simulator.
class VehicleOracleModel final : public DiffModel {
 public:
  VehicleOracleModel() = default;
  explicit VehicleOracleModel(VehicleParams p) : params_(p) {}

  int obs_dim() const override { return 6; }
  int act_dim() const override { return 2; }

  Tensor step(Tape& t, const Tensor& obs, const Tensor& act,
              std::mt19937_64*) const override {
    VehicleDerived d(params_, 1.0 / params_.f_sys);
    int substeps = static_cast<int>(std::lround(params_.f_sys / params_.f_sam));
    detail::VehicleCols s;
    s.u = add_scalar(t, col(t, obs, 0), params_.u_ref);
    s.v = col(t, obs, 1);
    s.r = col(t, obs, 2);
    Tensor x0 = col(t, obs, 5);
    s.y = add(t, col(t, obs, 3), detail::reference_y_tape(t, x0));
    s.phi = add(t, col(t, obs, 4), detail::reference_phi_tape(t, x0));
    s.x = x0;
    Tensor delta = col(t, act, 0), acc = col(t, act, 1);
    for (int i = 0; i < substeps; ++i)
      s = detail::vehicle_substep_tape(t, s, delta, acc, params_, d);
    Tensor dy = sub(t, s.y, detail::reference_y_tape(t, s.x));
    Tensor dphi = sub(t, s.phi, detail::reference_phi_tape(t, s.x));
    return hcat(t, {add_scalar(t, s.u, -params_.u_ref), s.v, s.r, dy, dphi, s.x});
  }

  Tensor reward(Tape& t, const Tensor& obs, const Tensor& act) const override {
    return detail::vehicle_reward_tape(t, obs, act);
  }

  std::unique_ptr<DiffModel> clone() const override {
    return std::make_unique<VehicleOracleModel>(*this);
  }

 private:
  VehicleParams params_;
};

/// Prior pendulum model: one Euler step at the sampling period plus a biased
/// Gaussian on the cart position, mean/variance (0.1, 0.5), and a reward with
/// the velocity penalties reduced to 0.001.
class PendulumPriorModel final : public DiffModel {
 public:
  PendulumPriorModel() = default;
  explicit PendulumPriorModel(PendulumParams p) : params_(p) {}

  int obs_dim() const override { return 4; }
  int act_dim() const override { return 1; }

  double noise_mean() const { return noise_mean_; }
  double noise_std() const { return noise_std_; }
  void set_noise(double mean, double stddev) {
    noise_mean_ = mean;
    noise_std_ = stddev;
  }

  Tensor step(Tape& t, const Tensor& obs, const Tensor& act,
              std::mt19937_64* rng) const override {
    PendulumDerived d(params_, 1.0 / params_.f_sam);
    detail::PendulumCols s{col(t, obs, 0), col(t, obs, 1), col(t, obs, 2),
                           col(t, obs, 3)};
    detail::PendulumCols n =
        detail::pendulum_substep_tape(t, s, col(t, act, 0), d);
    Tensor x = n.x;
    if (rng != nullptr) {
      x = add(t, x, constant(detail::column_noise(obs.rows(), noise_mean_,
                                                  noise_std_, rng)));
    }
    return hcat(t, {x, n.th, n.xd, n.thd});
  }

  Tensor reward(Tape& t, const Tensor& obs, const Tensor& act) const override {
    (void)act;
    Tensor a0 = mul_scalar(t, square(t, col(t, obs, 0)), -0.01);
    Tensor a1 = mul_scalar(t, square(t, col(t, obs, 1)), -1.0);
    Tensor a2 = mul_scalar(t, square(t, col(t, obs, 2)), -0.001);
    Tensor a3 = mul_scalar(t, square(t, col(t, obs, 3)), -0.001);
    return add(t, add(t, add(t, a0, a1), a2), a3);
  }

  std::unique_ptr<DiffModel> clone() const override {
    return std::make_unique<PendulumPriorModel>(*this);
  }

 private:
  PendulumParams params_;
  double noise_mean_ = 0.1;
  double noise_std_ = 0.7071067811865475244;  // sqrt(0.5)
};

/// True pendulum dynamics on tape: system-frequency substeps, true reward.
class PendulumOracleModel final : public DiffModel {
 public:
  PendulumOracleModel() = default;
  explicit PendulumOracleModel(PendulumParams p) : params_(p) {}

  int obs_dim() const override { return 4; }
  int act_dim() const override { return 1; }

  Tensor step(Tape& t, const Tensor& obs, const Tensor& act,
              std::mt19937_64*) const override {
    PendulumDerived d(params_, 1.0 / params_.f_sys);
    int substeps = static_cast<int>(std::lround(params_.f_sys / params_.f_sam));
    detail::PendulumCols s{col(t, obs, 0), col(t, obs, 1), col(t, obs, 2),
                           col(t, obs, 3)};
    Tensor force = col(t, act, 0);
    for (int i = 0; i < substeps; ++i)
      s = detail::pendulum_substep_tape(t, s, force, d);
    return hcat(t, {s.x, s.th, s.xd, s.thd});
  }

  Tensor reward(Tape& t, const Tensor& obs, const Tensor& act) const override {
    (void)act;
    Tensor a0 = mul_scalar(t, square(t, col(t, obs, 0)), -0.01);
    Tensor a1 = mul_scalar(t, square(t, col(t, obs, 1)), -1.0);
    Tensor a2 = mul_scalar(t, square(t, col(t, obs, 2)), -0.1);
    Tensor a3 = mul_scalar(t, square(t, col(t, obs, 3)), -0.1);
    return add(t, add(t, add(t, a0, a1), a2), a3);
  }

  std::unique_ptr<DiffModel> clone() const override {
    return std::make_unique<PendulumOracleModel>(*this);
  }

 private:
  PendulumParams params_;
};

inline std::unique_ptr<DiffModel> make_prior_model(const std::string& task,
                                                   const VehicleParams& vp,
                                                   const PendulumParams& pp) {
  if (task == "path_tracking") return std::make_unique<VehiclePriorModel>(vp);
  if (task == "inverted_pendulum")
    return std::make_unique<PendulumPriorModel>(pp);
  throw EnvError("make_prior_model: unknown task '" + task + "'");
}

inline std::unique_ptr<DiffModel> make_oracle_model(const std::string& task,
                                                    const VehicleParams& vp,
                                                    const PendulumParams& pp) {
  if (task == "path_tracking") return std::make_unique<VehicleOracleModel>(vp);
  if (task == "inverted_pendulum")
    return std::make_unique<PendulumOracleModel>(pp);
  throw EnvError("make_oracle_model: unknown task '" + task + "'");
}

}  // namespace mpg
