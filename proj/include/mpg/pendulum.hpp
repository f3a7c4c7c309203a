#pragma once

#include <algorithm>
#include <cmath>

#include "mpg/vehicle.hpp"  // SimulatorFault

namespace mpg {

/// Cart-pole rigid body dynamics, pole angle measured from upright.
///
/// The mass matrix is nearly singular at theta = 0 (det ~ 1.3), so the
/// upright instability rate is ~21.6 rad/s. Two practical consequences: the
/// force bound must comfortably exceed the spec of a toy cart-pole for the
/// reset set to be recoverable, and explicit Euler at these rates pumps
/// unbounded energy into spinning-pole states. The velocity saturations
/// bound that numerical channel; they sit well outside the physically
/// reachable envelope (energy caps the swing rate at ~30.5 rad/s), so
/// trajectories that stay physical never touch them.
struct PendulumParams {
  double m1 = 9.42;     // cart mass [kg]
  double m2 = 4.89;     // pole mass [kg]
  double l = 0.6;       // pole length [m]
  double g = 9.81;      // gravity [m/s^2]
  double f_sam = 25.0;  // sampling frequency [Hz]
  double f_sys = 50.0;  // system frequency [Hz]
  double force_bound = 20.0;  // |F| [N]
  double xd_bound = 100.0;    // |cart velocity| saturation [m/s]
  double thd_bound = 50.0;    // |pole rate| saturation [rad/s]
};

struct PendulumState {
  double x = 0, th = 0, xd = 0, thd = 0;
};

// Shared constants of the mass matrix and forcing terms; see VehicleDerived
// for why both integration paths read the same values.
struct PendulumDerived {
  double T;
  double c_pole;   // (m1/2 + m2) * l
  double c_d00;    // m1 + m2
  double c_d11;    // (m1/3 + m2) * l / 2
  double c_zg;     // (m1/2 + m2) * l * g
  double xd_cap;
  double thd_cap;

  PendulumDerived(const PendulumParams& p, double dt)
      : T(dt),
        c_pole((p.m1 / 2.0 + p.m2) * p.l),
        c_d00(p.m1 + p.m2),
        c_d11((p.m1 / 3.0 + p.m2) * p.l / 2.0),
        c_zg((p.m1 / 2.0 + p.m2) * p.l * p.g),
        xd_cap(p.xd_bound),
        thd_cap(p.thd_bound) {}
};

/// One Euler substep: positions advance with the old velocities, velocities
/// with the mass-matrix solve D * [xdd, thdd] = z.
inline PendulumState pendulum_substep(const PendulumState& s, double force,
                                      const PendulumDerived& d) {
  double st = std::sin(s.th), ct = std::cos(s.th);
  double d01 = d.c_pole * ct;
  double z0 = ((s.thd * s.thd) * st) * d.c_pole + force;
  double z1 = st * d.c_zg;
  double det = (d01 * d01) * -1.0 + d.c_d00 * d.c_d11;
  if (std::abs(det) < 1e-10) {
    throw SimulatorFault("pendulum_substep: singular mass matrix");
  }
  double xdd = (z0 * d.c_d11 - d01 * z1) / det;
  double thdd = (z1 * d.c_d00 - d01 * z0) / det;
  PendulumState n;
  n.x = s.x + s.xd * d.T;
  n.th = s.th + s.thd * d.T;
  n.xd = std::clamp(s.xd + xdd * d.T, -d.xd_cap, d.xd_cap);
  n.thd = std::clamp(s.thd + thdd * d.T, -d.thd_cap, d.thd_cap);
  return n;
}

/// One environment step: f_sys/f_sam substeps at T = 1/f_sys.
inline PendulumState pendulum_step(const PendulumState& s, double force,
                                   const PendulumParams& p) {
  PendulumDerived d(p, 1.0 / p.f_sys);
  int substeps = static_cast<int>(std::lround(p.f_sys / p.f_sam));
  PendulumState cur = s;
  for (int i = 0; i < substeps; ++i) cur = pendulum_substep(cur, force, d);
  return cur;
}

inline double pendulum_reward(const PendulumState& s) {
  double a0 = (s.x * s.x) * -0.01;
  double a1 = (s.th * s.th) * -1.0;
  double a2 = (s.xd * s.xd) * -0.1;
  double a3 = (s.thd * s.thd) * -0.1;
  return ((a0 + a1) + a2) + a3;
}

}  // namespace mpg
