#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace mpg {

struct SimulatorFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bicycle model with linear tire forces. Cornering stiffnesses are negative
/// by sign convention.
struct VehicleParams {
  double cf = -88000.0;  // front cornering stiffness [N/rad]
  double cr = -94000.0;  // rear cornering stiffness [N/rad]
  double a = 1.14;       // CG to front axle [m]
  double b = 1.40;       // CG to rear axle [m]
  double mass = 1500.0;  // [kg]
  double iz = 2420.0;    // yaw inertia [kg m^2]
  double f_sam = 10.0;   // sampling frequency [Hz]
  double f_sys = 200.0;  // system frequency [Hz]
  double u_ref = 20.0;   // desired longitudinal velocity [m/s]
  double delta_bound = 0.4;  // |front wheel angle| [rad]
  double acc_bound = 3.0;    // |longitudinal acceleration| [m/s^2]
};

struct VehicleState {
  double u = 0, v = 0, r = 0, y = 0, phi = 0, x = 0;
};

// Constants of the discretized dynamics for one integration rate. Both the
// plain simulator and the taped model read these same values so the two
// paths stay bitwise identical.
struct VehicleDerived {
  double T;
  double c_vr;     // T*(a*Cf - b*Cr)
  double c_tcf;    // T*Cf
  double c_tm;     // T*m
  double c_den_v;  // -T*(Cf + Cr)
  double c_tacf;   // T*a*Cf
  double c_den_r;  // T*(a^2*Cf + b^2*Cr)

  VehicleDerived(const VehicleParams& p, double dt)
      : T(dt),
        c_vr(dt * (p.a * p.cf - p.b * p.cr)),
        c_tcf(dt * p.cf),
        c_tm(dt * p.mass),
        c_den_v(-dt * (p.cf + p.cr)),
        c_tacf(dt * p.a * p.cf),
        c_den_r(dt * (p.a * p.a * p.cf + p.b * p.b * p.cr)) {}
};

/// One first-order Euler substep of the discretized bicycle dynamics.
inline VehicleState vehicle_substep(const VehicleState& s, double delta,
                                    double acc, const VehicleParams& p,
                                    const VehicleDerived& d) {
  double den_v = s.u * p.mass + d.c_den_v;
  double den_r = s.u * (-p.iz) + d.c_den_r;
  if (std::abs(den_v) < 1e-8 || std::abs(den_r) < 1e-8) {
    throw SimulatorFault("vehicle_substep: singular tire-dynamics denominator");
  }
  double du = delta * s.u;
  double sp = std::sin(s.phi), cp = std::cos(s.phi);
  VehicleState n;
  n.u = s.u + (acc + s.v * s.r) * d.T;
  n.v = ((((s.v * s.u) * p.mass + s.r * d.c_vr) - du * d.c_tcf) -
         ((s.u * s.u) * s.r) * d.c_tm) /
        den_v;
  n.r = (((s.r * s.u) * (-p.iz) - s.v * d.c_vr) + du * d.c_tacf) / den_r;
  n.y = s.y + (s.u * sp + s.v * cp) * d.T;
  n.phi = s.phi + s.r * d.T;
  n.x = s.x + (s.u * cp - s.v * sp) * d.T;
  return n;
}

/// One environment step: f_sys/f_sam substeps at T = 1/f_sys with the action
/// held constant. Actions are assumed already clamped.
inline VehicleState vehicle_step(const VehicleState& s, double delta,
                                 double acc, const VehicleParams& p) {
  VehicleDerived d(p, 1.0 / p.f_sys);
  int substeps = static_cast<int>(std::lround(p.f_sys / p.f_sam));
  VehicleState cur = s;
  for (int i = 0; i < substeps; ++i) cur = vehicle_substep(cur, delta, acc, p, d);
  return cur;
}

// Reference path: composition of three sine curves; heading from the
// analytic slope.
inline constexpr double kPathK1 = 6.283185307179586476925286766559 / 200.0;
inline constexpr double kPathK2 = 6.283185307179586476925286766559 / 300.0;
inline constexpr double kPathK3 = 6.283185307179586476925286766559 / 400.0;

struct ReferencePoint {
  double y_ref;
  double phi_ref;
};

inline double reference_y(double x) {
  double a = std::sin(x * kPathK1) * 7.5;
  double b = std::sin(x * kPathK2) * 2.5;
  double c = std::sin(x * kPathK3) * -5.0;
  return (a + b) + c;
}

inline double reference_slope(double x) {
  double a = std::cos(x * kPathK1) * (7.5 * kPathK1);
  double b = std::cos(x * kPathK2) * (2.5 * kPathK2);
  double c = std::cos(x * kPathK3) * (-5.0 * kPathK3);
  return (a + b) + c;
}

inline ReferencePoint reference_path(double x) {
  return ReferencePoint{reference_y(x), std::atan(reference_slope(x))};
}

/// Observation for learning: deviations from the reference plus raw v, r, x.
struct TrackingObs {
  double du = 0, v = 0, r = 0, dy = 0, dphi = 0, x = 0;
};

inline TrackingObs tracking_obs(const VehicleState& s, const VehicleParams& p) {
  ReferencePoint ref = reference_path(s.x);
  return TrackingObs{s.u - p.u_ref, s.v, s.r, s.y - ref.y_ref,
                     s.phi - ref.phi_ref, s.x};
}

inline VehicleState tracking_state(const TrackingObs& o, const VehicleParams& p) {
  ReferencePoint ref = reference_path(o.x);
  VehicleState s;
  s.u = o.du + p.u_ref;
  s.v = o.v;
  s.r = o.r;
  s.y = o.dy + ref.y_ref;
  s.phi = o.dphi + ref.phi_ref;
  s.x = o.x;
  return s;
}

inline double tracking_reward(const TrackingObs& o, double delta, double acc) {
  double a0 = (o.du * o.du) * -0.01;
  double a1 = (o.dy * o.dy) * -0.04;
  double a2 = (o.dphi * o.dphi) * -0.1;
  double a3 = (o.r * o.r) * -0.02;
  double a4 = (delta * delta) * -5.0;
  double a5 = (acc * acc) * -0.05;
  return ((((a0 + a1) + a2) + a3) + a4) + a5;
}

// Thresholds apply to absolute deviations, strict at the boundary.
inline constexpr double kTerminalDy = 3.0;
inline constexpr double kTerminalDphi = 0.78539816339744830961566084581988;  // pi/4
inline constexpr double kTerminalUMin = 2.0;
inline constexpr double kTerminalR = 0.8;

inline bool tracking_terminal(const TrackingObs& o, const VehicleParams& p) {
  double u = o.du + p.u_ref;
  return std::abs(o.dy) > kTerminalDy || std::abs(o.dphi) > kTerminalDphi ||
         u < kTerminalUMin || std::abs(o.r) > kTerminalR;
}

}  // namespace mpg
