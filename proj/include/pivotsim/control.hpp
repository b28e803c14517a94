#pragma once

// PI yaw-rate loop on a low-pass filtered rate, ramped rate reference, and an
// outer yaw-angle loop that produces the rate command.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include "pivotsim/errors.hpp"
#include "pivotsim/so3.hpp"
#include "pivotsim/units.hpp"

namespace pivotsim {

struct LowPassState {
  double time_constant_s = 0.4;
  double y = 0.0;
};

/// y <- y + a (x - y), a = dt / (tau + dt)
inline double lowpass_step(LowPassState& lp, double x, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "time step must be positive");
  const double alpha = dt / (lp.time_constant_s + dt);
  lp.y += alpha * (x - lp.y);
  return lp.y;
}

struct RateReference {
  double target = 0.0;     // rad/s
  double ramp_rate = 0.0;  // rad/s^2
  double current = 0.0;    // rad/s
};

/// Slew `current` toward `target` by at most |ramp_rate| dt, landing exactly on it.
inline double ramp_step(RateReference& ref, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "time step must be positive");
  const double gap = ref.target - ref.current;
  const double max_move = std::abs(ref.ramp_rate) * dt;
  if (std::abs(gap) <= max_move) {
    ref.current = ref.target;
  } else {
    ref.current += std::copysign(max_move, gap);
  }
  return ref.current;
}

struct PiGains {
  double kp = 0.0;  // output per unit error
  double ki = 0.0;  // output per unit integrated error
  double integrator = 0.0;
  std::optional<double> limit;  // symmetric output saturation
};

/// u = kp e + integral(ki e dt). While the output saturates the integrator
/// is frozen (conditional integration).
inline double pi_update(PiGains& pi, double error, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "time step must be positive");
  const double candidate = pi.integrator + pi.ki * error * dt;
  const double u = pi.kp * error + candidate;
  if (pi.limit && std::abs(u) > *pi.limit) {
    return std::clamp(pi.kp * error + pi.integrator, -*pi.limit, *pi.limit);
  }
  pi.integrator = candidate;
  return u;
}

/// Pivot torque [N m] from the rate reference and filtered rate [rad/s].
inline double pi_step(PiGains& gains, double omega_ref, double omega_filtered, double dt) {
  return pi_update(gains, omega_ref - omega_filtered, dt);
}

/// Wrap to (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

/// Heading of the body x axis about the inertial z axis. For a pure yaw
/// C_bi = exp_rotvec(-psi e_z) this returns psi.
inline double yaw_angle(const RotationMatrix& c_bi) { return std::atan2(c_bi(0, 1), c_bi(0, 0)); }

inline constexpr double kMaxCommandedRate = units::deg2rad(30.0);

/// Outer angle loop: yaw error -> commanded yaw rate, clamped to +-30 deg/s.
/// `outer.limit` is forced to the rate clamp so the integrator cannot wind up.
inline double angle_loop_step(PiGains& outer, double psi_ref, double psi_hat, double dt) {
  if (!outer.limit || *outer.limit > kMaxCommandedRate) outer.limit = kMaxCommandedRate;
  return pi_update(outer, wrap_angle(psi_ref - psi_hat), dt);
}

/// Inner PI with its input filter; owned by the scenario loop.
class YawRateController {
 public:
  YawRateController(PiGains gains, double lowpass_tau_s, double initial_rate = 0.0)
      : gains_(gains), lowpass_{lowpass_tau_s, initial_rate} {}

  struct Output {
    double filtered = 0.0;
    double error = 0.0;
    double torque = 0.0;
  };

  Output step(double omega_ref, double omega_measured, double dt) {
    Output o;
    o.filtered = lowpass_step(lowpass_, omega_measured, dt);
    o.error = omega_ref - o.filtered;
    o.torque = pi_step(gains_, omega_ref, o.filtered, dt);
    return o;
  }

  const PiGains& gains() const { return gains_; }

 private:
  PiGains gains_;
  LowPassState lowpass_;
};

}  // namespace pivotsim
