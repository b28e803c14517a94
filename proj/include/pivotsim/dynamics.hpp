#pragma once

// Ground-truth rigid-body model of a gondola hanging from a motorized pivot.
//
// Body rates follow Euler's equations I w' + w x (I w) = tau_ext with
//   tau_ext = gravity + pivot control + viscous damping + Coulomb + noise,
// integrated by the RK2 midpoint rule. Attitude is advanced on SO(3) by the
// exponential map with a multiplicative attitude-noise rotation.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pivotsim/errors.hpp"
#include "pivotsim/random.hpp"
#include "pivotsim/so3.hpp"

namespace pivotsim {

struct InertiaModel {
  Mat3 inertia = Mat3::Identity();      // kg m^2 about the pivot, body frame
  double mass_kg = 1.0;
  Vec3 r_cm = Vec3(0.0, 0.0, -1.0);     // pivot -> COM, body frame [m]
  Vec3 gravity = Vec3(0.0, 0.0, -9.81); // inertial frame [m/s^2]

  void validate() const {
    if (!inertia.allFinite() || (inertia - inertia.transpose()).cwiseAbs().maxCoeff() > 1e-9) {
      throw Error(ErrorCode::ValidationError, "inertia matrix must be finite and symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(inertia);
    if (eig.eigenvalues().minCoeff() <= 0.0) {
      throw Error(ErrorCode::SingularInertia, "inertia matrix is not positive definite");
    }
    if (!(mass_kg > 0.0) || !std::isfinite(mass_kg)) {
      throw Error(ErrorCode::ValidationError, "mass must be positive");
    }
    if (!(r_cm.norm() > 0.0) || !r_cm.allFinite()) {
      throw Error(ErrorCode::ValidationError, "pivot-to-COM arm must be nonzero");
    }
  }
};

struct DisturbanceModel {
  Mat3 damping = Mat3::Zero();           // N m s / rad
  double coulomb_Nm = 0.0;               // c_z
  double coulomb_smoothing_rad_s = 1e-2; // omega_eps
  Mat3 torque_cov = Mat3::Zero();        // per-step torque noise covariance (N m)^2
  Mat3 attitude_cov = Mat3::Zero();      // per-step attitude noise covariance rad^2

  void validate() const {
    auto psd = [](const Mat3& m) {
      Eigen::SelfAdjointEigenSolver<Mat3> eig(0.5 * (m + m.transpose()));
      return m.allFinite() && eig.eigenvalues().minCoeff() >= -1e-12;
    };
    if (!psd(damping)) throw Error(ErrorCode::ValidationError, "damping must be positive semidefinite");
    if (!(coulomb_Nm >= 0.0)) throw Error(ErrorCode::ValidationError, "coulomb level must be >= 0");
    if (!(coulomb_smoothing_rad_s > 0.0)) {
      throw Error(ErrorCode::ValidationError, "coulomb smoothing rate must be > 0");
    }
    if (!psd(torque_cov) || !psd(attitude_cov)) {
      throw Error(ErrorCode::ValidationError, "noise covariances must be positive semidefinite");
    }
  }
};

struct RigidBodyState {
  RotationMatrix C_bi = Mat3::Identity();
  Vec3 omega = Vec3::Zero();  // body rates [rad/s]
  double t = 0.0;
  std::uint64_t steps = 0;
};

/// Independent streams for the two process-noise sources.
struct ProcessNoise {
  Gaussian3 torque;
  Gaussian3 attitude;
  NormalStream torque_stream;
  NormalStream attitude_stream;

  ProcessNoise() = default;
  ProcessNoise(const DisturbanceModel& d, std::uint64_t seed)
      : torque(d.torque_cov),
        attitude(d.attitude_cov),
        torque_stream(seed, "torque"),
        attitude_stream(seed, "attitude") {}
};

inline constexpr std::uint64_t kReprojectEvery = 10000;

inline Vec3 gravity_torque(const RotationMatrix& c_bi, const InertiaModel& model) {
  return model.r_cm.cross(model.mass_kg * (c_bi * model.gravity));
}

inline Vec3 coulomb_torque(double omega_z, const DisturbanceModel& d) {
  return {0.0, 0.0, -d.coulomb_Nm * std::tanh(omega_z / d.coulomb_smoothing_rad_s)};
}

/// State-dependent torques plus the pivot torque; excludes the random term.
inline Vec3 deterministic_torque(const RotationMatrix& c_bi, const Vec3& omega,
                                 const InertiaModel& model, const DisturbanceModel& d,
                                 double tau_piv) {
  return gravity_torque(c_bi, model) + Vec3(0.0, 0.0, tau_piv) - d.damping * omega +
         coulomb_torque(omega.z(), d);
}

inline Vec3 total_torque(const RigidBodyState& s, const InertiaModel& model,
                         const DisturbanceModel& d, double tau_piv, ProcessNoise& noise) {
  return deterministic_torque(s.C_bi, s.omega, model, d, tau_piv) +
         noise.torque.sample(noise.torque_stream);
}

namespace detail {

inline Mat3 checked_inverse(const Mat3& inertia) {
  Mat3 inv;
  bool ok = false;
  double det = 0.0;
  inertia.computeInverseAndDetWithCheck(inv, det, ok, 1e-12 * std::pow(inertia.norm(), 3));
  if (!ok || !inv.allFinite()) {
    throw Error(ErrorCode::SingularInertia, "inertia matrix is not invertible");
  }
  return inv;
}

inline Vec3 euler_rate_with(const Mat3& inertia, const Mat3& inertia_inv, const Vec3& omega,
                            const Vec3& torque) {
  return inertia_inv * (torque - omega.cross(inertia * omega));
}

}  // namespace detail

/// omega' = I^-1 (tau - omega x I omega)
inline Vec3 euler_rate(const Vec3& omega, const Vec3& torque, const InertiaModel& model) {
  return detail::euler_rate_with(model.inertia, detail::checked_inverse(model.inertia), omega, torque);
}

/// Result of one integration step. `mean_rate` is the body rate that rotated
/// the attitude over the step; an integrating rate gyro reports this value.
struct Increment {
  RigidBodyState next;
  Vec3 mean_rate = Vec3::Zero();
};

/// One RK2 midpoint step. Control and noise torques are held over the step;
/// gravity, damping and Coulomb terms are re-evaluated at the midpoint.
inline Increment advance(const RigidBodyState& s, const InertiaModel& model,
                         const DisturbanceModel& d, double tau_piv, double dt, ProcessNoise& noise) {
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "time step must be positive");
  const Mat3 inv = detail::checked_inverse(model.inertia);

  const Vec3 held = noise.torque.sample(noise.torque_stream);
  const Vec3 k1 = detail::euler_rate_with(
      model.inertia, inv, s.omega, deterministic_torque(s.C_bi, s.omega, model, d, tau_piv) + held);
  const Vec3 omega_mid = s.omega + 0.5 * dt * k1;
  const RotationMatrix c_mid = so3::exp_rotvec(-0.5 * dt * s.omega) * s.C_bi;
  const Vec3 k2 = detail::euler_rate_with(
      model.inertia, inv, omega_mid, deterministic_torque(c_mid, omega_mid, model, d, tau_piv) + held);

  Increment out;
  out.mean_rate = omega_mid;
  out.next.omega = s.omega + dt * k2;
  out.next.C_bi = so3::exp_rotvec(-dt * omega_mid) * s.C_bi;
  if (!noise.attitude.is_zero()) {
    out.next.C_bi = so3::small_noise_rotation(noise.attitude, noise.attitude_stream) * out.next.C_bi;
  }
  out.next.t = s.t + dt;
  out.next.steps = s.steps + 1;
  if (out.next.steps % kReprojectEvery == 0) {
    out.next.C_bi = so3::project_to_so3(out.next.C_bi);
  }
  return out;
}

inline RigidBodyState step(const RigidBodyState& s, const InertiaModel& model,
                           const DisturbanceModel& d, double tau_piv, double dt, ProcessNoise& noise) {
  return advance(s, model, d, tau_piv, dt, noise).next;
}

using TorqueProfile = std::function<double(double)>;

inline std::size_t step_count(double duration, double dt) {
  if (!(duration > 0.0)) throw Error(ErrorCode::InvalidArgument, "duration must be positive");
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "time step must be positive");
  return static_cast<std::size_t>(std::llround(duration / dt));
}

/// Trajectory of every step including the initial state.
inline std::vector<RigidBodyState> run_open_loop(const RigidBodyState& initial,
                                                 const InertiaModel& model,
                                                 const DisturbanceModel& d,
                                                 const TorqueProfile& tau_piv, double duration,
                                                 double dt, ProcessNoise& noise) {
  const std::size_t n = step_count(duration, dt);
  std::vector<RigidBodyState> traj;
  traj.reserve(n + 1);
  traj.push_back(initial);
  for (std::size_t k = 0; k < n; ++k) {
    const RigidBodyState& cur = traj.back();
    traj.push_back(step(cur, model, d, tau_piv ? tau_piv(cur.t) : 0.0, dt, noise));
  }
  return traj;
}

inline double kinetic_energy(const Vec3& omega, const InertiaModel& model) {
  return 0.5 * omega.dot(model.inertia * omega);
}

/// Angular momentum about the pivot expressed in the inertial frame.
inline Vec3 inertial_momentum(const RigidBodyState& s, const InertiaModel& model) {
  return s.C_bi.transpose() * (model.inertia * s.omega);
}

}  // namespace pivotsim
