#pragma once

// Multiplicative extended Kalman filter over {C_hat_bi, b_hat}.
//
// The 6-element error state is dx = [dtheta; db] where the estimate relates
// to truth by C_hat = exp(dtheta^x) C and db = b - b_hat is the bias
// correction. Corrections are applied as C_hat+ = exp(-dtheta^x) C_hat- and
// b_hat+ = b_hat- + db.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "pivotsim/errors.hpp"
#include "pivotsim/sensors.hpp"
#include "pivotsim/so3.hpp"

namespace pivotsim {

struct MekfState {
  RotationMatrix C_hat = Mat3::Identity();
  Vec3 b_hat = Vec3::Zero();
  Mat6 P = Mat6::Zero();
};

struct MekfTuning {
  Mat6 Q = Mat6::Zero();  // per-step process noise, G = 1
  Mat6 R = Mat6::Zero();  // diag(R_cam1, R_cam2): 3x3 block per camera
  Mat6 P0 = Mat6::Zero();
  RotationMatrix C_hat0 = Mat3::Identity();
  Vec3 b_hat0 = Vec3::Zero();

  MekfState initial_state() const { return {C_hat0, b_hat0, P0}; }

  Mat3 camera_noise(int camera) const {
    if (camera < 0 || camera > 1) throw Error(ErrorCode::InvalidArgument, "camera index out of range");
    return R.block<3, 3>(3 * camera, 3 * camera);
  }
};

struct VectorObservation {
  Vec3 y_body;      // measured
  Vec3 y_inertial;  // known reference
  Mat3 noise_cov;   // R block for this camera
};

struct ErrorRecord {
  double t = 0.0;
  Vec3 dtheta = Vec3::Zero();  // log(C_hat C^T) [rad]
  double angle = 0.0;          // [rad]
  Vec3 bias_err = Vec3::Zero();  // b_hat - b [rad/s]
};

inline Mat6 symmetrized(const Mat6& p) { return 0.5 * (p + p.transpose()); }

/// Dead-reckoning propagation with the bias-corrected gyro rate.
inline MekfState predict(const MekfState& s, const Vec3& omega_meas, double dt, const Mat6& Q) {
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "time step must be positive");
  const Vec3 w = omega_meas - s.b_hat;
  Mat6 F = Mat6::Identity();
  F.block<3, 3>(0, 0) -= dt * so3::skew(w);
  F.block<3, 3>(0, 3) = -dt * Mat3::Identity();

  MekfState out;
  out.C_hat = so3::exp_rotvec(-dt * w) * s.C_hat;
  out.b_hat = s.b_hat;
  out.P = symmetrized(F * s.P * F.transpose() + Q);
  return out;
}

/// Multiplicative attitude and additive bias correction.
inline MekfState apply_correction(const MekfState& s, const Vec6& dx) {
  MekfState out = s;
  out.C_hat = so3::exp_rotvec(-dx.head<3>()) * s.C_hat;
  out.b_hat = s.b_hat + dx.tail<3>();
  return out;
}

struct UpdateResult {
  MekfState state;
  Eigen::VectorXd residual;  // pre-update stacked y_b - y_hat
  Vec6 correction = Vec6::Zero();
};

inline constexpr double kMaxInnovationCondition = 1e12;

/// Stacked vector-measurement update; one 3-row block per observation.
inline UpdateResult update(const MekfState& prior, std::span<const VectorObservation> obs) {
  if (obs.empty()) throw Error(ErrorCode::InvalidArgument, "update needs at least one observation");
  const Eigen::Index m = 3 * static_cast<Eigen::Index>(obs.size());
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m, 6);
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd r(m);
  for (std::size_t j = 0; j < obs.size(); ++j) {
    const Eigen::Index row = 3 * static_cast<Eigen::Index>(j);
    const Vec3 y_hat = prior.C_hat * obs[j].y_inertial;
    r.segment<3>(row) = obs[j].y_body - y_hat;
    H.block<3, 3>(row, 0) = so3::skew(y_hat);
    R.block<3, 3>(row, row) = obs[j].noise_cov;
  }

  const Eigen::MatrixXd S = H * prior.P * H.transpose() + R;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (S + S.transpose()), Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > kMaxInnovationCondition) {
    throw Error(ErrorCode::SingularInnovation, "innovation covariance is numerically singular");
  }

  // K = P H^T S^-1, computed as (S^-1 H P)^T since S and P are symmetric.
  const Eigen::MatrixXd K = S.ldlt().solve(H * prior.P).transpose();
  UpdateResult out;
  out.residual = r;
  out.correction = K * r;
  out.state = apply_correction(prior, out.correction);
  out.state.P = symmetrized((Mat6::Identity() - K * H) * prior.P);
  return out;
}

inline ErrorRecord attitude_error(const RotationMatrix& c_hat, const RotationMatrix& c_true) {
  const Mat3 c_err = c_hat * c_true.transpose();
  ErrorRecord e;
  e.dtheta = so3::log_rot(c_err);
  e.angle = so3::rotation_angle(c_err);
  return e;
}

inline ErrorRecord evaluate_error(double t, const MekfState& s, const RotationMatrix& c_true,
                                  const Vec3& b_true) {
  ErrorRecord e = attitude_error(s.C_hat, c_true);
  e.t = t;
  e.bias_err = s.b_hat - b_true;
  return e;
}

/// Minimum eigenvalue of the symmetric part of P.
inline double min_eigenvalue(const Mat6& p) {
  Eigen::SelfAdjointEigenSolver<Mat6> eig(symmetrized(p), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

struct TruthSample {
  double t = 0.0;
  RotationMatrix C_bi = Mat3::Identity();
  Vec3 bias = Vec3::Zero();
};

struct FilterSample {
  MekfState state;
  ErrorRecord error;  // zero when no truth is supplied
  bool updated = false;
};

/// Covariance/attitude bookkeeping gathered while the filter runs.
struct FilterHygiene {
  double max_asymmetry = 0.0;
  double min_eigenvalue = std::numeric_limits<double>::infinity();
  double max_orthogonality_error = 0.0;
  double max_update_trace_increase = -std::numeric_limits<double>::infinity();
  std::size_t updates = 0;

  void observe(const MekfState& s, bool full) {
    max_asymmetry = std::max(max_asymmetry, (s.P - s.P.transpose()).cwiseAbs().maxCoeff());
    max_orthogonality_error = std::max(max_orthogonality_error, so3::orthogonality_error(s.C_hat));
    if (full) min_eigenvalue = std::min(min_eigenvalue, pivotsim::min_eigenvalue(s.P));
  }
};

/// Incremental filter driver: camera updates at a step are stacked and
/// applied before that step's gyro propagation.
class Mekf {
 public:
  Mekf(const MekfTuning& tuning, std::vector<Vec3> references)
      : tuning_(tuning), references_(std::move(references)), state_(tuning.initial_state()) {}

  /// Apply the observations collected at the current time (may be empty).
  bool correct(std::span<const CameraSample> cams) {
    if (cams.empty()) return false;
    std::vector<VectorObservation> obs;
    obs.reserve(cams.size());
    for (const auto& c : cams) {
      if (c.camera < 0 || static_cast<std::size_t>(c.camera) >= references_.size()) {
        throw Error(ErrorCode::InvalidArgument, "camera sample has no reference vector");
      }
      obs.push_back({c.direction, references_[c.camera], tuning_.camera_noise(c.camera)});
    }
    const double before = state_.P.trace();
    state_ = update(state_, obs).state;
    const double increase = state_.P.trace() - before;
    hygiene_.max_update_trace_increase = std::max(hygiene_.max_update_trace_increase, increase);
    ++hygiene_.updates;
    return true;
  }

  void propagate(const Vec3& omega_meas, double dt) { state_ = predict(state_, omega_meas, dt, tuning_.Q); }

  const MekfState& state() const { return state_; }
  FilterHygiene& hygiene() { return hygiene_; }
  const FilterHygiene& hygiene() const { return hygiene_; }

 private:
  MekfTuning tuning_;
  std::vector<Vec3> references_;
  MekfState state_;
  FilterHygiene hygiene_;
};

/// Replay a recorded stream. Gyro sample k propagates from t_k to t_k + dt
/// using the nominal step;
/// when `truth` is non-empty, truth[k + 1] is compared after that step, so
/// truth must hold one more sample than the gyro stream.
inline std::vector<FilterSample> run_filter(const MeasurementStream& stream, const MekfTuning& tuning,
                                            const std::vector<Vec3>& references,
                                            const std::vector<TruthSample>& truth, double dt,
                                            FilterHygiene* hygiene = nullptr,
                                            bool check_eigenvalues = false) {
  if (!truth.empty() && truth.size() != stream.gyro.size() + 1) {
    throw Error(ErrorCode::InvalidArgument, "truth must have one more sample than the gyro stream");
  }
  Mekf filter(tuning, references);
  std::vector<FilterSample> out;
  out.reserve(stream.gyro.size());
  std::size_t ci = 0;
  std::vector<CameraSample> pending;
  for (std::size_t k = 0; k < stream.gyro.size(); ++k) {
    const double t = stream.gyro[k].t;
    pending.clear();
    while (ci < stream.camera.size() && stream.camera[ci].t <= t + CameraClock::kTolerance) {
      pending.push_back(stream.camera[ci++]);
    }
    const bool updated = filter.correct(pending);
    filter.propagate(stream.gyro[k].rate, dt);
    filter.hygiene().observe(filter.state(), check_eigenvalues);

    FilterSample s;
    s.state = filter.state();
    s.updated = updated;
    if (!truth.empty()) {
      s.error = evaluate_error(truth[k + 1].t, s.state, truth[k + 1].C_bi, truth[k + 1].bias);
    } else {
      s.error.t = t + dt;
    }
    out.push_back(s);
  }
  if (hygiene) *hygiene = filter.hygiene();
  return out;
}

}  // namespace pivotsim
