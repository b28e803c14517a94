#pragma once

// Rotation-group primitives on 3x3 direction cosine matrices.
//
// Convention: C_bi maps inertial-frame coordinates into body-frame
// coordinates. exp_rotvec(theta) is the matrix exponential of theta^x, so a
// body that turns by +phi about axis a (actively) has C_bi = exp_rotvec(-phi*a),
// and Poisson's equation dC/dt = -omega^x C discretizes to
// C_{k+1} = exp_rotvec(-dt*omega) C_k.

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "pivotsim/errors.hpp"
#include "pivotsim/random.hpp"

namespace pivotsim {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using RotationMatrix = Eigen::Matrix3d;

namespace so3 {

inline constexpr double kSmallAngle = 1e-8;
inline constexpr double kNearPi = 1e-3;

/// Cross-product matrix: skew(v) * w == v.cross(w).
inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

/// Vector of the antisymmetric part of S; exact inverse of skew().
inline Vec3 unskew(const Mat3& s) {
  return 0.5 * Vec3(s(2, 1) - s(1, 2), s(0, 2) - s(2, 0), s(1, 0) - s(0, 1));
}

/// Rodrigues' formula 1 + sin(phi) a^x + (1 - cos(phi)) (a^x)^2.
/// Axes within 1e-6 of unit length are renormalized, others rejected.
inline RotationMatrix exp_rot(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (n < 1e-12) {
    if (angle == 0.0) return Mat3::Identity();
    throw Error(ErrorCode::ZeroAxis, "rotation axis has zero length");
  }
  if (std::abs(n - 1.0) >= 1e-6) {
    throw Error(ErrorCode::InvalidAxis, "rotation axis norm " + std::to_string(n) + " is not unit");
  }
  const Mat3 a = skew(axis / n);
  return Mat3::Identity() + std::sin(angle) * a + (1.0 - std::cos(angle)) * (a * a);
}

/// exp(theta^x), switching to the second-order series below 1e-8 rad.
inline RotationMatrix exp_rotvec(const Vec3& theta) {
  const double phi = theta.norm();
  const Mat3 t = skew(theta);
  if (phi < kSmallAngle) {
    return Mat3::Identity() + t + 0.5 * (t * t);
  }
  const Mat3 a = t / phi;
  return Mat3::Identity() + std::sin(phi) * a + (1.0 - std::cos(phi)) * (a * a);
}

/// Rotation angle in [0, pi]. Computed from atan2(|unskew(C)|, (tr C - 1)/2),
/// which equals acos(clamp((tr C - 1)/2)) on SO(3) without the loss of
/// precision acos suffers near 0 and pi.
inline double rotation_angle(const RotationMatrix& c) {
  const double cos_phi = std::clamp(0.5 * (c.trace() - 1.0), -1.0, 1.0);
  const double sin_phi = unskew(c).norm();
  return std::atan2(sin_phi, cos_phi);
}

/// Rotation vector theta with exp_rotvec(theta) == C.
inline Vec3 log_rot(const RotationMatrix& c) {
  const double phi = rotation_angle(c);
  const Vec3 v = unskew(c);  // sin(phi) * axis
  if (phi < kSmallAngle) {
    return v;
  }
  if (phi < std::numbers::pi - kNearPi) {
    return (phi / std::sin(phi)) * v;
  }
  // Near pi the antisymmetric part vanishes; recover the axis from
  // a a^T = (sym(C) - cos(phi) 1) / (1 - cos(phi)).
  const double cos_phi = std::cos(phi);
  const Mat3 aat = (0.5 * (c + c.transpose()) - cos_phi * Mat3::Identity()) / (1.0 - cos_phi);
  Eigen::Index k = 0;
  aat.diagonal().maxCoeff(&k);
  Vec3 axis = aat.col(k) / std::sqrt(std::max(aat(k, k), 1e-300));
  axis.normalize();
  if (axis.dot(v) < 0.0) axis = -axis;
  return phi * axis;
}

inline bool is_rotation(const Mat3& c, double tol = 1e-9) {
  const Mat3 e = c * c.transpose() - Mat3::Identity();
  return e.cwiseAbs().maxCoeff() <= tol && std::abs(c.determinant() - 1.0) <= tol;
}

/// Largest entry of |C C^T - 1|.
inline double orthogonality_error(const Mat3& c) {
  return (c * c.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
}

/// Nearest rotation (polar factor). Rejects reflections and singular input.
inline RotationMatrix project_to_so3(const Mat3& m) {
  if (!(m.determinant() > 0.0)) {
    throw Error(ErrorCode::Degenerate, "matrix determinant is not positive");
  }
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

/// Multiplicative noise rotation exp(-dxi^x) with dxi ~ N(0, diag(sigma^2)).
inline RotationMatrix small_noise_rotation(const Vec3& sigma, NormalStream& normal) {
  const Vec3 dxi = sigma.cwiseProduct(normal.vec3());
  return exp_rotvec(-dxi);
}

/// Same draw for a full covariance.
inline RotationMatrix small_noise_rotation(const Gaussian3& noise, NormalStream& normal) {
  return exp_rotvec(-noise.sample(normal));
}

}  // namespace so3
}  // namespace pivotsim
