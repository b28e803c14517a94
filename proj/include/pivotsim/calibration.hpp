#pragma once

// Gyro misalignment from constant-rate yaw spins and bias/noise
// characterization from static data, plus synthetic generators for both.
//
// Misalignment model: the gyro reports w_meas = exp(dtheta^x)^T w_al for a
// pure spin w_al = [0, 0, W]. To first order w_al - w_meas = -w_meas^x dtheta.
// A spin about z carries no information on dtheta_z, so only the x and y
// components are estimated and z is reported as 0 +- 0.

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "pivotsim/errors.hpp"
#include "pivotsim/random.hpp"
#include "pivotsim/so3.hpp"

namespace pivotsim {

struct TwirlDataset {
  std::vector<Vec3> rates;  // measured, rad/s

  void validate() const {
    if (rates.size() < 3) throw Error(ErrorCode::TooFewSamples, "twirl data needs at least 3 samples");
    for (const auto& w : rates) {
      if (!(w.norm() > 0.0)) throw Error(ErrorCode::ZeroRate, "twirl sample with zero rate");
    }
  }
};

struct AlignmentEstimate {
  Vec3 dtheta = Vec3::Zero();     // rad
  Vec3 std_error = Vec3::Zero();  // rad
  double residual_rms = 0.0;      // rad/s
  std::size_t samples = 0;
};

struct StaticCharacterization {
  Vec3 bias_hat = Vec3::Zero();   // rad/s
  Mat3 noise_cov = Mat3::Zero();  // per-sample (rad/s)^2
  Vec3 bias_std_error = Vec3::Zero();
  Mat3 noise_density = Mat3::Zero();  // noise_cov * dt, (rad/s)^2 s
  std::size_t samples = 0;
};

/// [0, 0, |w|]
inline Vec3 aligned_rate(const Vec3& w_meas) {
  const double n = w_meas.norm();
  if (!(n > 0.0)) throw Error(ErrorCode::ZeroRate, "aligned rate of a zero vector");
  return {0.0, 0.0, n};
}

/// Stacked -w^x blocks (3n x 3). The z column is w_x, w_y terms only, so it
/// vanishes for pure z spins.
inline Eigen::MatrixXd build_design_matrix(std::span<const Vec3> rates) {
  Eigen::MatrixXd a(3 * static_cast<Eigen::Index>(rates.size()), 3);
  for (std::size_t i = 0; i < rates.size(); ++i) {
    a.block<3, 3>(3 * static_cast<Eigen::Index>(i), 0) = -so3::skew(rates[i]);
  }
  return a;
}

/// Stacked w_al - w_meas.
inline Eigen::VectorXd build_observation_vector(std::span<const Vec3> rates) {
  Eigen::VectorXd b(3 * static_cast<Eigen::Index>(rates.size()));
  for (std::size_t i = 0; i < rates.size(); ++i) {
    b.segment<3>(3 * static_cast<Eigen::Index>(i)) = aligned_rate(rates[i]) - rates[i];
  }
  return b;
}

struct LeastSquaresSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd std_error;
  Eigen::VectorXd residual;  // A x - b
  double rss = 0.0;
  double condition = 0.0;
};

inline constexpr double kMaxNormalCondition = 1e10;

/// x = (A^T A)^-1 A^T b; standard errors sqrt(diag(s2 (A^T A)^-1)) with
/// s2 = RSS / dof (dof defaults to rows - cols).
inline LeastSquaresSolution solve_least_squares(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                                std::optional<double> dof = std::nullopt) {
  if (a.rows() != b.size()) throw Error(ErrorCode::InvalidArgument, "A and b row counts differ");
  if (a.rows() < a.cols() || a.cols() == 0) {
    throw Error(ErrorCode::RankDeficient, "fewer equations than unknowns");
  }
  const Eigen::MatrixXd n = a.transpose() * a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(n, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  LeastSquaresSolution s;
  s.condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(s.condition <= kMaxNormalCondition)) {
    throw Error(ErrorCode::RankDeficient, "normal matrix condition number exceeds 1e10");
  }
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(n);
  s.x = ldlt.solve(a.transpose() * b);
  s.residual = a * s.x - b;
  s.rss = s.residual.squaredNorm();
  const double d = dof.value_or(static_cast<double>(a.rows() - a.cols()));
  const double s2 = d > 0.0 ? s.rss / d : 0.0;
  const Eigen::MatrixXd cov = s2 * ldlt.solve(Eigen::MatrixXd::Identity(a.cols(), a.cols()));
  s.std_error = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  return s;
}

/// Least-squares misalignment from twirl data. Only the rows and columns
/// transverse to the spin axis enter the fit: the axial rows carry second-
/// order information only, and the axial component is unobservable.
inline AlignmentEstimate solve_alignment(const TwirlDataset& data) {
  data.validate();
  const Eigen::MatrixXd full = build_design_matrix(data.rates);
  const Eigen::VectorXd b_full = build_observation_vector(data.rates);
  const auto n = static_cast<Eigen::Index>(data.rates.size());
  Eigen::MatrixXd a(2 * n, 2);
  Eigen::VectorXd b(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a.block<2, 2>(2 * i, 0) = full.block<2, 2>(3 * i, 0);
    b.segment<2>(2 * i) = b_full.segment<2>(3 * i);
  }
  const LeastSquaresSolution s = solve_least_squares(a, b);
  AlignmentEstimate est;
  est.dtheta = Vec3(s.x(0), s.x(1), 0.0);
  est.std_error = Vec3(s.std_error(0), s.std_error(1), 0.0);
  est.residual_rms = std::sqrt(s.rss / static_cast<double>(2 * n));
  est.samples = data.rates.size();
  return est;
}

inline constexpr std::size_t kMinStaticSamples = 100;

/// Bias = sample mean, noise covariance = sample covariance (n - 1) of the
/// residuals. Earth rate (at most ~0.0042 deg/s projected) stays in the bias.
inline StaticCharacterization characterize_static(std::span<const Vec3> samples, double dt) {
  if (samples.size() < kMinStaticSamples) {
    throw Error(ErrorCode::TooFewSamples, "static characterization needs at least 100 samples");
  }
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "sample period must be positive");
  StaticCharacterization c;
  c.samples = samples.size();
  const double n = static_cast<double>(samples.size());
  for (const auto& s : samples) c.bias_hat += s;
  c.bias_hat /= n;
  for (const auto& s : samples) {
    const Vec3 r = s - c.bias_hat;
    c.noise_cov += r * r.transpose();
  }
  c.noise_cov /= n - 1.0;
  c.noise_cov = 0.5 * (c.noise_cov + c.noise_cov.transpose());
  c.bias_std_error = (c.noise_cov.diagonal() / n).cwiseSqrt();
  c.noise_density = c.noise_cov * dt;
  return c;
}

/// w_meas = exp(dtheta^x)^T [0, 0, W] + N(0, sigma^2 1), n_per_speed samples per speed.
inline TwirlDataset synth_twirl(const Vec3& dtheta, std::span<const double> speeds, std::size_t n_per_speed,
                                double sigma, NormalStream& rng) {
  if (speeds.empty()) throw Error(ErrorCode::InvalidArgument, "synth_twirl needs at least one speed");
  const Mat3 ct = so3::exp_rotvec(dtheta).transpose();
  TwirlDataset d;
  d.rates.reserve(speeds.size() * n_per_speed);
  for (double w : speeds) {
    const Vec3 clean = ct * Vec3(0.0, 0.0, w);
    for (std::size_t i = 0; i < n_per_speed; ++i) {
      d.rates.push_back(sigma > 0.0 ? Vec3(clean + sigma * rng.vec3()) : clean);
    }
  }
  return d;
}

/// First-order counterpart of synth_twirl: (1 - dtheta^x) [0, 0, W].
inline TwirlDataset synth_linearized_twirl(const Vec3& dtheta, std::span<const double> speeds,
                                           std::size_t n_per_speed) {
  if (speeds.empty()) throw Error(ErrorCode::InvalidArgument, "synth_twirl needs at least one speed");
  const Mat3 c = Mat3::Identity() - so3::skew(dtheta);
  TwirlDataset d;
  for (double w : speeds) {
    for (std::size_t i = 0; i < n_per_speed; ++i) d.rates.push_back(c * Vec3(0.0, 0.0, w));
  }
  return d;
}

/// n samples of N(bias, cov).
inline std::vector<Vec3> synth_static(const Vec3& bias, const Mat3& cov, std::size_t n, NormalStream& rng) {
  const Gaussian3 noise(cov);
  std::vector<Vec3> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(bias + noise.sample(rng));
  return out;
}

}  // namespace pivotsim
