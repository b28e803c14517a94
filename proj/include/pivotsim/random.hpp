#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Dense>

namespace pivotsim {

using Rng = std::mt19937_64;

namespace detail {

constexpr std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Seed for the named noise source derived from a master seed. Each source
/// gets its own stream so toggling one source leaves the others untouched.
constexpr std::uint64_t stream_seed(std::uint64_t master_seed, std::string_view source) {
  return detail::splitmix64(detail::splitmix64(master_seed) ^ detail::fnv1a(source));
}

/// Standard-normal generator bound to one engine.
class NormalStream {
 public:
  NormalStream() : NormalStream(0) {}
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}
  NormalStream(std::uint64_t master_seed, std::string_view source)
      : engine_(stream_seed(master_seed, source)) {}

  double operator()() { return dist_(engine_); }

  Eigen::Vector3d vec3() {
    const double x = dist_(engine_);
    const double y = dist_(engine_);
    const double z = dist_(engine_);
    return {x, y, z};
  }

  Rng& engine() { return engine_; }

 private:
  Rng engine_;
  std::normal_distribution<double> dist_{0.0, 1.0};
};

/// Zero-mean Gaussian 3-vector with a fixed (possibly singular) covariance.
class Gaussian3 {
 public:
  Gaussian3() : factor_(Eigen::Matrix3d::Zero()) {}

  explicit Gaussian3(const Eigen::Matrix3d& covariance) : factor_(sqrt_psd(covariance)) {}

  static Gaussian3 isotropic(double sigma) {
    return Gaussian3(Eigen::Matrix3d::Identity() * sigma * sigma);
  }

  Eigen::Vector3d sample(NormalStream& normal) const { return factor_ * normal.vec3(); }

  const Eigen::Matrix3d& factor() const { return factor_; }
  bool is_zero() const { return factor_.isZero(0.0); }

  /// Symmetric square root S with S*S = cov; negative round-off eigenvalues clipped to zero.
  static Eigen::Matrix3d sqrt_psd(const Eigen::Matrix3d& cov) {
    if (cov.isZero(0.0)) return Eigen::Matrix3d::Zero();
    if (cov.isDiagonal(0.0)) {
      return cov.diagonal().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(0.5 * (cov + cov.transpose()));
    const Eigen::Vector3d root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
  }

 private:
  Eigen::Matrix3d factor_;
};

}  // namespace pivotsim
