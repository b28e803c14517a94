#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "pivotsim/calibration.hpp"
#include "pivotsim/units.hpp"

namespace pivotsim {
namespace {

using units::deg2rad;
using units::rad2deg;

const Vec3 kMisalignment(deg2rad(-0.447), deg2rad(-1.095), 0.0);
const std::vector<double> kSpeeds{deg2rad(30.0), deg2rad(-30.0)};

void expect_code(ErrorCode code, auto&& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

TEST(AlignedRate, Examples) {
  EXPECT_EQ(aligned_rate(Vec3(0, 0, 5)), Vec3(0, 0, 5));
  EXPECT_NEAR((aligned_rate(Vec3(3, 4, 0)) - Vec3(0, 0, 5)).norm(), 0.0, 1e-15);
  const Vec3 w(-0.1, 0.2, -9.99);
  const Vec3 a = aligned_rate(w);
  EXPECT_EQ(a.x(), 0.0);
  EXPECT_EQ(a.y(), 0.0);
  EXPECT_NEAR(a.z(), std::sqrt(0.01 + 0.04 + 9.99 * 9.99), 1e-14);
  expect_code(ErrorCode::ZeroRate, [] { aligned_rate(Vec3::Zero()); });
}

TEST(Alignment, RecoversMisalignmentUnderRealisticNoise) {
  NormalStream rng(1, "twirl");
  const TwirlDataset d = synth_twirl(kMisalignment, kSpeeds, 2000, deg2rad(0.05), rng);
  const AlignmentEstimate est = solve_alignment(d);
  EXPECT_NEAR(rad2deg(est.dtheta.x()), -0.447, 0.01);
  EXPECT_NEAR(rad2deg(est.dtheta.y()), -1.095, 0.01);
  EXPECT_EQ(est.dtheta.z(), 0.0);
  EXPECT_EQ(est.std_error.z(), 0.0);
  EXPECT_GT(est.std_error.x(), 0.0);
  EXPECT_EQ(est.samples, 4000u);
}

TEST(Alignment, ZeroMisalignmentZeroNoiseIsExact) {
  NormalStream rng(3);
  const TwirlDataset d = synth_twirl(Vec3::Zero(), kSpeeds, 10, 0.0, rng);
  for (const auto& w : d.rates) {
    EXPECT_EQ(w.x(), 0.0);
    EXPECT_EQ(w.y(), 0.0);
  }
  const AlignmentEstimate est = solve_alignment(d);
  EXPECT_EQ(est.dtheta, Vec3::Zero());
  EXPECT_EQ(est.residual_rms, 0.0);
}

TEST(Alignment, LinearizedDataGivesZeroResidual) {
  const Vec3 dtheta(deg2rad(0.8), deg2rad(-0.3), 0.0);
  const TwirlDataset d = synth_linearized_twirl(dtheta, kSpeeds, 50);
  const AlignmentEstimate est = solve_alignment(d);
  EXPECT_NEAR(est.dtheta.x(), dtheta.x(), 1e-14);
  EXPECT_NEAR(est.dtheta.y(), dtheta.y(), 1e-14);
  EXPECT_LT(est.residual_rms, 1e-15);
}

TEST(Alignment, ExactAndLinearizedGeneratorsAgreeToSecondOrder) {
  NormalStream rng(4);
  const Vec3 dtheta = deg2rad(1.0) * Vec3(1.0, -1.0, 0.0).normalized();
  const TwirlDataset exact = synth_twirl(dtheta, std::vector<double>{1.0}, 1, 0.0, rng);
  const TwirlDataset lin = synth_linearized_twirl(dtheta, std::vector<double>{1.0}, 1);
  const Vec3 diff = exact.rates[0] - lin.rates[0];
  const double theta = dtheta.norm();
  EXPECT_LT(diff.head<2>().norm(), 1e-4);
  EXPECT_LT(diff.head<2>().norm(), std::pow(theta, 3) / 6.0 * 1.01);
  EXPECT_NEAR(diff.z(), std::cos(theta) - 1.0, 1e-15);
}

TEST(Alignment, NormalEquationResidualIsOrthogonal) {
  NormalStream rng(5);
  std::vector<Vec3> rates;
  for (int i = 0; i < 200; ++i) rates.push_back(rng.vec3() + Vec3(0, 0, 2.0));
  const Eigen::MatrixXd a = build_design_matrix(rates);
  const Eigen::VectorXd b = build_observation_vector(rates);
  const LeastSquaresSolution s = solve_least_squares(a, b);
  EXPECT_LT((a.transpose() * s.residual).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Alignment, DesignMatrixMatchesCrossProducts) {
  NormalStream rng(6);
  const std::vector<Vec3> rates{rng.vec3(), rng.vec3()};
  const Eigen::MatrixXd a = build_design_matrix(rates);
  const Vec3 x = rng.vec3();
  const Eigen::VectorXd ax = a * x;
  for (int i = 0; i < 2; ++i) {
    const Vec3 expected = -rates[i].cross(x);
    EXPECT_NEAR((ax.segment<3>(3 * i) - expected).norm(), 0.0, 1e-14);
  }
}

TEST(Alignment, PureSpinLeavesZColumnEmpty) {
  const std::vector<Vec3> rates{Vec3(0, 0, 0.5), Vec3(0, 0, -0.5), Vec3(0, 0, 0.3)};
  const Eigen::MatrixXd a = build_design_matrix(rates);
  EXPECT_EQ(a.col(2).cwiseAbs().maxCoeff(), 0.0);
  expect_code(ErrorCode::RankDeficient,
              [&] { solve_least_squares(a, build_observation_vector(rates)); });
}

TEST(Alignment, StandardErrorCoverage) {
  const int reps = 100;
  int hit_x = 0;
  int hit_y = 0;
  for (int r = 0; r < reps; ++r) {
    NormalStream rng(1000 + r, "twirl");
    const AlignmentEstimate est = solve_alignment(synth_twirl(kMisalignment, kSpeeds, 200, deg2rad(0.05), rng));
    hit_x += std::abs(est.dtheta.x() - kMisalignment.x()) <= est.std_error.x();
    hit_y += std::abs(est.dtheta.y() - kMisalignment.y()) <= est.std_error.y();
  }
  EXPECT_GE(hit_x, 55);
  EXPECT_LE(hit_x, 80);
  EXPECT_GE(hit_y, 55);
  EXPECT_LE(hit_y, 80);
}

TEST(Alignment, Validation) {
  TwirlDataset few;
  few.rates = {Vec3(0, 0, 1), Vec3(0, 0, 1)};
  expect_code(ErrorCode::TooFewSamples, [&] { solve_alignment(few); });
  TwirlDataset zero;
  zero.rates = {Vec3(0, 0, 1), Vec3::Zero(), Vec3(0, 0, 1)};
  expect_code(ErrorCode::ZeroRate, [&] { solve_alignment(zero); });
  expect_code(ErrorCode::RankDeficient,
              [] { solve_least_squares(Eigen::MatrixXd::Ones(1, 2), Eigen::VectorXd::Ones(1)); });
}

TEST(StaticCharacterization, ConstantSamples) {
  const Vec3 c(0.1, -0.2, 0.3);
  const std::vector<Vec3> s(150, c);
  const StaticCharacterization r = characterize_static(s, 1e-3);
  EXPECT_NEAR((r.bias_hat - c).norm(), 0.0, 1e-15);
  EXPECT_LT(r.noise_cov.cwiseAbs().maxCoeff(), 1e-30);
}

TEST(StaticCharacterization, RecoversInjectedBias) {
  const Vec3 bias = deg2rad(1.0) * Vec3(0.05, 0.03, -0.06);
  const double sigma = deg2rad(0.02);
  NormalStream rng(11, "static");
  const auto s = synth_static(bias, Mat3::Identity() * sigma * sigma, 10000, rng);
  const StaticCharacterization r = characterize_static(s, 1e-3);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(r.bias_std_error[i], sigma / 100.0, 0.05 * sigma / 100.0);
    EXPECT_LT(std::abs(r.bias_hat[i] - bias[i]), 3.0 * r.bias_std_error[i]);
    EXPECT_NEAR(r.noise_cov(i, i), sigma * sigma, 0.05 * sigma * sigma);
  }
  EXPECT_NEAR(r.noise_density(0, 0), r.noise_cov(0, 0) * 1e-3, 1e-30);
  Eigen::SelfAdjointEigenSolver<Mat3> eig(r.noise_cov);
  EXPECT_GE(eig.eigenvalues().minCoeff(), 0.0);
}

TEST(StaticCharacterization, BiasEstimateIsUnbiased) {
  const Vec3 bias(0.01, -0.02, 0.005);
  const Mat3 cov = Vec3(1e-4, 4e-4, 9e-4).asDiagonal();
  const int reps = 400;
  const std::size_t n = 200;
  Vec3 mean = Vec3::Zero();
  for (int r = 0; r < reps; ++r) {
    NormalStream rng(r);
    mean += characterize_static(synth_static(bias, cov, n, rng), 1e-3).bias_hat;
  }
  mean /= reps;
  for (int i = 0; i < 3; ++i) {
    const double se = std::sqrt(cov(i, i) / static_cast<double>(n * reps));
    EXPECT_LT(std::abs(mean[i] - bias[i]), 4.0 * se);
  }
}

TEST(StaticCharacterization, Validation) {
  expect_code(ErrorCode::TooFewSamples, [] { characterize_static(std::vector<Vec3>(2, Vec3::Zero()), 1e-3); });
  expect_code(ErrorCode::InvalidArgument, [] { characterize_static(std::vector<Vec3>(100, Vec3::Zero()), 0.0); });
}

}  // namespace
}  // namespace pivotsim
