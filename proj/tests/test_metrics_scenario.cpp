#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <thread>

#include <gtest/gtest.h>
#include <json.hpp>

#include "pivotsim/metrics.hpp"
#include "pivotsim/scenario.hpp"
#include "pivotsim/units.hpp"

namespace pivotsim {
namespace {

using units::deg2rad;
using units::rad2deg;

Series sampled(double t0, double t1, double dt, auto&& f) {
  Series s;
  const auto n = static_cast<std::size_t>(std::llround((t1 - t0) / dt));
  for (std::size_t i = 0; i <= n; ++i) {
    const double t = t0 + static_cast<double>(i) * dt;
    s.push(t, f(t));
  }
  return s;
}

TEST(Overshoot, ConstructedPeak) {
  const Series s = sampled(0.0, 100.0, 0.01, [](double t) {
    return t < 40.0 ? 30.0 : 30.0 + 3.34 * std::exp(-std::pow(t - 45.0, 2));
  });
  EXPECT_NEAR(compute_overshoot(s, 30.0, 40.0, 100.0), 11.133, 1e-3);
}

TEST(Overshoot, ClampedAtTargetIsZero) {
  const Series s = sampled(0.0, 100.0, 0.01, [](double t) { return std::min(t, 30.0); });
  EXPECT_EQ(compute_overshoot(s, 30.0, 30.0, 100.0), 0.0);
}

TEST(Overshoot, ExperimentStylePeak) {
  const Series s = sampled(0.0, 60.0, 0.01, [](double t) { return t == 35.0 ? 32.88 : std::min(t, 30.0); });
  EXPECT_NEAR(compute_overshoot(s, 30.0, 30.0, 60.0), 9.6, 1e-9);
}

TEST(Overshoot, NegativeTargetMeasuresDownwardExcursion) {
  const Series s = sampled(0.0, 60.0, 0.01, [](double t) { return t == 40.0 ? -33.0 : -std::min(t, 30.0); });
  EXPECT_NEAR(compute_overshoot(s, -30.0, 30.0, 60.0), 10.0, 1e-9);
}

TEST(Overshoot, TraceEndingBeforeRampEndRejected) {
  const Series s = sampled(0.0, 10.0, 0.01, [](double t) { return t; });
  try {
    compute_overshoot(s, 30.0, 30.0, 60.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoRampEnd);
  }
}

TEST(Settling, PerfectTrackingIsZero) {
  const Series ref = sampled(0.0, 100.0, 0.01, [](double t) { return std::min(t, 30.0); });
  EXPECT_EQ(compute_settling(ref, ref, 30.0, 0.02, 0.0, 100.0), 0.0);
}

TEST(Settling, PermanentBandEntryAtConstructedTime) {
  const Series ref = sampled(0.0, 100.0, 0.001, [](double) { return 30.0; });
  const Series tr = sampled(0.0, 100.0, 0.001, [](double t) { return t < 28.3 - 1e-9 ? 31.0 : 30.1; });
  EXPECT_NEAR(compute_settling(tr, ref, 30.0, 0.02, 0.0, 100.0), 28.3, 1e-9);
}

TEST(Settling, ReportsLastEntryNotFirst) {
  const Series ref = sampled(0.0, 100.0, 0.01, [](double) { return 30.0; });
  const Series tr = sampled(0.0, 100.0, 0.01, [](double t) {
    if (t < 10.0) return 35.0;
    if (t >= 20.0 && t < 25.0) return 31.0;  // re-exits the 0.6 band
    return 30.0;
  });
  EXPECT_NEAR(compute_settling(tr, ref, 30.0, 0.02, 0.0, 100.0), 25.0, 1e-9);
}

TEST(Settling, MeasuredFromGivenOrigin) {
  const Series ref = sampled(0.0, 100.0, 0.01, [](double) { return 30.0; });
  const Series tr = sampled(0.0, 100.0, 0.01, [](double t) { return t < 50.0 ? 35.0 : 30.0; });
  EXPECT_NEAR(compute_settling(tr, ref, 30.0, 0.02, 40.0, 100.0), 10.0, 1e-9);
}

TEST(Settling, NeverSettlingRejected) {
  const Series ref = sampled(0.0, 10.0, 0.01, [](double) { return 30.0; });
  const Series tr = sampled(0.0, 10.0, 0.01, [](double t) { return 30.0 + 5.0 * std::sin(t); });
  try {
    compute_settling(tr, ref, 30.0, 0.02, 0.0, 10.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Unsettled);
  }
}

TEST(SteadySigma, ConstantIsZero) {
  EXPECT_EQ(compute_steady_sigma(sampled(0.0, 10.0, 0.01, [](double) { return 7.0; }), 0.0, 10.0), 0.0);
}

TEST(SteadySigma, SinusoidIsAmplitudeOverRootTwo) {
  const double a = 0.3;
  const Series s = sampled(0.0, 25.0, 1e-3, [a](double t) { return 30.0 + a * std::sin(2.0 * std::numbers::pi * t); });
  EXPECT_NEAR(compute_steady_sigma(s, 0.0, 25.0) / (a / std::sqrt(2.0)), 1.0, 0.01);
}

TEST(SteadySigma, ShortWindowRejected) {
  const Series s = sampled(0.0, 10.0, 0.1, [](double t) { return t; });
  try {
    compute_steady_sigma(s, 0.0, 5.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::WindowTooShort);
  }
}

TEST(Summarize, SingleValueHasZeroSigma) {
  const std::vector<double> v{4.2};
  const Stat s = summarize(v);
  EXPECT_EQ(s.mean, 4.2);
  EXPECT_EQ(s.sigma, 0.0);
  EXPECT_EQ(s.count, 1u);
}

TEST(Summarize, SampleSigmaAndNaNSkipping) {
  const std::vector<double> v{1.0, 2.0, std::nan(""), 3.0, 4.0};
  const Stat s = summarize(v);
  EXPECT_EQ(s.count, 4u);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.sigma, std::sqrt(5.0 / 3.0));
  EXPECT_TRUE(std::isnan(summarize(std::vector<double>{}).mean));
}

TEST(Summarize, PropertyPermutationInvariant) {
  std::mt19937_64 rng(51);
  std::normal_distribution<double> n;
  std::vector<double> v(97);
  for (auto& x : v) x = 1e3 + n(rng);
  const Stat base = summarize(v);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(v.begin(), v.end(), rng);
    const Stat s = summarize(v);
    EXPECT_EQ(s.mean, base.mean);
    EXPECT_EQ(s.sigma, base.sigma);
  }
}

TEST(SummarizeBatch, PermutationInvariantOverRuns) {
  std::vector<RunMetrics> runs(12);
  std::mt19937_64 rng(52);
  std::normal_distribution<double> n;
  for (auto& r : runs) {
    r.overshoot_pct = 11.0 + n(rng);
    r.settling_time_s = 28.0 + n(rng);
    r.steady_state_sigma_deg_s = 0.03 + 0.001 * n(rng);
  }
  runs[3].settled = false;
  runs[3].settling_time_s = std::nan("");
  const BatchSummary a = summarize_batch(ScenarioKind::Controlled, 1, runs);
  std::shuffle(runs.begin(), runs.end(), rng);
  const BatchSummary b = summarize_batch(ScenarioKind::Controlled, 1, runs);
  EXPECT_EQ(a.overshoot_pct.mean, b.overshoot_pct.mean);
  EXPECT_EQ(a.overshoot_pct.sigma, b.overshoot_pct.sigma);
  EXPECT_EQ(a.settling_time_s.mean, b.settling_time_s.mean);
  EXPECT_EQ(a.settling_time_s.count, 11u);
  EXPECT_EQ(a.unsettled, 1u);
  EXPECT_EQ(b.unsettled, 1u);
}

TEST(ReferenceProfile, DefaultShape) {
  const ReferenceProfile p;
  EXPECT_EQ(p.at(0.0), 0.0);
  EXPECT_EQ(p.at(10.0), 0.0);
  EXPECT_NEAR(p.at(25.0), deg2rad(15.0), 1e-15);
  EXPECT_NEAR(p.at(40.0), deg2rad(30.0), 1e-15);
  EXPECT_NEAR(p.at(300.0), deg2rad(30.0), 1e-15);
  EXPECT_NEAR(p.at(315.0), deg2rad(15.0), 1e-12);
  EXPECT_NEAR(p.at(330.0), 0.0, 1e-12);
  EXPECT_EQ(p.at(360.0), 0.0);
  const auto w = p.first_spin_up();
  ASSERT_TRUE(w.found);
  EXPECT_DOUBLE_EQ(w.ramp_start, 10.0);
  EXPECT_NEAR(w.ramp_end, 40.0, 1e-12);
  EXPECT_NEAR(w.hold_end, 300.0, 1e-12);
}

TEST(ReferenceProfile, SignReversalSegment) {
  ReferenceProfile p;
  p.segments = {{deg2rad(30.0), 10.0}, {deg2rad(-30.0), 10.0}};
  EXPECT_NEAR(p.at(50.0 + 30.0), 0.0, 1e-12);
  EXPECT_NEAR(p.at(50.0 + 60.0), deg2rad(-30.0), 1e-12);
}

ScenarioConfig quiet_plant() {
  ScenarioConfig c = ScenarioConfig::defaults();
  c.noise = NoiseProfile::zero();
  c.coulomb_Nm = 0.0;
  c.damping.setZero();
  c.gyro_initial_bias.setZero();
  return c;
}

TEST(RunControlled, ZeroReferenceAtRestNeedsNoTorque) {
  ScenarioConfig c = quiet_plant();
  c.controlled.reference.segments = {{0.0, 100.0}};
  c.controlled.duration_s = 60.0;
  const ControlledRun run = run_controlled(c);
  for (const auto& s : run.trace) ASSERT_EQ(s.tau_piv, 0.0);
  EXPECT_EQ(run.metrics.overshoot_pct, 0.0);
}

TEST(RunControlled, MatchesFrozenBaseline) {
  std::ifstream in(std::string(PIVOTSIM_FIXTURE_DIR) + "/controlled_baseline.json");
  ASSERT_TRUE(in);
  const auto golden = nlohmann::json::parse(in);
  const ScenarioConfig c = quiet_plant();
  const ControlledRun run = run_controlled(c);
  auto near = [](double got, double want) { return std::abs(got - want) <= 1e-9 * std::abs(want) + 1e-12; };
  EXPECT_PRED2(near, run.metrics.overshoot_pct, golden["metrics"]["overshoot_pct"].get<double>());
  EXPECT_PRED2(near, run.metrics.settling_time_s, golden["metrics"]["settling_time_s"].get<double>());
  EXPECT_PRED2(near, run.metrics.steady_state_sigma_deg_s,
               golden["metrics"]["steady_state_sigma_deg_s"].get<double>());
  for (const auto& g : golden["samples"]) {
    const auto& s = run.trace.at(static_cast<std::size_t>(std::llround(g["t_s"].get<double>() / c.dt)));
    EXPECT_PRED2(near, s.omega_true.z(), g["omega_z_rad_s"].get<double>()) << "t = " << s.t;
    EXPECT_PRED2(near, s.tau_piv, g["tau_piv_Nm"].get<double>()) << "t = " << s.t;
    EXPECT_PRED2(near, s.integrator, g["integrator_Nm"].get<double>()) << "t = " << s.t;
  }
}

TEST(RunControlled, ShortRunLeavesTrackingMetricsUndefined) {
  ScenarioConfig c = ScenarioConfig::defaults();
  c.controlled.duration_s = 20.0;
  const ControlledRun run = run_controlled(c);
  EXPECT_TRUE(std::isnan(run.metrics.overshoot_pct));
  EXPECT_TRUE(std::isnan(run.metrics.settling_time_s));
  EXPECT_TRUE(std::isnan(run.metrics.steady_state_sigma_deg_s));
}

TEST(RunControlled, TraceHasOneRowPerStep) {
  ScenarioConfig c = ScenarioConfig::defaults();
  c.controlled.duration_s = 2.0;
  const ControlledRun run = run_controlled(c);
  EXPECT_EQ(run.trace.size(), 2001u);
  EXPECT_EQ(run.trace.front().t, 0.0);
  EXPECT_NEAR(run.trace.back().t, 2.0, 1e-12);
}

TEST(RunControlled, EstimateFeedbackTracksToo) {
  ScenarioConfig c = ScenarioConfig::defaults();
  c.controller.feedback = RateFeedback::Estimate;
  const ControlledRun run = run_controlled(c);
  EXPECT_TRUE(run.metrics.settled);
  EXPECT_NEAR(run.metrics.overshoot_pct, 11.2, 1.0);
}

TEST(RunFreeDecay, NoiselessPerfectInitIsExact) {
  ScenarioConfig c = ScenarioConfig::defaults();
  c.noise = NoiseProfile::zero();
  c.filter.tuning_noise = NoiseProfile::low();
  c.filter.initial_rotvec.setZero();
  c.filter.initial_bias = c.gyro_initial_bias;
  const FreeDecayRun run = run_free_decay(c);
  double worst = 0.0;
  for (const auto& s : run.trace) worst = std::max(worst, rad2deg(s.error.angle));
  EXPECT_LT(worst, 1e-9);
}

TEST(RunFreeDecay, StreamsLineUpWithTrace) {
  RunOptions opt;
  opt.keep_streams = true;
  const ScenarioConfig c = ScenarioConfig::defaults();
  const FreeDecayRun run = run_free_decay(c, opt);
  EXPECT_EQ(run.trace.size(), 60000u);
  EXPECT_EQ(run.measurements.gyro.size(), run.trace.size());
  EXPECT_EQ(run.truth.size(), run.trace.size() + 1);
  // Camera 1 at 2 Hz and camera 2 at 5 Hz, excluding t = 0.
  std::size_t cam[2] = {0, 0};
  for (const auto& s : run.measurements.camera) ++cam[s.camera];
  EXPECT_EQ(cam[0], static_cast<std::size_t>(60 * c.noise.camera_rate_hz[0]) - 1);
  EXPECT_EQ(cam[1], static_cast<std::size_t>(60 * c.noise.camera_rate_hz[1]) - 1);
  EXPECT_LE(run.max_truth_orthogonality_error, 1e-8);
}

TEST(RunFreeDecay, ReplayReproducesInLoopFilter) {
  RunOptions opt;
  opt.keep_streams = true;
  const ScenarioConfig c = ScenarioConfig::defaults();
  const FreeDecayRun run = run_free_decay(c, opt);
  const auto replay =
      run_filter(run.measurements, c.tuning(run.truth.front().C_bi), c.camera_references(), run.truth, c.dt);
  ASSERT_EQ(replay.size(), run.trace.size());
  for (std::size_t k = 0; k < replay.size(); ++k) {
    ASSERT_EQ(replay[k].error.angle, run.trace[k].error.angle) << k;
    ASSERT_EQ(replay[k].state.b_hat, run.trace[k].bias_hat) << k;
  }
}

TEST(MonteCarlo, SingleRunEqualsStandaloneRun) {
  ScenarioConfig c = ScenarioConfig::defaults();
  c.seed = 7;
  const BatchSummary b = monte_carlo(ScenarioKind::FreeDecay, c, 1);
  const RunMetrics m = run_free_decay(c).metrics;
  EXPECT_EQ(b.mekf_angle_mean_deg.mean, m.mekf_angle_mean_deg);
  EXPECT_EQ(b.mekf_angle_mean_deg.sigma, 0.0);
}

TEST(MonteCarlo, DeterministicAndThreadCountIndependent) {
  ScenarioConfig c = ScenarioConfig::defaults();
  c.free_decay.duration_s = 20.0;
  const BatchSummary a = monte_carlo(ScenarioKind::FreeDecay, c, 6, 1);
  const BatchSummary b = monte_carlo(ScenarioKind::FreeDecay, c, 6, 4);
  ASSERT_EQ(a.runs.size(), b.runs.size());
  for (std::size_t i = 0; i < a.runs.size(); ++i) {
    EXPECT_EQ(a.runs[i].mekf_angle_mean_deg, b.runs[i].mekf_angle_mean_deg);
  }
  EXPECT_EQ(a.mekf_angle_mean_deg.mean, b.mekf_angle_mean_deg.mean);
  EXPECT_EQ(a.mekf_angle_mean_deg.sigma, b.mekf_angle_mean_deg.sigma);
}

TEST(MonteCarlo, EveryRunReproducibleFromItsSeed) {
  ScenarioConfig c = ScenarioConfig::defaults();
  c.seed = 40;
  c.free_decay.duration_s = 20.0;
  const BatchSummary b = monte_carlo(ScenarioKind::FreeDecay, c, 4, 2);
  for (std::size_t i = 0; i < 4; ++i) {
    ScenarioConfig one = c;
    one.seed = b.base_seed + i;
    EXPECT_EQ(run_free_decay(one).metrics.mekf_angle_mean_deg, b.runs[i].mekf_angle_mean_deg);
  }
}

TEST(MonteCarlo, FailureNamesTheRun) {
  ScenarioConfig c = ScenarioConfig::defaults();
  c.noise = NoiseProfile::zero();  // R = 0 makes the camera update singular
  c.free_decay.duration_s = 2.0;
  try {
    monte_carlo(ScenarioKind::FreeDecay, c, 2, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularInnovation);
    EXPECT_NE(std::string(e.what()).find("run 0 (seed 1)"), std::string::npos) << e.what();
  }
  EXPECT_THROW(monte_carlo(ScenarioKind::FreeDecay, c, 0), Error);
}

TEST(NoiseProfiles, HighNoiseRaisesSteadySigmaButNotTransient) {
  const unsigned threads = std::max(2u, std::thread::hardware_concurrency());
  ScenarioConfig low = ScenarioConfig::defaults();
  ScenarioConfig high = low;
  high.noise_level = NoiseLevel::High;
  high.noise = NoiseProfile::high();
  const BatchSummary a = monte_carlo(ScenarioKind::Controlled, low, 10, threads);
  const BatchSummary b = monte_carlo(ScenarioKind::Controlled, high, 10, threads);
  for (std::size_t i = 0; i < a.runs.size(); ++i) {
    EXPECT_GT(b.runs[i].steady_state_sigma_deg_s, a.runs[i].steady_state_sigma_deg_s) << "seed " << i;
  }
  const double os_sd = std::max(a.overshoot_pct.sigma, b.overshoot_pct.sigma);
  const double st_sd = std::max(a.settling_time_s.sigma, b.settling_time_s.sigma);
  EXPECT_LT(std::abs(a.overshoot_pct.mean - b.overshoot_pct.mean), 3.0 * os_sd);
  EXPECT_LT(std::abs(a.settling_time_s.mean - b.settling_time_s.mean), 3.0 * st_sd);
}

TEST(ScenarioConfig, ValidationCatchesBadValues) {
  ScenarioConfig c = ScenarioConfig::defaults();
  EXPECT_NO_THROW(c.validate());
  c.dt = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = ScenarioConfig::defaults();
  c.cameras[1].reference = Vec3::UnitX();
  EXPECT_THROW(c.validate(), Error);
  c = ScenarioConfig::defaults();
  c.gyro_rate_hz = -1.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(ScenarioConfig, GyroDecimationFollowsRate) {
  ScenarioConfig c = ScenarioConfig::defaults();
  EXPECT_EQ(c.gyro_decimation(), 1u);
  c.gyro_rate_hz = 100.0;
  EXPECT_EQ(c.gyro_decimation(), 10u);
  EXPECT_DOUBLE_EQ(c.gyro_period(), 0.01);
}

}  // namespace
}  // namespace pivotsim
