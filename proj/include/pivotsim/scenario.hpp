#pragma once

// Scenario assembly: truth dynamics + sensors + estimator + controller, the
// two reference scenarios (controlled yaw tracking and free decay with the
// filter running), their metrics, and seeded Monte Carlo batches.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pivotsim/control.hpp"
#include "pivotsim/dynamics.hpp"
#include "pivotsim/errors.hpp"
#include "pivotsim/mekf.hpp"
#include "pivotsim/metrics.hpp"
#include "pivotsim/sensors.hpp"
#include "pivotsim/so3.hpp"
#include "pivotsim/units.hpp"

namespace pivotsim {

using units::deg2rad;
using units::rad2deg;

enum class NoiseLevel { Low, High, Custom };

inline std::string to_string(NoiseLevel level) {
  switch (level) {
    case NoiseLevel::Low: return "low";
    case NoiseLevel::High: return "high";
    case NoiseLevel::Custom: return "custom";
  }
  return "custom";
}

/// Noise levels in the units they are usually quoted in. Per-step
/// covariances are derived from these and the time step:
///   torque    diag(torque_var) * dt          [N m]^2
///   attitude  attitude_sigma^2 * 1            [deg]^2
///   gyro      gyro_sigma^2 / dt_gyro * 1      [deg/s]^2
///   bias walk bias_walk_sigma^2 * dt_gyro * 1 [deg/s]^2
///   camera j  camera_sigma[j]^2 * 1           [deg]^2
struct NoiseProfile {
  Vec3 torque_var = Vec3::Zero();
  double attitude_sigma_deg = 0.0;
  double gyro_sigma_deg_s = 0.0;
  double bias_walk_deg_s = 0.0;
  std::array<double, 2> camera_sigma_deg{0.0, 0.0};
  std::array<double, 2> camera_rate_hz{1.0, 1.0};

  static NoiseProfile low() {
    return {Vec3(0.5, 0.5, 0.01), 0.001, 0.02, 0.001, {0.1, 0.2}, {2.0, 5.0}};
  }
  static NoiseProfile high() {
    return {Vec3(1.0, 1.0, 0.02), 0.001, 0.06, 0.002, {0.5, 0.5}, {0.5, 0.5}};
  }
  /// Low-noise sampling rates with every noise source switched off.
  static NoiseProfile zero() {
    NoiseProfile p = low();
    p.torque_var.setZero();
    p.attitude_sigma_deg = p.gyro_sigma_deg_s = p.bias_walk_deg_s = 0.0;
    p.camera_sigma_deg = {0.0, 0.0};
    return p;
  }
  static NoiseProfile preset(NoiseLevel level) { return level == NoiseLevel::High ? high() : low(); }
};

enum class RateFeedback { Gyro, Estimate, Truth };

struct AngleLoopConfig {
  double kp = 0.0;  // (rad/s) per rad
  double ki = 0.0;  // (rad/s) per rad s
  double target_rad = 0.0;
};

struct ControllerConfig {
  double kp = 1.0 / deg2rad(1.0);  // N m s / rad
  double ki = 0.2 / deg2rad(1.0);  // N m / rad
  double lowpass_tau_s = 0.4;
  std::optional<double> torque_limit_Nm;
  RateFeedback feedback = RateFeedback::Gyro;
  std::optional<AngleLoopConfig> angle_loop;
};

struct RampSegment {
  double target = 0.0;  // rad/s
  double hold_s = 0.0;  // time spent at target after the ramp completes
};

struct ReferenceProfile {
  double ramp_rate = deg2rad(1.0);  // rad/s^2
  double lead_in_s = 10.0;
  std::vector<RampSegment> segments{{deg2rad(30.0), 260.0}, {0.0, 30.0}};

  /// Rate command at time t (piecewise linear).
  double at(double t) const {
    double rate = 0.0;
    double clock = lead_in_s;
    if (t <= clock) return rate;
    for (const auto& seg : segments) {
      const double ramp = std::abs(seg.target - rate) / ramp_rate;
      if (t <= clock + ramp) {
        return rate + std::copysign(ramp_rate * (t - clock), seg.target - rate);
      }
      clock += ramp;
      rate = seg.target;
      if (t <= clock + seg.hold_s) return rate;
      clock += seg.hold_s;
    }
    return rate;
  }

  struct Window {
    double ramp_start = 0.0;
    double ramp_end = 0.0;
    double hold_end = 0.0;
    double target = 0.0;
    bool found = false;
  };

  /// Timing of the first segment with a nonzero target.
  Window first_spin_up() const {
    Window w;
    double rate = 0.0;
    double clock = lead_in_s;
    for (const auto& seg : segments) {
      const double ramp = std::abs(seg.target - rate) / ramp_rate;
      if (seg.target != 0.0 && !w.found) {
        w = {clock, clock + ramp, clock + ramp + seg.hold_s, seg.target, true};
      }
      clock += ramp + seg.hold_s;
      rate = seg.target;
    }
    return w;
  }
};

struct FilterSetup {
  Vec3 initial_rotvec = Vec3::Constant(deg2rad(10.0));  // C_hat0 = exp(theta0^x) C0
  Vec3 initial_bias = Vec3::Zero();                      // rad/s
  double p0_attitude_sigma = deg2rad(3.0);
  double p0_bias_sigma = deg2rad(0.07);
  double q_scale = 1.05;
  double r_scale = 1.05;
  bool model_attitude_noise = true;
  std::optional<NoiseProfile> tuning_noise;
};

struct FreeDecaySetup {
  double duration_s = 60.0;
  double tilt_rad = deg2rad(2.0);
  Vec3 tilt_axis = Vec3::UnitX();
  Vec3 omega0 = Vec3(deg2rad(-0.5), deg2rad(0.5), deg2rad(-10.0));
  double steady_after_s = 15.0;
};

/// Which yaw-rate signal the tracking metrics are computed on.
enum class MetricSignal { Filtered, Truth };

struct ControlledSetup {
  double duration_s = 360.0;
  MetricSignal metric_signal = MetricSignal::Filtered;
  ReferenceProfile reference;
  double settling_band = 0.02;
  double steady_t0_s = 190.0;
  double steady_t1_s = 220.0;
};

struct CameraSetup {
  Vec3 reference = Vec3::UnitX();
  double phase_s = 0.0;
};

struct ScenarioConfig {
  InertiaModel body;
  Mat3 damping = Mat3::Zero();
  double coulomb_Nm = 0.75;
  double coulomb_smoothing_rad_s = 1e-2;

  NoiseLevel noise_level = NoiseLevel::Low;
  NoiseProfile noise = NoiseProfile::low();
  Vec3 gyro_initial_bias = Vec3(deg2rad(0.05), deg2rad(0.03), deg2rad(-0.06));
  std::optional<double> gyro_rate_hz;  // default: one sample per step
  std::array<CameraSetup, 2> cameras{CameraSetup{Vec3::UnitX(), 0.0}, CameraSetup{Vec3::UnitZ(), 0.0}};

  ControllerConfig controller;
  FilterSetup filter;
  ControlledSetup controlled;
  FreeDecaySetup free_decay;

  double dt = 1e-3;
  std::uint64_t seed = 1;
  std::size_t trace_decimation = 10;

  static ScenarioConfig defaults() {
    ScenarioConfig c;
    c.body.mass_kg = 826.0;
    c.body.inertia << 3.8e3, 1.4, -1.6,
                      1.4, 3.8e3, -5.1,
                      -1.6, -5.1, 3.4e2;
    c.body.r_cm = Vec3(0.0, 0.0, -1.94);
    c.body.gravity = Vec3(0.0, 0.0, -9.81);
    c.damping = Vec3(200.0, 200.0, 0.0).asDiagonal();
    return c;
  }

  double gyro_period() const { return gyro_rate_hz ? 1.0 / *gyro_rate_hz : dt; }

  /// Simulation steps per gyro sample.
  std::size_t gyro_decimation() const {
    const auto n = static_cast<std::size_t>(std::llround(gyro_period() / dt));
    return n == 0 ? 1 : n;
  }

  void validate() const {
    body.validate();
    disturbance().validate();
    if (!(dt > 0.0)) throw Error(ErrorCode::ValidationError, "dt_s");
    if (!(controlled.duration_s > 0.0)) throw Error(ErrorCode::ValidationError, "controlled.duration_s");
    if (!(free_decay.duration_s > 0.0)) throw Error(ErrorCode::ValidationError, "free_decay.duration_s");
    if (gyro_rate_hz && !(*gyro_rate_hz > 0.0)) throw Error(ErrorCode::ValidationError, "gyro.rate_hz");
    for (int j = 0; j < 2; ++j) {
      if (!(noise.camera_rate_hz[j] > 0.0)) throw Error(ErrorCode::ValidationError, "camera rate_hz");
      if (std::abs(cameras[j].reference.norm() - 1.0) > 1e-12) {
        throw Error(ErrorCode::ValidationError, "camera reference must be a unit vector");
      }
    }
    if (!check_observability(cameras[0].reference, cameras[1].reference)) {
      throw Error(ErrorCode::ValidationError, "camera references are collinear");
    }
    if (!(controlled.reference.ramp_rate > 0.0)) {
      throw Error(ErrorCode::ValidationError, "controlled.reference.ramp_deg_s2");
    }
    if (trace_decimation == 0) throw Error(ErrorCode::ValidationError, "trace_decimation");
  }

  DisturbanceModel disturbance() const {
    DisturbanceModel d;
    d.damping = damping;
    d.coulomb_Nm = coulomb_Nm;
    d.coulomb_smoothing_rad_s = coulomb_smoothing_rad_s;
    d.torque_cov = (noise.torque_var * dt).asDiagonal();
    const double s = deg2rad(noise.attitude_sigma_deg);
    d.attitude_cov = Mat3::Identity() * s * s;
    return d;
  }

  GyroModel gyro() const {
    GyroModel g;
    const double dtg = gyro_period();
    const double sg = deg2rad(noise.gyro_sigma_deg_s);
    const double sb = deg2rad(noise.bias_walk_deg_s);
    g.rate_cov = Mat3::Identity() * sg * sg / dtg;
    g.bias_walk_cov = Mat3::Identity() * sb * sb * dtg;
    g.bias = gyro_initial_bias;
    g.rate_hz = 1.0 / dtg;
    return g;
  }

  StarCameraModel camera(int j) const {
    StarCameraModel m;
    m.reference = cameras[j].reference;
    const double s = deg2rad(noise.camera_sigma_deg[j]);
    m.noise_cov = Mat3::Identity() * s * s;
    m.rate_hz = noise.camera_rate_hz[j];
    m.phase_s = cameras[j].phase_s;
    return m;
  }

  /// Filter tuning: Q and R are the sensor covariances inflated by the
  /// scale factors. The gyro white noise enters the attitude error through
  /// one step of integration, hence the dt^2 factor on that block; the
  /// per-step attitude noise of the truth model is added when modeled.
  /// Covariances come from `filter.tuning_noise` when set, else from `noise`.
  MekfTuning tuning(const RotationMatrix& c_true0) const {
    ScenarioConfig basis = *this;
    if (filter.tuning_noise) basis.noise = *filter.tuning_noise;
    const GyroModel g = basis.gyro();
    const double dtg = gyro_period();
    Mat3 q_att = g.rate_cov * dtg * dtg;
    if (filter.model_attitude_noise) q_att += basis.disturbance().attitude_cov * static_cast<double>(gyro_decimation());
    MekfTuning t;
    t.Q.block<3, 3>(0, 0) = filter.q_scale * q_att;
    t.Q.block<3, 3>(3, 3) = filter.q_scale * g.bias_walk_cov;
    t.R.block<3, 3>(0, 0) = filter.r_scale * basis.camera(0).noise_cov;
    t.R.block<3, 3>(3, 3) = filter.r_scale * basis.camera(1).noise_cov;
    t.P0.block<3, 3>(0, 0) = Mat3::Identity() * filter.p0_attitude_sigma * filter.p0_attitude_sigma;
    t.P0.block<3, 3>(3, 3) = Mat3::Identity() * filter.p0_bias_sigma * filter.p0_bias_sigma;
    t.C_hat0 = so3::exp_rotvec(filter.initial_rotvec) * c_true0;
    t.b_hat0 = filter.initial_bias;
    return t;
  }

  std::vector<Vec3> camera_references() const { return {cameras[0].reference, cameras[1].reference}; }
};

/// Every metric a run can report; NaN where the scenario does not define it.
struct RunMetrics {
  static constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
  double overshoot_pct = kNaN;
  double settling_time_s = kNaN;
  bool settled = true;
  double steady_state_sigma_deg_s = kNaN;
  double mekf_angle_mean_deg = kNaN;
  double mekf_angle_sigma_deg = kNaN;
  Vec3 bias_err_mean_deg_s = Vec3::Constant(kNaN);
  Vec3 bias_err_sigma_deg_s = Vec3::Constant(kNaN);
};

/// One row of the controlled-run trace; rates in rad/s, torque in N m.
struct ControlledSample {
  double t = 0.0;
  Vec3 omega_true = Vec3::Zero();
  double yaw_rad = 0.0;
  double omega_z_meas = 0.0;
  double omega_z_ref = 0.0;
  double omega_z_filtered = 0.0;
  double error = 0.0;
  double tau_piv = 0.0;
  double integrator = 0.0;
};

struct ControlledRun {
  std::vector<ControlledSample> trace;  // every step
  RunMetrics metrics;
  std::uint64_t seed = 0;
};

/// One row of the free-decay trace.
struct FreeDecaySample {
  double t = 0.0;
  Vec3 omega_true = Vec3::Zero();
  Vec3 bias_true = Vec3::Zero();
  Vec3 gyro = Vec3::Zero();
  Vec3 bias_hat = Vec3::Zero();
  ErrorRecord error;
  double trace_P = 0.0;
  Vec3 attitude_sigma = Vec3::Zero();  // sqrt of the attitude diagonal of P [rad]
  bool updated = false;
};

struct FreeDecayRun {
  std::vector<FreeDecaySample> trace;  // one per gyro sample
  MeasurementStream measurements;
  std::vector<TruthSample> truth;  // one more than gyro samples
  FilterHygiene hygiene;
  double max_truth_orthogonality_error = 0.0;
  RunMetrics metrics;
  std::uint64_t seed = 0;
};

struct RunOptions {
  bool keep_trace = true;
  bool keep_streams = false;        // free decay: measurement stream + truth
  bool check_eigenvalues = false;   // free decay: min eig(P) at every step
};

namespace detail {

inline void controlled_metrics(const ScenarioConfig& cfg, const Series& yaw_rate, const Series& reference,
                               RunMetrics& m) {
  const auto w = cfg.controlled.reference.first_spin_up();
  if (!w.found) {
    m.overshoot_pct = 0.0;
    m.settling_time_s = 0.0;
  } else if (yaw_rate.t.back() + 1e-9 >= w.ramp_end) {
    m.overshoot_pct = compute_overshoot(yaw_rate, w.target, w.ramp_end, w.hold_end);
    try {
      m.settling_time_s = compute_settling(yaw_rate, reference, w.target, cfg.controlled.settling_band,
                                           w.ramp_end, w.hold_end);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Unsettled) throw;
      m.settled = false;
    }
  }
  try {
    m.steady_state_sigma_deg_s =
        rad2deg(compute_steady_sigma(yaw_rate, cfg.controlled.steady_t0_s, cfg.controlled.steady_t1_s));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::WindowTooShort) throw;
  }
}

}  // namespace detail

/// Closed-loop yaw tracking over the reference profile.
inline ControlledRun run_controlled(const ScenarioConfig& cfg, const RunOptions& opt = {}) {
  cfg.validate();
  const DisturbanceModel dist = cfg.disturbance();
  ProcessNoise process(dist, cfg.seed);
  GyroModel gyro = cfg.gyro();
  GyroNoise gyro_noise(gyro, cfg.seed);
  const std::size_t n = step_count(cfg.controlled.duration_s, cfg.dt);
  const std::size_t gyro_every = cfg.gyro_decimation();
  const double dt_gyro = cfg.dt * static_cast<double>(gyro_every);

  std::optional<Mekf> filter;
  std::array<StarCamera, 2> cams{StarCamera(cfg.camera(0), cfg.seed, 1), StarCamera(cfg.camera(1), cfg.seed, 2)};
  RigidBodyState state;
  if (cfg.controller.feedback == RateFeedback::Estimate) {
    filter.emplace(cfg.tuning(state.C_bi), cfg.camera_references());
  }

  PiGains gains{cfg.controller.kp, cfg.controller.ki, 0.0, cfg.controller.torque_limit_Nm};
  YawRateController controller(gains, cfg.controller.lowpass_tau_s);
  std::optional<PiGains> outer;
  if (cfg.controller.angle_loop) {
    outer = PiGains{cfg.controller.angle_loop->kp, cfg.controller.angle_loop->ki, 0.0, kMaxCommandedRate};
  }

  ControlledRun run;
  run.seed = cfg.seed;
  if (opt.keep_trace) run.trace.reserve(n + 1);
  Series yaw_rate;
  Series reference;
  yaw_rate.t.reserve(n + 1);
  yaw_rate.v.reserve(n + 1);
  reference.t.reserve(n + 1);
  reference.v.reserve(n + 1);

  double omega_meas = 0.0;     // latest yaw-rate feedback sample
  Vec3 rate_accum = Vec3::Zero();
  std::vector<CameraSample> fired;
  for (std::size_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * cfg.dt;
    double omega_ref = cfg.controlled.reference.at(t);
    if (outer) {
      const double psi_hat = yaw_angle(filter ? filter->state().C_hat : state.C_bi);
      omega_ref = angle_loop_step(*outer, cfg.controller.angle_loop->target_rad, psi_hat, cfg.dt);
    }
    const auto out = controller.step(omega_ref, omega_meas, cfg.dt);

    yaw_rate.push(t, cfg.controlled.metric_signal == MetricSignal::Filtered ? out.filtered : state.omega.z());
    reference.push(t, omega_ref);
    if (opt.keep_trace) {
      run.trace.push_back({t, state.omega, yaw_angle(state.C_bi), omega_meas, omega_ref, out.filtered,
                           out.error, out.torque, controller.gains().integrator});
    }
    if (k == n) break;

    if (filter) {
      fired.clear();
      for (int j = 0; j < 2; ++j) {
        if (auto y = cams[j].poll(t, state.C_bi)) fired.push_back({t, j, *y});
      }
      filter->correct(fired);
    }

    const Increment inc = advance(state, cfg.body, dist, out.torque, cfg.dt, process);
    state = inc.next;
    rate_accum += inc.mean_rate;
    if ((k + 1) % gyro_every == 0) {
      const Vec3 g = gyro_sample(rate_accum / static_cast<double>(gyro_every), gyro, gyro_noise);
      rate_accum.setZero();
      switch (cfg.controller.feedback) {
        case RateFeedback::Gyro: omega_meas = g.z(); break;
        case RateFeedback::Truth: omega_meas = state.omega.z(); break;
        case RateFeedback::Estimate:
          filter->propagate(g, dt_gyro);
          omega_meas = (g - filter->state().b_hat).z();
          break;
      }
    }
  }

  detail::controlled_metrics(cfg, yaw_rate, reference, run.metrics);
  return run;
}

/// Open-loop decay from a tilted, spinning start with the filter running on
/// emulated gyro and camera data.
inline FreeDecayRun run_free_decay(const ScenarioConfig& cfg, const RunOptions& opt = {}) {
  cfg.validate();
  const DisturbanceModel dist = cfg.disturbance();
  ProcessNoise process(dist, cfg.seed);
  GyroModel gyro = cfg.gyro();
  GyroNoise gyro_noise(gyro, cfg.seed);
  std::array<StarCamera, 2> cams{StarCamera(cfg.camera(0), cfg.seed, 1), StarCamera(cfg.camera(1), cfg.seed, 2)};
  const std::size_t n = step_count(cfg.free_decay.duration_s, cfg.dt);
  const std::size_t gyro_every = cfg.gyro_decimation();
  const double dt_gyro = cfg.dt * static_cast<double>(gyro_every);

  RigidBodyState state;
  const double axis_norm = cfg.free_decay.tilt_axis.norm();
  if (cfg.free_decay.tilt_rad != 0.0) {
    state.C_bi = so3::exp_rotvec(-cfg.free_decay.tilt_rad * cfg.free_decay.tilt_axis / axis_norm);
  }
  state.omega = cfg.free_decay.omega0;

  Mekf filter(cfg.tuning(state.C_bi), cfg.camera_references());
  FreeDecayRun run;
  run.seed = cfg.seed;
  if (opt.keep_trace) run.trace.reserve(n / gyro_every + 1);
  if (opt.keep_streams) run.truth.push_back({0.0, state.C_bi, gyro.bias});

  std::vector<double> angle;
  std::array<std::vector<double>, 3> bias_err;
  std::vector<CameraSample> fired;
  std::vector<CameraSample> batch;  // cameras fired since the last gyro sample
  Vec3 rate_accum = Vec3::Zero();
  Vec3 bias_at_sample_start = gyro.bias;
  bool updated = false;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * cfg.dt;
    for (int j = 0; j < 2; ++j) {
      if (auto y = cams[j].poll(t, state.C_bi)) {
        batch.push_back({t, j, *y});
        if (opt.keep_streams) run.measurements.camera.push_back({t, j, *y});
      }
    }
    if (k % gyro_every == 0) {
      updated = filter.correct(batch);
      batch.clear();
      bias_at_sample_start = gyro.bias;
    }

    const Increment inc = advance(state, cfg.body, dist, 0.0, cfg.dt, process);
    state = inc.next;
    run.max_truth_orthogonality_error =
        std::max(run.max_truth_orthogonality_error, so3::orthogonality_error(state.C_bi));
    rate_accum += inc.mean_rate;
    if ((k + 1) % gyro_every != 0) continue;

    const double t_sample = static_cast<double>(k + 1 - gyro_every) * cfg.dt;
    const Vec3 g = gyro_sample(rate_accum / static_cast<double>(gyro_every), gyro, gyro_noise);
    rate_accum.setZero();
    filter.propagate(g, dt_gyro);
    filter.hygiene().observe(filter.state(), opt.check_eigenvalues);

    // The filter's bias estimate refers to the bias that corrupted this sample.
    const ErrorRecord err = evaluate_error(state.t, filter.state(), state.C_bi, bias_at_sample_start);
    if (opt.keep_streams) {
      run.measurements.gyro.push_back({t_sample, g});
      run.truth.push_back({state.t, state.C_bi, bias_at_sample_start});
    }
    if (state.t > cfg.free_decay.steady_after_s + 1e-9) {
      angle.push_back(rad2deg(err.angle));
      for (int i = 0; i < 3; ++i) bias_err[i].push_back(rad2deg(err.bias_err[i]));
    }
    if (opt.keep_trace) {
      FreeDecaySample s;
      s.t = state.t;
      s.omega_true = state.omega;
      s.bias_true = bias_at_sample_start;
      s.gyro = g;
      s.bias_hat = filter.state().b_hat;
      s.error = err;
      s.trace_P = filter.state().P.trace();
      s.attitude_sigma = filter.state().P.diagonal().head<3>().cwiseMax(0.0).cwiseSqrt();
      s.updated = updated;
      run.trace.push_back(s);
    }
  }
  run.hygiene = filter.hygiene();

  const Stat a = summarize(angle);
  run.metrics.mekf_angle_mean_deg = a.mean;
  run.metrics.mekf_angle_sigma_deg = a.sigma;
  for (int i = 0; i < 3; ++i) {
    const Stat b = summarize(bias_err[i]);
    run.metrics.bias_err_mean_deg_s[i] = b.mean;
    run.metrics.bias_err_sigma_deg_s[i] = b.sigma;
  }
  return run;
}

enum class ScenarioKind { Controlled, FreeDecay };

inline std::string to_string(ScenarioKind k) { return k == ScenarioKind::Controlled ? "controlled" : "free-decay"; }

/// Per-metric mean and sample sigma across a batch.
struct BatchSummary {
  ScenarioKind scenario = ScenarioKind::Controlled;
  std::uint64_t base_seed = 0;
  std::vector<RunMetrics> runs;  // runs[i] used seed base_seed + i
  std::size_t unsettled = 0;
  Stat overshoot_pct;
  Stat settling_time_s;
  Stat steady_state_sigma_deg_s;
  Stat mekf_angle_mean_deg;
  Stat mekf_angle_sigma_deg;
  std::array<Stat, 3> bias_err_mean_deg_s;
  std::array<Stat, 3> bias_err_sigma_deg_s;
};

inline RunMetrics run_metrics(ScenarioKind kind, const ScenarioConfig& cfg) {
  RunOptions opt;
  opt.keep_trace = false;
  return kind == ScenarioKind::Controlled ? run_controlled(cfg, opt).metrics : run_free_decay(cfg, opt).metrics;
}

inline BatchSummary summarize_batch(ScenarioKind kind, std::uint64_t base_seed, std::vector<RunMetrics> runs) {
  BatchSummary b;
  b.scenario = kind;
  b.base_seed = base_seed;
  b.runs = std::move(runs);
  auto collect = [&](auto get) {
    std::vector<double> v;
    v.reserve(b.runs.size());
    for (const auto& r : b.runs) v.push_back(get(r));
    return summarize(v);
  };
  for (const auto& r : b.runs) b.unsettled += r.settled ? 0 : 1;
  b.overshoot_pct = collect([](const RunMetrics& r) { return r.overshoot_pct; });
  b.settling_time_s = collect([](const RunMetrics& r) { return r.settling_time_s; });
  b.steady_state_sigma_deg_s = collect([](const RunMetrics& r) { return r.steady_state_sigma_deg_s; });
  b.mekf_angle_mean_deg = collect([](const RunMetrics& r) { return r.mekf_angle_mean_deg; });
  b.mekf_angle_sigma_deg = collect([](const RunMetrics& r) { return r.mekf_angle_sigma_deg; });
  for (int i = 0; i < 3; ++i) {
    b.bias_err_mean_deg_s[i] = collect([i](const RunMetrics& r) { return r.bias_err_mean_deg_s[i]; });
    b.bias_err_sigma_deg_s[i] = collect([i](const RunMetrics& r) { return r.bias_err_sigma_deg_s[i]; });
  }
  return b;
}

/// `runs` independent runs with seeds cfg.seed + i. Runs are distributed over
/// `threads` workers; results do not depend on the thread count.
inline BatchSummary monte_carlo(ScenarioKind kind, const ScenarioConfig& cfg, std::size_t runs,
                                unsigned threads = 1) {
  if (runs == 0) throw Error(ErrorCode::InvalidArgument, "monte carlo needs at least one run");
  cfg.validate();
  std::vector<RunMetrics> out(runs);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < runs; i = next++) {
      try {
        ScenarioConfig c = cfg;
        c.seed = cfg.seed + i;
        out[i] = run_metrics(kind, c);
      } catch (const Error& e) {
        std::lock_guard lock(failure_mutex);
        const std::string where = "run " + std::to_string(i) + " (seed " + std::to_string(cfg.seed + i) + "): ";
        if (!failure) failure = std::make_exception_ptr(Error(e.code(), where + e.detail()));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(runs)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return summarize_batch(kind, cfg.seed, std::move(out));
}

}  // namespace pivotsim
