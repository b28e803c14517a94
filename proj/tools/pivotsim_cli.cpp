// pivotsim: command-line front end for the gondola pointing simulator.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "pivotsim/pivotsim.hpp"

namespace fs = std::filesystem;
using namespace pivotsim;

namespace {

struct CommonOptions {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::string noise;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config, "JSON scenario config (defaults when omitted)")->check(CLI::ExistingFile);
  cmd->add_option("-o,--out", o.out, "Output directory");
  cmd->add_option("-s,--seed", o.seed, "Master seed override");
  cmd->add_option("--noise", o.noise, "Noise profile override")->check(CLI::IsMember({"low", "high", "custom"}));
}

/// Config with command-line overrides applied before resolution, so the
/// resolved document records them.
LoadedConfig load(const CommonOptions& o) {
  Json user = o.config.empty() ? Json::object() : parse_document(read_text_file(o.config));
  if (!user.is_object()) throw Error(ErrorCode::ValidationError, "config root must be an object");
  if (o.seed) user["seed"] = *o.seed;
  if (!o.noise.empty()) {
    user["noise_profile"] = o.noise;
  }
  LoadedConfig c;
  c.resolved = resolve_document(user);
  c.config = config_from_document(c.resolved);
  return c;
}

void print_metrics(const RunMetrics& m) { std::cout << io::metrics_json(m).dump(2) << '\n'; }

int cmd_simulate(const CommonOptions& o) {
  const LoadedConfig c = load(o);
  const ControlledRun run = run_controlled(c.config);
  io::emit_run(
      o.out, [&](std::ostream& out) { io::write_controlled_trace(out, run.trace, c.config.trace_decimation); },
      run.metrics, c.resolved);
  print_metrics(run.metrics);
  return 0;
}

int cmd_free_decay(const CommonOptions& o) {
  const LoadedConfig c = load(o);
  RunOptions opt;
  opt.keep_streams = true;
  const FreeDecayRun run = run_free_decay(c.config, opt);
  io::emit_run(
      o.out, [&](std::ostream& out) { io::write_free_decay_trace(out, run.trace, c.config.trace_decimation); },
      run.metrics, c.resolved);
  io::write_file(fs::path(o.out) / "measurements.csv",
                 [&](std::ostream& out) { write_measurements(out, run.measurements); });
  io::write_file(fs::path(o.out) / "truth.csv", [&](std::ostream& out) { io::write_truth(out, run.truth); });
  print_metrics(run.metrics);
  return 0;
}

int cmd_monte_carlo(const CommonOptions& o, std::size_t runs, const std::string& scenario, unsigned threads) {
  const LoadedConfig c = load(o);
  const ScenarioKind kind = scenario == "free-decay" ? ScenarioKind::FreeDecay : ScenarioKind::Controlled;
  const BatchSummary b = monte_carlo(kind, c.config, runs, threads);
  io::ensure_directory(o.out);
  const Json j = io::batch_json(b);
  io::write_json(fs::path(o.out) / "batch_summary.json", j);
  io::write_json(fs::path(o.out) / "config_resolved.json", c.resolved);
  std::cout << j["summary"].dump(2) << '\n';
  return 0;
}

std::vector<Vec3> gyro_rates(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  const MeasurementStream m = read_measurements(in);
  std::vector<Vec3> rates;
  rates.reserve(m.gyro.size());
  for (const auto& g : m.gyro) rates.push_back(g.rate);
  return rates;
}

int cmd_calibrate_align(const std::string& input, const std::string& out, std::uint64_t seed, double sigma_deg_s,
                        std::size_t samples) {
  TwirlDataset data;
  if (input.empty()) {
    const Vec3 truth(units::deg2rad(-0.447), units::deg2rad(-1.095), 0.0);
    const std::vector<double> speeds{units::deg2rad(30.0), units::deg2rad(-30.0)};
    NormalStream rng(seed, "twirl");
    data = synth_twirl(truth, speeds, samples, units::deg2rad(sigma_deg_s), rng);
  } else {
    data.rates = gyro_rates(input);
  }
  const Json j = io::alignment_json(solve_alignment(data));
  io::ensure_directory(out);
  io::write_json(fs::path(out) / "alignment.json", j);
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_calibrate_static(const std::string& input, const std::string& out, std::uint64_t seed, double dt,
                         std::size_t samples) {
  std::vector<Vec3> data;
  if (input.empty()) {
    const ScenarioConfig d = ScenarioConfig::defaults();
    const double sigma = units::deg2rad(0.02);
    NormalStream rng(seed, "static");
    data = synth_static(d.gyro_initial_bias, Mat3::Identity() * sigma * sigma, samples, rng);
  } else {
    data = gyro_rates(input);
  }
  const Json j = io::static_json(characterize_static(data, dt));
  io::ensure_directory(out);
  io::write_json(fs::path(out) / "static.json", j);
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_replay(const CommonOptions& o, const std::string& measurements, const std::string& truth_path) {
  const LoadedConfig c = load(o);
  std::ifstream min(measurements, std::ios::binary);
  if (!min) throw Error(ErrorCode::IoError, "cannot open " + measurements);
  const MeasurementStream stream = read_measurements(min);
  std::vector<TruthSample> truth;
  if (!truth_path.empty()) {
    std::ifstream tin(truth_path, std::ios::binary);
    if (!tin) throw Error(ErrorCode::IoError, "cannot open " + truth_path);
    truth = io::read_truth(tin);
  }
  RotationMatrix c0 = Mat3::Identity();
  if (!truth.empty()) {
    c0 = truth.front().C_bi;
  } else if (c.config.free_decay.tilt_rad != 0.0) {
    c0 = so3::exp_rotvec(-c.config.free_decay.tilt_rad * c.config.free_decay.tilt_axis.normalized());
  }
  const double dt = c.config.gyro_period();
  const auto trace = run_filter(stream, c.config.tuning(c0), c.config.camera_references(), truth, dt);

  RunMetrics m;
  if (!truth.empty()) {
    std::vector<double> angle;
    std::array<std::vector<double>, 3> bias;
    for (const auto& s : trace) {
      if (s.error.t <= c.config.free_decay.steady_after_s + 1e-9) continue;
      angle.push_back(units::rad2deg(s.error.angle));
      for (int i = 0; i < 3; ++i) bias[i].push_back(units::rad2deg(s.error.bias_err[i]));
    }
    const Stat a = summarize(angle);
    m.mekf_angle_mean_deg = a.mean;
    m.mekf_angle_sigma_deg = a.sigma;
    for (int i = 0; i < 3; ++i) {
      const Stat b = summarize(bias[i]);
      m.bias_err_mean_deg_s[i] = b.mean;
      m.bias_err_sigma_deg_s[i] = b.sigma;
    }
  }
  io::emit_run(
      o.out,
      [&](std::ostream& out) { io::write_replay_trace(out, trace, !truth.empty(), c.config.trace_decimation); }, m,
      c.resolved);
  print_metrics(m);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gondola yaw-pointing simulator"};
  app.require_subcommand(1);

  CommonOptions sim_opt, fd_opt, mc_opt, rp_opt;
  auto* sim = app.add_subcommand("simulate", "Closed-loop yaw tracking run");
  add_common(sim, sim_opt);

  auto* fd = app.add_subcommand("free-decay", "Free decay with the attitude filter running");
  add_common(fd, fd_opt);

  auto* mc = app.add_subcommand("monte-carlo", "Seeded batch with summary statistics");
  add_common(mc, mc_opt);
  std::size_t runs = 20;
  std::string scenario = "controlled";
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  mc->add_option("-n,--runs", runs, "Number of runs (seeds seed .. seed+N-1)")->check(CLI::PositiveNumber);
  mc->add_option("--scenario", scenario, "Scenario")->check(CLI::IsMember({"controlled", "free-decay"}));
  mc->add_option("-j,--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  std::string align_in, align_out = "out";
  std::uint64_t align_seed = 1;
  double align_sigma = 0.05;
  std::size_t align_n = 2000;
  auto* ca = app.add_subcommand("calibrate-align", "Gyro misalignment from constant-rate spins");
  ca->add_option("-i,--input", align_in, "Measurement CSV with gyro rows (synthetic data when omitted)")
      ->check(CLI::ExistingFile);
  ca->add_option("-o,--out", align_out, "Output directory");
  ca->add_option("-s,--seed", align_seed, "Seed for synthetic data");
  ca->add_option("--sigma-deg-s", align_sigma, "Synthetic per-sample noise")->check(CLI::NonNegativeNumber);
  ca->add_option("--samples-per-speed", align_n, "Synthetic samples per spin speed")->check(CLI::PositiveNumber);

  std::string static_in, static_out = "out";
  std::uint64_t static_seed = 1;
  double static_dt = 1e-3;
  std::size_t static_n = 10000;
  auto* cs = app.add_subcommand("calibrate-static", "Gyro bias and noise from static data");
  cs->add_option("-i,--input", static_in, "Measurement CSV with gyro rows (synthetic data when omitted)")
      ->check(CLI::ExistingFile);
  cs->add_option("-o,--out", static_out, "Output directory");
  cs->add_option("-s,--seed", static_seed, "Seed for synthetic data");
  cs->add_option("--dt", static_dt, "Sample period [s]")->check(CLI::PositiveNumber);
  cs->add_option("--samples", static_n, "Synthetic sample count");

  std::string replay_meas, replay_truth;
  auto* rp = app.add_subcommand("replay-filter", "Run the attitude filter over recorded measurements");
  add_common(rp, rp_opt);
  rp->add_option("-m,--measurements", replay_meas, "measurements.csv")->required()->check(CLI::ExistingFile);
  rp->add_option("-t,--truth", replay_truth, "truth.csv for error statistics")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: Usage: " << e.what() << '\n';
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_opt);
    if (fd->parsed()) return cmd_free_decay(fd_opt);
    if (mc->parsed()) return cmd_monte_carlo(mc_opt, runs, scenario, threads);
    if (ca->parsed()) return cmd_calibrate_align(align_in, align_out, align_seed, align_sigma, align_n);
    if (cs->parsed()) return cmd_calibrate_static(static_in, static_out, static_seed, static_dt, static_n);
    if (rp->parsed()) return cmd_replay(rp_opt, replay_meas, replay_truth);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
