#pragma once

// File outputs: per-run trace CSVs, metrics and batch summaries as JSON,
// full-rate truth for filter replay, and calibration results.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pivotsim/calibration.hpp"
#include "pivotsim/config.hpp"
#include "pivotsim/csv.hpp"
#include "pivotsim/errors.hpp"
#include "pivotsim/scenario.hpp"
#include "pivotsim/units.hpp"

namespace pivotsim::io {

using units::rad2deg;

inline const std::vector<std::string>& controlled_columns() {
  static const std::vector<std::string> c{
      "t_s",          "omega_x_deg_s", "omega_y_deg_s",     "omega_z_deg_s", "yaw_deg",        "omega_z_meas_deg_s",
      "omega_z_filtered_deg_s", "omega_z_ref_deg_s", "error_deg_s", "tau_piv_Nm", "integrator_Nm"};
  return c;
}

inline const std::vector<std::string>& free_decay_columns() {
  static const std::vector<std::string> c{
      "t_s",           "omega_x_deg_s",    "omega_y_deg_s",    "omega_z_deg_s",    "bias_x_deg_s",
      "bias_y_deg_s",  "bias_z_deg_s",     "gyro_x_deg_s",     "gyro_y_deg_s",     "gyro_z_deg_s",
      "bias_hat_x_deg_s", "bias_hat_y_deg_s", "bias_hat_z_deg_s", "dtheta_x_deg", "dtheta_y_deg",
      "dtheta_z_deg",  "angle_err_deg",    "bias_err_x_deg_s", "bias_err_y_deg_s", "bias_err_z_deg_s",
      "trace_P",       "updated"};
  return c;
}

inline const std::vector<std::string>& replay_columns() {
  static const std::vector<std::string> c{
      "t_s",          "bias_hat_x_deg_s", "bias_hat_y_deg_s", "bias_hat_z_deg_s", "dtheta_x_deg", "dtheta_y_deg",
      "dtheta_z_deg", "angle_err_deg",    "bias_err_x_deg_s", "bias_err_y_deg_s", "bias_err_z_deg_s", "trace_P",
      "updated"};
  return c;
}

inline const std::vector<std::string>& truth_columns() {
  static const std::vector<std::string> c{"t_s", "c00", "c01", "c02", "c10", "c11", "c12",
                                          "c20", "c21", "c22", "bias_x", "bias_y", "bias_z"};
  return c;
}

/// Every `decimation`-th row plus the last one.
template <typename Row, typename F>
void write_decimated(std::ostream& out, const std::vector<std::string>& header, const std::vector<Row>& rows,
                     std::size_t decimation, F&& to_fields) {
  csv::Writer w(out, header);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i % decimation != 0 && i + 1 != rows.size()) continue;
    w.row(to_fields(rows[i]));
  }
}

inline void write_controlled_trace(std::ostream& out, const std::vector<ControlledSample>& trace,
                                   std::size_t decimation) {
  write_decimated(out, controlled_columns(), trace, decimation, [](const ControlledSample& s) {
    return std::vector<double>{s.t,
                               rad2deg(s.omega_true.x()),
                               rad2deg(s.omega_true.y()),
                               rad2deg(s.omega_true.z()),
                               rad2deg(s.yaw_rad),
                               rad2deg(s.omega_z_meas),
                               rad2deg(s.omega_z_filtered),
                               rad2deg(s.omega_z_ref),
                               rad2deg(s.error),
                               s.tau_piv,
                               s.integrator};
  });
}

inline void write_free_decay_trace(std::ostream& out, const std::vector<FreeDecaySample>& trace,
                                   std::size_t decimation) {
  write_decimated(out, free_decay_columns(), trace, decimation, [](const FreeDecaySample& s) {
    std::vector<double> f{s.t};
    for (const Vec3* v : {&s.omega_true, &s.bias_true, &s.gyro, &s.bias_hat}) {
      for (int i = 0; i < 3; ++i) f.push_back(rad2deg((*v)[i]));
    }
    for (int i = 0; i < 3; ++i) f.push_back(rad2deg(s.error.dtheta[i]));
    f.push_back(rad2deg(s.error.angle));
    for (int i = 0; i < 3; ++i) f.push_back(rad2deg(s.error.bias_err[i]));
    f.push_back(s.trace_P);
    f.push_back(s.updated ? 1.0 : 0.0);
    return f;
  });
}

inline void write_replay_trace(std::ostream& out, const std::vector<FilterSample>& trace, bool has_truth,
                               std::size_t decimation) {
  write_decimated(out, replay_columns(), trace, decimation, [has_truth](const FilterSample& s) {
    const double nan = std::nan("");
    std::vector<double> f{s.error.t};
    for (int i = 0; i < 3; ++i) f.push_back(rad2deg(s.state.b_hat[i]));
    for (int i = 0; i < 3; ++i) f.push_back(has_truth ? rad2deg(s.error.dtheta[i]) : nan);
    f.push_back(has_truth ? rad2deg(s.error.angle) : nan);
    for (int i = 0; i < 3; ++i) f.push_back(has_truth ? rad2deg(s.error.bias_err[i]) : nan);
    f.push_back(s.state.P.trace());
    f.push_back(s.updated ? 1.0 : 0.0);
    return f;
  });
}

/// Full-rate truth in SI units (rotation matrix row-major, bias in rad/s).
inline void write_truth(std::ostream& out, const std::vector<TruthSample>& truth) {
  csv::Writer w(out, truth_columns());
  for (const auto& s : truth) {
    std::vector<double> f{s.t};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) f.push_back(s.C_bi(r, c));
    }
    for (int i = 0; i < 3; ++i) f.push_back(s.bias[i]);
    w.row(f);
  }
}

inline std::vector<TruthSample> read_truth(std::istream& in) {
  const csv::Table t = csv::parse(in);
  std::vector<std::size_t> idx;
  for (const auto& name : truth_columns()) idx.push_back(t.column(name));
  std::vector<TruthSample> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    TruthSample s;
    s.t = csv::parse_number(row[idx[0]]);
    for (int k = 0; k < 9; ++k) s.C_bi(k / 3, k % 3) = csv::parse_number(row[idx[1 + k]]);
    for (int i = 0; i < 3; ++i) s.bias[i] = csv::parse_number(row[idx[10 + i]]);
    out.push_back(s);
  }
  return out;
}

inline Json number_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline Json vec_or_null(const Vec3& v) {
  return Json::array({number_or_null(v.x()), number_or_null(v.y()), number_or_null(v.z())});
}

inline Json metrics_json(const RunMetrics& m) {
  return {
      {"overshoot_pct", number_or_null(m.overshoot_pct)},
      {"settling_time_s", number_or_null(m.settling_time_s)},
      {"settled", m.settled},
      {"steady_state_sigma_deg_s", number_or_null(m.steady_state_sigma_deg_s)},
      {"mekf_angle_mean_deg", number_or_null(m.mekf_angle_mean_deg)},
      {"mekf_angle_sigma_deg", number_or_null(m.mekf_angle_sigma_deg)},
      {"bias_err_mean_deg_s", vec_or_null(m.bias_err_mean_deg_s)},
      {"bias_err_sigma_deg_s", vec_or_null(m.bias_err_sigma_deg_s)},
  };
}

inline Json stat_json(const Stat& s) {
  return {{"mean", number_or_null(s.mean)}, {"sigma", number_or_null(s.sigma)}, {"count", s.count}};
}

inline Json batch_json(const BatchSummary& b) {
  Json bias_mean = Json::array();
  Json bias_sigma = Json::array();
  for (int i = 0; i < 3; ++i) {
    bias_mean.push_back(stat_json(b.bias_err_mean_deg_s[i]));
    bias_sigma.push_back(stat_json(b.bias_err_sigma_deg_s[i]));
  }
  Json runs = Json::array();
  for (std::size_t i = 0; i < b.runs.size(); ++i) {
    Json r = metrics_json(b.runs[i]);
    r["seed"] = b.base_seed + i;
    runs.push_back(std::move(r));
  }
  return {
      {"scenario", to_string(b.scenario)},
      {"runs", b.runs.size()},
      {"base_seed", b.base_seed},
      {"unsettled", b.unsettled},
      {"summary",
       {{"overshoot_pct", stat_json(b.overshoot_pct)},
        {"settling_time_s", stat_json(b.settling_time_s)},
        {"steady_state_sigma_deg_s", stat_json(b.steady_state_sigma_deg_s)},
        {"mekf_angle_mean_deg", stat_json(b.mekf_angle_mean_deg)},
        {"mekf_angle_sigma_deg", stat_json(b.mekf_angle_sigma_deg)},
        {"bias_err_mean_deg_s", bias_mean},
        {"bias_err_sigma_deg_s", bias_sigma}}},
      {"per_run", runs},
  };
}

inline Json alignment_json(const AlignmentEstimate& a) {
  Json dtheta = Json::array();
  Json se = Json::array();
  for (int i = 0; i < 3; ++i) {
    dtheta.push_back(rad2deg(a.dtheta[i]));
    se.push_back(rad2deg(a.std_error[i]));
  }
  return {{"dtheta_deg", dtheta},
          {"std_error_deg", se},
          {"residual_rms_deg_s", rad2deg(a.residual_rms)},
          {"samples", a.samples}};
}

inline Json static_json(const StaticCharacterization& c) {
  Json bias = Json::array();
  Json se = Json::array();
  Json cov = Json::array();
  for (int i = 0; i < 3; ++i) {
    bias.push_back(rad2deg(c.bias_hat[i]));
    se.push_back(rad2deg(c.bias_std_error[i]));
    Json row = Json::array();
    for (int j = 0; j < 3; ++j) row.push_back(rad2deg(rad2deg(c.noise_cov(i, j))));
    cov.push_back(std::move(row));
  }
  return {{"bias_deg_s", bias}, {"bias_std_error_deg_s", se}, {"noise_cov_deg2_s2", cov}, {"samples", c.samples}};
}

inline void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw Error(ErrorCode::IoError, "cannot create output directory " + dir.string());
  }
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  return out;
}

template <typename F>
void write_file(const std::filesystem::path& path, F&& body) {
  std::ofstream out = open_output(path);
  body(out);
  out.flush();
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
  write_file(path, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
}

/// trace.csv, metrics.json and config_resolved.json in `dir`.
template <typename WriteTrace>
void emit_run(const std::filesystem::path& dir, WriteTrace&& write_trace, const RunMetrics& metrics,
              const Json& resolved) {
  ensure_directory(dir);
  write_file(dir / "trace.csv", write_trace);
  write_json(dir / "metrics.json", metrics_json(metrics));
  write_json(dir / "config_resolved.json", resolved);
}

}  // namespace pivotsim::io
