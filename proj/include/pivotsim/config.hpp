#pragma once

// JSON scenario documents. A user document is merged over the defaults
// (unknown keys rejected), and the merged "resolved" document is converted to
// a ScenarioConfig. Keys carry their units; angles are degrees in the
// document and radians in ScenarioConfig.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "pivotsim/errors.hpp"
#include "pivotsim/scenario.hpp"
#include "pivotsim/units.hpp"

namespace pivotsim {

using Json = nlohmann::ordered_json;

namespace config_detail {

inline Json vec_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

inline Json noise_json(const NoiseProfile& p) {
  return {
      {"torque_var_Nm2_s", vec_json(p.torque_var)},
      {"attitude_sigma_deg", p.attitude_sigma_deg},
      {"gyro_sigma_deg_s", p.gyro_sigma_deg_s},
      {"bias_walk_deg_s", p.bias_walk_deg_s},
      {"camera_sigma_deg", Json::array({p.camera_sigma_deg[0], p.camera_sigma_deg[1]})},
      {"camera_rate_hz", Json::array({p.camera_rate_hz[0], p.camera_rate_hz[1]})},
  };
}

inline NoiseLevel parse_level(const Json& v, const std::string& path) {
  if (!v.is_string()) throw Error(ErrorCode::ValidationError, path + ": expected a string");
  const auto s = v.get<std::string>();
  if (s == "low") return NoiseLevel::Low;
  if (s == "high") return NoiseLevel::High;
  if (s == "custom") return NoiseLevel::Custom;
  throw Error(ErrorCode::ValidationError, path + ": expected low, high or custom");
}

inline bool same_kind(const Json& a, const Json& b) {
  if (a.is_number() && b.is_number()) return true;
  if (a.is_null() || b.is_null()) return true;  // optional values
  return a.type() == b.type();
}

/// Template used to check elements of array-of-object values.
inline const Json* element_template(const std::string& path) {
  static const Json segment = {{"target_deg_s", 0.0}, {"hold_s", 0.0}};
  static const Json camera = {{"reference", Json::array({1.0, 0.0, 0.0})}, {"phase_s", 0.0}};
  if (path == "controlled.reference.segments") return &segment;
  if (path == "cameras") return &camera;
  return nullptr;
}

/// Overlay `user` on `base`. Objects merge key by key; everything else,
/// arrays included, is replaced after a type check.
inline void merge(Json& base, const Json& user, const std::string& path) {
  const std::string prefix = path.empty() ? "" : path + ".";
  if (base.is_object()) {
    if (!user.is_object()) throw Error(ErrorCode::ValidationError, path + ": expected an object");
    for (auto it = user.begin(); it != user.end(); ++it) {
      const std::string key_path = prefix + it.key();
      if (!base.contains(it.key())) throw Error(ErrorCode::ValidationError, key_path + ": unknown key");
      Json& slot = base[it.key()];
      if (slot.is_null() && !it.value().is_null()) {
        slot = it.value();  // optional value being set
      } else {
        merge(slot, it.value(), key_path);
      }
    }
    return;
  }
  if (!same_kind(base, user)) throw Error(ErrorCode::ValidationError, path + ": wrong value type");
  if (base.is_array()) {
    if (const Json* tmpl = element_template(path)) {
      // Elements are merged over the default element at the same index, or
      // the generic template past the end of the defaults.
      Json merged = Json::array();
      for (std::size_t i = 0; i < user.size(); ++i) {
        Json elem = i < base.size() ? base[i] : *tmpl;
        merge(elem, user[i], path + "[" + std::to_string(i) + "]");
        merged.push_back(std::move(elem));
      }
      base = std::move(merged);
      return;
    } else {
      if (user.size() != base.size() && !base.empty()) {
        throw Error(ErrorCode::ValidationError,
                    path + ": expected " + std::to_string(base.size()) + " elements");
      }
      for (std::size_t i = 0; i < user.size(); ++i) {
        if (!base.empty() && !same_kind(base[i], user[i])) {
          throw Error(ErrorCode::ValidationError, path + "[" + std::to_string(i) + "]: wrong value type");
        }
      }
    }
  }
  base = user;
}

inline std::size_t line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

class Reader {
 public:
  explicit Reader(const Json& doc) : doc_(doc) {}

  const Json& at(const std::string& path) const {
    const Json* cur = &doc_;
    std::size_t start = 0;
    while (start <= path.size()) {
      const auto dot = path.find('.', start);
      const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (!cur->is_object() || !cur->contains(key)) throw Error(ErrorCode::ValidationError, path + ": missing");
      cur = &(*cur)[key];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    return *cur;
  }

  double number(const std::string& path) const { return number_of(at(path), path); }

  static double number_of(const Json& v, const std::string& path) {
    if (!v.is_number()) throw Error(ErrorCode::ValidationError, path + ": expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw Error(ErrorCode::ValidationError, path + ": must be finite");
    return x;
  }

  double positive(const std::string& path) const {
    const double x = number(path);
    if (!(x > 0.0)) throw Error(ErrorCode::ValidationError, path + ": must be > 0");
    return x;
  }

  double non_negative(const std::string& path) const {
    const double x = number(path);
    if (!(x >= 0.0)) throw Error(ErrorCode::ValidationError, path + ": must be >= 0");
    return x;
  }

  static Vec3 vec3_of(const Json& v, const std::string& path) {
    if (!v.is_array() || v.size() != 3) throw Error(ErrorCode::ValidationError, path + ": expected 3 numbers");
    return {number_of(v[0], path), number_of(v[1], path), number_of(v[2], path)};
  }

  Vec3 vec3(const std::string& path) const { return vec3_of(at(path), path); }

  std::string string(const std::string& path) const {
    const Json& v = at(path);
    if (!v.is_string()) throw Error(ErrorCode::ValidationError, path + ": expected a string");
    return v.get<std::string>();
  }

 private:
  const Json& doc_;
};

}  // namespace config_detail

/// Fully populated document with every key at its default.
inline Json default_document(NoiseLevel level = NoiseLevel::Low) {
  const ScenarioConfig c = ScenarioConfig::defaults();
  Json inertia = Json::array();
  for (int r = 0; r < 3; ++r) inertia.push_back(Json::array({c.body.inertia(r, 0), c.body.inertia(r, 1), c.body.inertia(r, 2)}));
  using config_detail::vec_json;
  return {
      {"seed", 1},
      {"dt_s", 1e-3},
      {"noise_profile", to_string(level)},
      {"trace_decimation", 10},
      {"body",
       {{"mass_kg", 826.0},
        {"inertia_kg_m2", inertia},
        {"com_offset_m", vec_json(c.body.r_cm)},
        {"gravity_m_s2", vec_json(c.body.gravity)}}},
      {"disturbance",
       {{"damping_Nm_s_per_rad", Json::array({200.0, 200.0, 0.0})},
        {"coulomb_Nm", 0.75},
        {"coulomb_smoothing_rad_s", 1e-2}}},
      {"noise", config_detail::noise_json(NoiseProfile::preset(level))},
      {"gyro", {{"rate_hz", nullptr}, {"initial_bias_deg_s", Json::array({0.05, 0.03, -0.06})}}},
      {"cameras",
       Json::array({{{"reference", Json::array({1.0, 0.0, 0.0})}, {"phase_s", 0.0}},
                    {{"reference", Json::array({0.0, 0.0, 1.0})}, {"phase_s", 0.0}}})},
      {"controller",
       {{"kp_Nm_s_per_deg", 1.0},
        {"ki_Nm_per_deg", 0.2},
        {"lowpass_tau_s", 0.4},
        {"torque_limit_Nm", nullptr},
        {"feedback", "gyro"},
        {"angle_loop", {{"enabled", false}, {"kp_per_s", 0.2}, {"ki_per_s2", 0.0}, {"target_deg", 0.0}}}}},
      {"filter",
       {{"initial_error_deg", Json::array({10.0, 10.0, 10.0})},
        {"initial_bias_deg_s", Json::array({0.0, 0.0, 0.0})},
        {"p0_attitude_deg", 3.0},
        {"p0_bias_deg_s", 0.07},
        {"q_scale", 1.05},
        {"r_scale", 1.05},
        {"model_attitude_noise", true},
        {"tuning_profile", "sensors"}}},
      {"controlled",
       {{"duration_s", 360.0},
        {"metric_signal", "filtered"},
        {"settling_band", 0.02},
        {"steady_window_s", Json::array({190.0, 220.0})},
        {"reference",
         {{"ramp_deg_s2", 1.0},
          {"lead_in_s", 10.0},
          {"segments", Json::array({{{"target_deg_s", 30.0}, {"hold_s", 260.0}},
                                    {{"target_deg_s", 0.0}, {"hold_s", 30.0}}})}}}}},
      {"free_decay",
       {{"duration_s", 60.0},
        {"tilt_deg", 2.0},
        {"tilt_axis", Json::array({1.0, 0.0, 0.0})},
        {"omega0_deg_s", Json::array({-0.5, 0.5, -10.0})},
        {"steady_after_s", 15.0}}},
  };
}

/// Merge a user document over the defaults selected by its noise_profile.
inline Json resolve_document(const Json& user) {
  if (!user.is_null() && !user.is_object()) {
    throw Error(ErrorCode::ValidationError, "config root must be an object");
  }
  NoiseLevel level = NoiseLevel::Low;
  if (user.is_object() && user.contains("noise_profile")) {
    level = config_detail::parse_level(user["noise_profile"], "noise_profile");
  }
  Json doc = default_document(level);
  if (user.is_object()) config_detail::merge(doc, user, "");
  return doc;
}

/// Parse JSON text; whitespace-only text is an empty document.
inline Json parse_document(const std::string& text) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return Json::object();
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t line = config_detail::line_of(text, e.byte == 0 ? 0 : e.byte - 1);
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + e.what());
  }
}

inline ScenarioConfig config_from_document(const Json& resolved) {
  using units::deg2rad;
  const config_detail::Reader r(resolved);
  ScenarioConfig c = ScenarioConfig::defaults();

  const Json& seed = r.at("seed");
  if (!seed.is_number_integer() || (seed.is_number_integer() && !seed.is_number_unsigned() && seed.get<std::int64_t>() < 0)) {
    throw Error(ErrorCode::ValidationError, "seed: expected a non-negative integer");
  }
  c.seed = seed.get<std::uint64_t>();
  c.dt = r.positive("dt_s");
  c.noise_level = config_detail::parse_level(r.at("noise_profile"), "noise_profile");
  const Json& dec = r.at("trace_decimation");
  if (!dec.is_number_integer() || dec.get<std::int64_t>() < 1) {
    throw Error(ErrorCode::ValidationError, "trace_decimation: expected an integer >= 1");
  }
  c.trace_decimation = dec.get<std::size_t>();

  c.body.mass_kg = r.positive("body.mass_kg");
  const Json& inertia = r.at("body.inertia_kg_m2");
  if (!inertia.is_array() || inertia.size() != 3) {
    throw Error(ErrorCode::ValidationError, "body.inertia_kg_m2: expected a 3x3 array");
  }
  for (int i = 0; i < 3; ++i) {
    c.body.inertia.row(i) = config_detail::Reader::vec3_of(inertia[i], "body.inertia_kg_m2").transpose();
  }
  c.body.r_cm = r.vec3("body.com_offset_m");
  c.body.gravity = r.vec3("body.gravity_m_s2");
  if (!(c.body.r_cm.norm() > 0.0)) throw Error(ErrorCode::ValidationError, "body.com_offset_m: must be nonzero");
  try {
    c.body.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ValidationError, "body.inertia_kg_m2: " + e.detail());
  }

  const Vec3 damping = r.vec3("disturbance.damping_Nm_s_per_rad");
  if ((damping.array() < 0.0).any()) {
    throw Error(ErrorCode::ValidationError, "disturbance.damping_Nm_s_per_rad: must be >= 0");
  }
  c.damping = damping.asDiagonal();
  c.coulomb_Nm = r.non_negative("disturbance.coulomb_Nm");
  c.coulomb_smoothing_rad_s = r.positive("disturbance.coulomb_smoothing_rad_s");

  NoiseProfile& n = c.noise;
  n.torque_var = r.vec3("noise.torque_var_Nm2_s");
  if ((n.torque_var.array() < 0.0).any()) {
    throw Error(ErrorCode::ValidationError, "noise.torque_var_Nm2_s: must be >= 0");
  }
  n.attitude_sigma_deg = r.non_negative("noise.attitude_sigma_deg");
  n.gyro_sigma_deg_s = r.non_negative("noise.gyro_sigma_deg_s");
  n.bias_walk_deg_s = r.non_negative("noise.bias_walk_deg_s");
  for (int j = 0; j < 2; ++j) {
    const std::string idx = "[" + std::to_string(j) + "]";
    const Json& sig = r.at("noise.camera_sigma_deg");
    const Json& rate = r.at("noise.camera_rate_hz");
    if (sig.size() != 2 || rate.size() != 2) {
      throw Error(ErrorCode::ValidationError, "noise.camera_*: expected 2 cameras");
    }
    n.camera_sigma_deg[j] = config_detail::Reader::number_of(sig[j], "noise.camera_sigma_deg" + idx);
    n.camera_rate_hz[j] = config_detail::Reader::number_of(rate[j], "noise.camera_rate_hz" + idx);
    if (!(n.camera_sigma_deg[j] >= 0.0)) {
      throw Error(ErrorCode::ValidationError, "noise.camera_sigma_deg" + idx + ": must be >= 0");
    }
    if (!(n.camera_rate_hz[j] > 0.0)) {
      throw Error(ErrorCode::ValidationError, "noise.camera_rate_hz" + idx + ": must be > 0");
    }
  }

  if (!r.at("gyro.rate_hz").is_null()) c.gyro_rate_hz = r.positive("gyro.rate_hz");
  c.gyro_initial_bias = r.vec3("gyro.initial_bias_deg_s") * deg2rad(1.0);

  const Json& cams = r.at("cameras");
  if (!cams.is_array() || cams.size() != 2) throw Error(ErrorCode::ValidationError, "cameras: expected 2 entries");
  for (int j = 0; j < 2; ++j) {
    const std::string p = "cameras[" + std::to_string(j) + "]";
    c.cameras[j].reference = config_detail::Reader::vec3_of(cams[j].at("reference"), p + ".reference");
    if (std::abs(c.cameras[j].reference.norm() - 1.0) > 1e-12) {
      throw Error(ErrorCode::ValidationError, p + ".reference: must be a unit vector");
    }
    c.cameras[j].phase_s = config_detail::Reader::number_of(cams[j].at("phase_s"), p + ".phase_s");
  }
  if (!check_observability(c.cameras[0].reference, c.cameras[1].reference)) {
    throw Error(ErrorCode::ValidationError, "cameras: references must not be collinear");
  }

  c.controller.kp = r.non_negative("controller.kp_Nm_s_per_deg") / deg2rad(1.0);
  c.controller.ki = r.non_negative("controller.ki_Nm_per_deg") / deg2rad(1.0);
  c.controller.lowpass_tau_s = r.non_negative("controller.lowpass_tau_s");
  if (!r.at("controller.torque_limit_Nm").is_null()) {
    c.controller.torque_limit_Nm = r.positive("controller.torque_limit_Nm");
  }
  const std::string feedback = r.string("controller.feedback");
  if (feedback == "gyro") {
    c.controller.feedback = RateFeedback::Gyro;
  } else if (feedback == "estimate") {
    c.controller.feedback = RateFeedback::Estimate;
  } else if (feedback == "truth") {
    c.controller.feedback = RateFeedback::Truth;
  } else {
    throw Error(ErrorCode::ValidationError, "controller.feedback: expected gyro, estimate or truth");
  }
  const Json& enabled = r.at("controller.angle_loop.enabled");
  if (!enabled.is_boolean()) throw Error(ErrorCode::ValidationError, "controller.angle_loop.enabled: expected a boolean");
  if (enabled.get<bool>()) {
    AngleLoopConfig a;
    a.kp = r.non_negative("controller.angle_loop.kp_per_s");
    a.ki = r.non_negative("controller.angle_loop.ki_per_s2");
    a.target_rad = deg2rad(r.number("controller.angle_loop.target_deg"));
    c.controller.angle_loop = a;
  }

  c.filter.initial_rotvec = r.vec3("filter.initial_error_deg") * deg2rad(1.0);
  c.filter.initial_bias = r.vec3("filter.initial_bias_deg_s") * deg2rad(1.0);
  c.filter.p0_attitude_sigma = deg2rad(r.positive("filter.p0_attitude_deg"));
  c.filter.p0_bias_sigma = deg2rad(r.positive("filter.p0_bias_deg_s"));
  c.filter.q_scale = r.non_negative("filter.q_scale");
  c.filter.r_scale = r.positive("filter.r_scale");
  const Json& man = r.at("filter.model_attitude_noise");
  if (!man.is_boolean()) throw Error(ErrorCode::ValidationError, "filter.model_attitude_noise: expected a boolean");
  c.filter.model_attitude_noise = man.get<bool>();
  const std::string tuning = r.string("filter.tuning_profile");
  if (tuning == "low") {
    c.filter.tuning_noise = NoiseProfile::low();
  } else if (tuning == "high") {
    c.filter.tuning_noise = NoiseProfile::high();
  } else if (tuning != "sensors") {
    throw Error(ErrorCode::ValidationError, "filter.tuning_profile: expected sensors, low or high");
  }

  ControlledSetup& ctl = c.controlled;
  ctl.duration_s = r.positive("controlled.duration_s");
  const std::string signal = r.string("controlled.metric_signal");
  if (signal == "filtered") {
    ctl.metric_signal = MetricSignal::Filtered;
  } else if (signal == "truth") {
    ctl.metric_signal = MetricSignal::Truth;
  } else {
    throw Error(ErrorCode::ValidationError, "controlled.metric_signal: expected filtered or truth");
  }
  ctl.settling_band = r.positive("controlled.settling_band");
  const Json& win = r.at("controlled.steady_window_s");
  if (win.size() != 2) throw Error(ErrorCode::ValidationError, "controlled.steady_window_s: expected [t0, t1]");
  ctl.steady_t0_s = config_detail::Reader::number_of(win[0], "controlled.steady_window_s");
  ctl.steady_t1_s = config_detail::Reader::number_of(win[1], "controlled.steady_window_s");
  if (!(ctl.steady_t1_s > ctl.steady_t0_s)) {
    throw Error(ErrorCode::ValidationError, "controlled.steady_window_s: t1 must exceed t0");
  }
  ctl.reference.ramp_rate = deg2rad(r.positive("controlled.reference.ramp_deg_s2"));
  ctl.reference.lead_in_s = r.non_negative("controlled.reference.lead_in_s");
  ctl.reference.segments.clear();
  const Json& segs = r.at("controlled.reference.segments");
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const std::string p = "controlled.reference.segments[" + std::to_string(i) + "]";
    RampSegment s;
    s.target = deg2rad(config_detail::Reader::number_of(segs[i].at("target_deg_s"), p + ".target_deg_s"));
    s.hold_s = config_detail::Reader::number_of(segs[i].at("hold_s"), p + ".hold_s");
    if (!(s.hold_s >= 0.0)) throw Error(ErrorCode::ValidationError, p + ".hold_s: must be >= 0");
    ctl.reference.segments.push_back(s);
  }

  FreeDecaySetup& fd = c.free_decay;
  fd.duration_s = r.positive("free_decay.duration_s");
  fd.tilt_rad = deg2rad(r.number("free_decay.tilt_deg"));
  fd.tilt_axis = r.vec3("free_decay.tilt_axis");
  if (!(fd.tilt_axis.norm() > 0.0)) throw Error(ErrorCode::ValidationError, "free_decay.tilt_axis: must be nonzero");
  fd.omega0 = r.vec3("free_decay.omega0_deg_s") * deg2rad(1.0);
  fd.steady_after_s = r.non_negative("free_decay.steady_after_s");

  c.validate();
  return c;
}

struct LoadedConfig {
  ScenarioConfig config;
  Json resolved;
};

inline LoadedConfig load_config_text(const std::string& text) {
  LoadedConfig out;
  out.resolved = resolve_document(parse_document(text));
  out.config = config_from_document(out.resolved);
  return out;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline LoadedConfig load_config(const std::string& path) { return load_config_text(read_text_file(path)); }

}  // namespace pivotsim
