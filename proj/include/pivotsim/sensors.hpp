#pragma once

// Gyroscope with random-walk bias and star cameras returning noisy body-frame
// unit vectors toward known inertial directions.

#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pivotsim/csv.hpp"
#include "pivotsim/errors.hpp"
#include "pivotsim/random.hpp"
#include "pivotsim/so3.hpp"

namespace pivotsim {

struct GyroModel {
  Mat3 rate_cov = Mat3::Zero();       // per-sample white noise (rad/s)^2
  Mat3 bias_walk_cov = Mat3::Zero();  // per-sample bias increment (rad/s)^2
  Vec3 bias = Vec3::Zero();           // current true bias [rad/s]
  double rate_hz = 1000.0;
};

struct GyroNoise {
  Gaussian3 rate;
  Gaussian3 walk;
  NormalStream rate_stream;
  NormalStream walk_stream;

  GyroNoise() = default;
  GyroNoise(const GyroModel& m, std::uint64_t seed)
      : rate(m.rate_cov), walk(m.bias_walk_cov), rate_stream(seed, "gyro"), walk_stream(seed, "bias") {}
};

/// omega_true + b + eta_g, then b <- b + eta_b.
inline Vec3 gyro_sample(const Vec3& omega_true, GyroModel& model, GyroNoise& noise) {
  const Vec3 out = omega_true + model.bias + noise.rate.sample(noise.rate_stream);
  model.bias += noise.walk.sample(noise.walk_stream);
  return out;
}

struct StarCameraModel {
  Vec3 reference = Vec3::UnitX();  // inertial unit vector
  Mat3 noise_cov = Mat3::Zero();   // rad^2
  double rate_hz = 1.0;
  double phase_s = 0.0;

  void validate() const {
    if (std::abs(reference.norm() - 1.0) > 1e-12) {
      throw Error(ErrorCode::ValidationError, "camera reference must be a unit vector");
    }
    if (!(rate_hz > 0.0)) throw Error(ErrorCode::ValidationError, "camera rate must be > 0");
  }
};

/// Fixed-rate trigger: due times are phase + k / rate for k = 1, 2, ...
/// Each due time fires exactly once, on the first query at or after it.
class CameraClock {
 public:
  static constexpr double kTolerance = 1e-9;

  CameraClock() = default;
  CameraClock(double rate_hz, double phase_s) : period_(1.0 / rate_hz), phase_(phase_s) {}

  bool due(double t) {
    if (t + kTolerance < next_time()) return false;
    // Skip every due time already passed so one query fires at most once.
    while (next_time() <= t + kTolerance) ++k_;
    return true;
  }

  double next_time() const { return phase_ + static_cast<double>(k_) * period_; }

 private:
  double period_ = 1.0;
  double phase_ = 0.0;
  std::uint64_t k_ = 1;
};

inline bool camera_due(double t, CameraClock& clock) { return clock.due(t); }

/// normalize(exp(-dn^x) C y_i) with dn ~ N(0, noise_cov).
inline Vec3 camera_sample(const RotationMatrix& c_bi, const StarCameraModel& cam,
                          const Gaussian3& noise, NormalStream& stream) {
  const Vec3 dn = noise.sample(stream);
  return (so3::exp_rotvec(-dn) * (c_bi * cam.reference)).normalized();
}

inline bool check_observability(const Vec3& y1, const Vec3& y2) {
  return y1.cross(y2).norm() > 1e-6;
}

/// One camera with its schedule and noise stream.
class StarCamera {
 public:
  StarCamera(const StarCameraModel& model, std::uint64_t seed, int index)
      : model_(model),
        clock_(model.rate_hz, model.phase_s),
        noise_(model.noise_cov),
        stream_(seed, "camera" + std::to_string(index)) {
    model_.validate();
  }

  std::optional<Vec3> poll(double t, const RotationMatrix& c_bi) {
    if (!clock_.due(t)) return std::nullopt;
    return camera_sample(c_bi, model_, noise_, stream_);
  }

  const StarCameraModel& model() const { return model_; }

 private:
  StarCameraModel model_;
  CameraClock clock_;
  Gaussian3 noise_;
  NormalStream stream_;
};

struct GyroSample {
  double t = 0.0;
  Vec3 rate = Vec3::Zero();
};

struct CameraSample {
  double t = 0.0;
  int camera = 0;  // zero-based
  Vec3 direction = Vec3::UnitX();
};

/// Timestamped sensor outputs. A gyro sample at t covers [t, t + dt); a
/// camera sample at t observes the attitude at t.
struct MeasurementStream {
  std::vector<GyroSample> gyro;
  std::vector<CameraSample> camera;

  void validate() const {
    for (std::size_t i = 1; i < gyro.size(); ++i) {
      if (!(gyro[i].t > gyro[i - 1].t)) {
        throw Error(ErrorCode::ValidationError, "gyro timestamps must be strictly increasing");
      }
    }
    std::vector<double> last;
    for (const auto& c : camera) {
      if (c.camera < 0) throw Error(ErrorCode::ValidationError, "negative camera index");
      if (static_cast<std::size_t>(c.camera) >= last.size()) last.resize(c.camera + 1, -INFINITY);
      if (!(c.t > last[c.camera])) {
        throw Error(ErrorCode::ValidationError, "camera timestamps must be strictly increasing");
      }
      last[c.camera] = c.t;
    }
  }
};

inline void write_measurements(std::ostream& out, const MeasurementStream& m) {
  out << "t_s,channel,x,y,z\n";
  // Merge by time; at equal times the camera rows come first since they are
  // applied before the gyro propagation of that step.
  std::size_t gi = 0;
  std::size_t ci = 0;
  auto emit = [&out](double t, const std::string& ch, const Vec3& v) {
    out << csv::format_number(t) << ',' << ch << ',' << csv::format_number(v.x()) << ','
        << csv::format_number(v.y()) << ',' << csv::format_number(v.z()) << '\n';
  };
  while (gi < m.gyro.size() || ci < m.camera.size()) {
    const bool take_cam =
        ci < m.camera.size() && (gi >= m.gyro.size() || m.camera[ci].t <= m.gyro[gi].t);
    if (take_cam) {
      emit(m.camera[ci].t, "cam" + std::to_string(m.camera[ci].camera + 1), m.camera[ci].direction);
      ++ci;
    } else {
      emit(m.gyro[gi].t, "gyro", m.gyro[gi].rate);
      ++gi;
    }
  }
}

inline MeasurementStream read_measurements(std::istream& in) {
  const csv::Table table = csv::parse(in);
  const std::size_t ct = table.column("t_s");
  const std::size_t cc = table.column("channel");
  const std::size_t cx = table.column("x");
  const std::size_t cy = table.column("y");
  const std::size_t cz = table.column("z");
  MeasurementStream m;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const double t = csv::parse_number(row[ct]);
    const Vec3 v(csv::parse_number(row[cx]), csv::parse_number(row[cy]), csv::parse_number(row[cz]));
    const std::string& ch = row[cc];
    if (ch == "gyro") {
      m.gyro.push_back({t, v});
    } else if (ch.size() > 3 && ch.rfind("cam", 0) == 0) {
      const int idx = std::stoi(ch.substr(3)) - 1;
      m.camera.push_back({t, idx, v});
    } else {
      throw Error(ErrorCode::ParseError,
                  "line " + std::to_string(table.lines[r]) + ": unknown channel '" + ch + "'");
    }
  }
  m.validate();
  return m;
}

}  // namespace pivotsim
