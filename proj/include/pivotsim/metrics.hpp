#pragma once

// Tracking-performance metrics on sampled yaw-rate traces and batch
// aggregation of per-run metrics.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "pivotsim/errors.hpp"

namespace pivotsim {

/// Sample times and values of one scalar signal.
struct Series {
  std::vector<double> t;
  std::vector<double> v;

  void push(double time, double value) {
    t.push_back(time);
    v.push_back(value);
  }
  std::size_t size() const { return t.size(); }
};

namespace detail {

inline std::pair<std::size_t, std::size_t> window_indices(const Series& s, double t0, double t1) {
  constexpr double eps = 1e-9;
  const auto lo = std::lower_bound(s.t.begin(), s.t.end(), t0 - eps);
  const auto hi = std::upper_bound(s.t.begin(), s.t.end(), t1 + eps);
  return {static_cast<std::size_t>(lo - s.t.begin()), static_cast<std::size_t>(hi - s.t.begin())};
}

}  // namespace detail

/// Peak exceedance beyond `target` over [ramp_end, hold_end], in percent of
/// |target|; 0 when the trace never passes the target.
inline double compute_overshoot(const Series& trace, double target, double ramp_end, double hold_end) {
  if (trace.size() == 0 || trace.t.back() + 1e-9 < ramp_end) {
    throw Error(ErrorCode::NoRampEnd, "trace ends before the reference reaches its target");
  }
  if (target == 0.0) return 0.0;
  const auto [i0, i1] = detail::window_indices(trace, ramp_end, hold_end);
  const double sign = target > 0.0 ? 1.0 : -1.0;
  double peak = 0.0;
  for (std::size_t i = i0; i < i1; ++i) {
    peak = std::max(peak, sign * (trace.v[i] - target));
  }
  return 100.0 * peak / std::abs(target);
}

/// Time from `start` after which |trace - reference| <= band |target| holds
/// through `end`. `reference` must be sampled at the same times as `trace`.
inline double compute_settling(const Series& trace, const Series& reference, double target, double band,
                               double start, double end) {
  if (trace.size() != reference.size()) {
    throw Error(ErrorCode::InvalidArgument, "trace and reference must be aligned");
  }
  const auto [i0, i1] = detail::window_indices(trace, start, end);
  if (i0 >= i1) throw Error(ErrorCode::InvalidArgument, "settling window is empty");
  const double tol = band * std::abs(target);
  auto inside = [&](std::size_t i) { return std::abs(trace.v[i] - reference.v[i]) <= tol; };
  if (!inside(i1 - 1)) {
    throw Error(ErrorCode::Unsettled, "trace leaves the band at the end of the window");
  }
  std::size_t first = i0;
  for (std::size_t i = i1; i-- > i0;) {
    if (!inside(i)) {
      first = i + 1;
      break;
    }
  }
  return trace.t[first] - start;
}

/// Sample standard deviation (n - 1) over [t0, t1].
inline double compute_steady_sigma(const Series& trace, double t0, double t1) {
  const auto [i0, i1] = detail::window_indices(trace, t0, t1);
  const std::size_t n = i1 > i0 ? i1 - i0 : 0;
  if (n < 100) throw Error(ErrorCode::WindowTooShort, "fewer than 100 samples in the window");
  double mean = 0.0;
  for (std::size_t i = i0; i < i1; ++i) mean += trace.v[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = i0; i < i1; ++i) ss += (trace.v[i] - mean) * (trace.v[i] - mean);
  return std::sqrt(ss / static_cast<double>(n - 1));
}

/// Mean and sample standard deviation; sigma is 0 for a single value.
struct Stat {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double sigma = std::numeric_limits<double>::quiet_NaN();
  std::size_t count = 0;
};

/// NaN entries are skipped so metrics absent from some runs aggregate cleanly.
inline Stat summarize(std::span<const double> values) {
  std::vector<double> v;
  for (double x : values) {
    if (!std::isnan(x)) v.push_back(x);
  }
  Stat s;
  s.count = v.size();
  if (v.empty()) return s;
  // Sorting first makes the sums independent of run order.
  std::sort(v.begin(), v.end());
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() == 1) {
    s.sigma = 0.0;
    return s;
  }
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.sigma = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return s;
}

}  // namespace pivotsim
