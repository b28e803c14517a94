#pragma once

#include <numbers>

namespace pivotsim::units {

inline constexpr double kDegToRad = std::numbers::pi / 180.0;
inline constexpr double kRadToDeg = 180.0 / std::numbers::pi;

constexpr double deg2rad(double deg) { return deg * kDegToRad; }
constexpr double rad2deg(double rad) { return rad * kRadToDeg; }

}  // namespace pivotsim::units
