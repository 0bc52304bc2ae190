#pragma once

// The kernel runs in SI (m, m/s, s, rad). Aviation units are converted only
// at configuration and reporting boundaries.

#include <numbers>

namespace sepassure::units {

inline constexpr double kNauticalMile = 1852.0;        // m
inline constexpr double kKnot = 1852.0 / 3600.0;       // m/s
inline constexpr double kFoot = 0.3048;                // m
inline constexpr double kPi = std::numbers::pi;

constexpr double nm(double v) { return v * kNauticalMile; }
constexpr double kt(double v) { return v * kKnot; }
constexpr double ft(double v) { return v * kFoot; }
constexpr double deg(double v) { return v * kPi / 180.0; }

constexpr double to_nm(double m) { return m / kNauticalMile; }
constexpr double to_kt(double mps) { return mps / kKnot; }
constexpr double to_deg(double rad) { return rad * 180.0 / kPi; }

}  // namespace sepassure::units
