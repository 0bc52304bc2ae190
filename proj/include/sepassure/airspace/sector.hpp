#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "sepassure/airspace/geometry.hpp"
#include "sepassure/airspace/units.hpp"
#include "sepassure/errors.hpp"

namespace sepassure::airspace {

struct SectorParams {
  double sector_radius = units::nm(30.0);
  double r_pz = units::nm(5.0);
  double r_nmac = units::ft(500.0);
  double v_min = 0.0;
  double v_max = units::kt(150.0);
  double speed_increment = units::kt(5.0);
  double decision_interval = 1.0;
  double lookahead = 120.0;
  double arrival_capture_radius = 100.0;
  double timeout_buffer = 20.0 * 60.0;

  void validate() const {
    if (!(r_nmac > 0.0 && r_nmac < r_pz && r_pz < sector_radius))
      throw ConfigError("sector radii must satisfy 0 < r_nmac < r_pz < sector_radius");
    if (v_min != 0.0 || v_max < v_min) throw ConfigError("speed bounds must satisfy 0 = v_min <= v_max");
    if (!(speed_increment > 0.0)) throw ConfigError("speed_increment must be positive");
    if (!(decision_interval > 0.0)) throw ConfigError("decision_interval must be positive");
    if (!(lookahead > 0.0)) throw ConfigError("lookahead must be positive");
    if (arrival_capture_radius < 0.0 || timeout_buffer < 0.0)
      throw ConfigError("capture radius and timeout buffer must be non-negative");
  }
};

struct Route {
  std::vector<Vec2> waypoints;

  double length() const {
    double s = 0.0;
    for (std::size_t i = 1; i < waypoints.size(); ++i) s += distance(waypoints[i - 1], waypoints[i]);
    return s;
  }
  std::size_t legs() const { return waypoints.empty() ? 0 : waypoints.size() - 1; }
  Vec2 origin() const { return waypoints.front(); }
  Vec2 destination() const { return waypoints.back(); }
  double leg_heading(std::size_t leg) const { return bearing(waypoints[leg], waypoints[leg + 1]); }
};

// Throws GenerationError if the polyline is degenerate or leaves the disk
// (with `tolerance` metres of slack for boundary points).
inline void validate_route(const Route& r, double sector_radius, double tolerance = 1e-6) {
  if (r.waypoints.size() < 2) throw GenerationError("route needs at least two waypoints");
  for (std::size_t i = 0; i < r.waypoints.size(); ++i) {
    if (norm(r.waypoints[i]) > sector_radius + tolerance)
      throw GenerationError("route waypoint outside the sector");
    if (i > 0 && r.waypoints[i] == r.waypoints[i - 1])
      throw GenerationError("route has repeated consecutive waypoints");
  }
}

enum class Advisory : int { Decrease = 0, Hold = 1, Increase = 2 };

inline constexpr std::array<Advisory, 3> kAdvisories{Advisory::Decrease, Advisory::Hold,
                                                     Advisory::Increase};
inline constexpr std::size_t kNumAdvisories = kAdvisories.size();

constexpr Advisory advisory_from_index(std::size_t i) { return kAdvisories.at(i); }
constexpr std::size_t advisory_index(Advisory a) { return static_cast<std::size_t>(a); }
constexpr int advisory_sign(Advisory a) { return static_cast<int>(a) - 1; }

inline const char* advisory_name(Advisory a) {
  switch (a) {
    case Advisory::Decrease: return "decrease";
    case Advisory::Hold: return "hold";
    case Advisory::Increase: return "increase";
  }
  return "?";
}

// Training: two random routes. CaseA/B/C: held-out evaluation sectors.
// HeadOn: two aircraft on near-reciprocal routes, used for smoke training.
enum class EnvKind { Training, CaseA, CaseB, CaseC, HeadOn };

inline std::string_view env_kind_name(EnvKind k) {
  switch (k) {
    case EnvKind::Training: return "training";
    case EnvKind::CaseA: return "a";
    case EnvKind::CaseB: return "b";
    case EnvKind::CaseC: return "c";
    case EnvKind::HeadOn: return "head_on";
  }
  return "?";
}

inline EnvKind parse_env_kind(std::string_view s) {
  if (s == "training") return EnvKind::Training;
  if (s == "a" || s == "A" || s == "case_a") return EnvKind::CaseA;
  if (s == "b" || s == "B" || s == "case_b") return EnvKind::CaseB;
  if (s == "c" || s == "C" || s == "case_c") return EnvKind::CaseC;
  if (s == "head_on" || s == "headon") return EnvKind::HeadOn;
  throw ConfigError("unknown case id '" + std::string(s) + "'");
}

}  // namespace sepassure::airspace
