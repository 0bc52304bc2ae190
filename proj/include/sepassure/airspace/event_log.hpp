#pragma once

// CSV logs.
//
// Event log header (one row per SafetyEvent):
//   time_s,kind,id_a,id_b,separation_m,t_los_s
// kind is conflict | los | nmac; t_los_s is empty unless kind == conflict.
//
// Trajectory log header (one row per active aircraft per decision step):
//   time_s,id,x_m,y_m,heading_rad,cas_kt,desired_kt,route,leg

#include <cstdio>
#include <ostream>
#include <span>
#include <string>

#include "sepassure/airspace/conflict.hpp"
#include "sepassure/airspace/world.hpp"

namespace sepassure::airspace {

inline constexpr const char* kEventLogHeader = "time_s,kind,id_a,id_b,separation_m,t_los_s";
inline constexpr const char* kTrajectoryHeader =
    "time_s,id,x_m,y_m,heading_rad,cas_kt,desired_kt,route,leg";

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_event_rows(std::ostream& os, std::span<const SafetyEvent> events) {
  for (const auto& e : events) {
    os << format_double(e.time) << ',' << event_kind_name(e.kind) << ',' << e.a << ',' << e.b
       << ',' << format_double(e.separation) << ',';
    if (e.t_los) os << format_double(*e.t_los);
    os << '\n';
  }
}

inline void write_trajectory_rows(std::ostream& os, const WorldState& w) {
  for (const auto& a : w.aircraft) {
    if (!a.active()) continue;
    os << format_double(w.clock) << ',' << a.id << ',' << format_double(a.position.x) << ','
       << format_double(a.position.y) << ',' << format_double(a.heading) << ','
       << format_double(units::to_kt(a.cas)) << ',' << format_double(units::to_kt(a.desired_cas))
       << ',' << a.route << ',' << a.leg << '\n';
  }
}

}  // namespace sepassure::airspace
