#pragma once

#include <cstddef>
#include <string_view>

#include "sepassure/airspace/geometry.hpp"

namespace sepassure::airspace {

enum class Status { Active, Arrived, TimedOut, NmacRemoved, EarlyTerminated };

inline std::string_view status_name(Status s) {
  switch (s) {
    case Status::Active: return "active";
    case Status::Arrived: return "arrived";
    case Status::TimedOut: return "timed_out";
    case Status::NmacRemoved: return "nmac_removed";
    case Status::EarlyTerminated: return "early_terminated";
  }
  return "?";
}

struct AircraftState {
  int id = 0;
  Vec2 position;
  double heading = 0.0;      // rad, CCW from east; direction of the current leg
  double cas = 0.0;          // m/s
  double desired_cas = 0.0;  // m/s
  std::size_t route = 0;     // index into WorldState::routes
  std::size_t leg = 0;       // current leg: waypoints[leg] -> waypoints[leg + 1]
  double spawn_time = 0.0;
  double eta_deadline = 0.0;
  Status status = Status::Active;
  double removal_time = 0.0;

  bool active() const { return status == Status::Active; }
  Vec2 velocity() const { return cas * unit_from_angle(heading); }
};

}  // namespace sepassure::airspace
