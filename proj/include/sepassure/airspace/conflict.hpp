#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "sepassure/airspace/aircraft.hpp"
#include "sepassure/airspace/geometry.hpp"
#include "sepassure/airspace/sector.hpp"

namespace sepassure::airspace {

// Smallest t >= 0 with |p + v t| = r for straight-line relative motion.
// Zero when already inside (|p| <= r), nullopt when the disk is never reached.
inline std::optional<double> time_to_los(Vec2 p, Vec2 v, double r) {
  const double c = dot(p, p) - r * r;
  if (c <= 0.0) return 0.0;
  const double a = dot(v, v);
  const double b = dot(p, v);  // half of the linear coefficient
  if (a == 0.0 || b >= 0.0) return std::nullopt;
  const double disc = b * b - a * c;
  if (disc < 0.0) return std::nullopt;
  // Entry root (-b - sqrt(disc)) / a, written as c / (-b + sqrt(disc)) to
  // avoid cancellation when the approach is nearly tangent.
  return c / (-b + std::sqrt(disc));
}

enum class EventKind { Conflict, LoS, Nmac };

inline std::string_view event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::Conflict: return "conflict";
    case EventKind::LoS: return "los";
    case EventKind::Nmac: return "nmac";
  }
  return "?";
}

struct SafetyEvent {
  EventKind kind = EventKind::Conflict;
  int a = 0;  // lower id
  int b = 0;
  double time = 0.0;
  double separation = 0.0;        // m, at detection
  std::optional<double> t_los;    // Conflict only

  bool involves(int id) const { return a == id || b == id; }
};

// Classifies one pair: NMAC, else LoS, else a predicted conflict within the
// look-ahead under straight-line extrapolation (upcoming turns ignored).
inline std::optional<SafetyEvent> classify_pair(const AircraftState& i, const AircraftState& j,
                                                const SectorParams& s, double clock) {
  const Vec2 p = j.position - i.position;
  const double d = norm(p);
  SafetyEvent e;
  e.a = std::min(i.id, j.id);
  e.b = std::max(i.id, j.id);
  e.time = clock;
  e.separation = d;
  if (d <= s.r_nmac) {
    e.kind = EventKind::Nmac;
    return e;
  }
  if (d <= s.r_pz) {
    e.kind = EventKind::LoS;
    return e;
  }
  const auto t = time_to_los(p, j.velocity() - i.velocity(), s.r_pz);
  if (t && *t <= s.lookahead) {
    e.kind = EventKind::Conflict;
    e.t_los = *t;
    return e;
  }
  return std::nullopt;
}

inline std::vector<SafetyEvent> detect_events(std::span<const AircraftState> aircraft,
                                              const SectorParams& s, double clock) {
  std::vector<SafetyEvent> events;
  for (std::size_t i = 0; i < aircraft.size(); ++i) {
    if (!aircraft[i].active()) continue;
    for (std::size_t j = i + 1; j < aircraft.size(); ++j) {
      if (!aircraft[j].active()) continue;
      if (auto e = classify_pair(aircraft[i], aircraft[j], s, clock)) events.push_back(*e);
    }
  }
  return events;
}

}  // namespace sepassure::airspace
