#pragma once

// Sector layouts and spawn schedules for the training and evaluation
// environments. Every draw comes from the caller's generator, so a seed fully
// determines the scenario.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "sepassure/airspace/geometry.hpp"
#include "sepassure/airspace/sector.hpp"
#include "sepassure/airspace/units.hpp"
#include "sepassure/errors.hpp"

namespace sepassure::airspace {

using Rng = std::mt19937_64;

struct ScenarioParams {
  double min_endpoint_separation = units::nm(5.0);
  std::size_t max_generation_draws = 10'000;
  // Head-on smoke scenario: distance from each origin to the crossing point
  // and the angle between the two ground tracks.
  double head_on_half_length = units::nm(5.0);
  double head_on_angle = units::deg(170.0);
  // 0 draws the aircraft count from the environment's distribution.
  int aircraft_override = 0;
};

struct SpawnRequest {
  double time = 0.0;
  std::size_t route = 0;
  double desired_cas = 0.0;
};

struct Scenario {
  EnvKind kind = EnvKind::Training;
  std::vector<Route> routes;
  std::vector<SpawnRequest> spawns;  // sorted by time
  double rotation = 0.0;
};

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Vec2 uniform_in_disk(Rng& rng, double radius) {
  const double r = radius * std::sqrt(uniform(rng, 0.0, 1.0));
  const double a = uniform(rng, 0.0, 2.0 * units::kPi);
  return r * unit_from_angle(a);
}

inline std::vector<Route> rotate_routes(std::vector<Route> routes, double angle) {
  for (auto& r : routes)
    for (auto& w : r.waypoints) w = rotate(w, angle);
  return routes;
}

// Two straight routes; all four endpoints uniform in the disk and pairwise at
// least min_endpoint_separation apart; each direction a fair coin.
inline std::vector<Route> generate_training_sector(Rng& rng, const SectorParams& sector,
                                                   const ScenarioParams& sp = {}) {
  for (std::size_t draw = 0; draw < sp.max_generation_draws; ++draw) {
    std::array<Vec2, 4> p;
    for (auto& q : p) q = uniform_in_disk(rng, sector.sector_radius);
    bool ok = true;
    for (std::size_t i = 0; i < 4 && ok; ++i)
      for (std::size_t j = i + 1; j < 4 && ok; ++j)
        ok = distance(p[i], p[j]) >= sp.min_endpoint_separation;
    if (!ok) continue;
    std::vector<Route> routes{Route{{p[0], p[1]}}, Route{{p[2], p[3]}}};
    for (auto& r : routes)
      if (std::bernoulli_distribution(0.5)(rng)) std::reverse(r.waypoints.begin(), r.waypoints.end());
    return routes;
  }
  throw GenerationError("training sector: endpoint separation not met within draw cap");
}

// Unrotated Case A/B layouts. Case A: inbound legs from the boundary at
// 150/180/210 degrees merge at the centre and share one outbound leg to 0
// degrees. Case B adds a route crossing the outbound leg perpendicularly at its
// midpoint, flown south to north.
inline std::vector<Route> structured_case_geometry(EnvKind kind, double sector_radius) {
  if (kind != EnvKind::CaseA && kind != EnvKind::CaseB)
    throw ConfigError("structured geometry exists only for cases A and B");
  const double R = sector_radius;
  const Vec2 merge{0.0, 0.0};
  const Vec2 exit = R * unit_from_angle(0.0);
  std::vector<Route> routes;
  for (double b : {150.0, 180.0, 210.0})
    routes.push_back(Route{{R * unit_from_angle(units::deg(b)), merge, exit}});
  if (kind == EnvKind::CaseB) {
    const double x = 0.5 * R;
    const double y = std::sqrt(R * R - x * x);
    routes.push_back(Route{{Vec2{x, -y}, Vec2{x, y}}});
  }
  return routes;
}

// One route: boundary entry, interior waypoint uniform in the disk, boundary exit.
inline Route generate_unstructured_route(Rng& rng, const SectorParams& sector,
                                         const ScenarioParams& sp = {}) {
  const double R = sector.sector_radius;
  for (std::size_t draw = 0; draw < sp.max_generation_draws; ++draw) {
    const Vec2 entry = R * unit_from_angle(uniform(rng, 0.0, 2.0 * units::kPi));
    const Vec2 exit = R * unit_from_angle(uniform(rng, 0.0, 2.0 * units::kPi));
    const Vec2 mid = uniform_in_disk(rng, R);
    if (distance(entry, mid) > 1.0 && distance(mid, exit) > 1.0) return Route{{entry, mid, exit}};
  }
  throw GenerationError("unstructured route: degenerate draws exceeded cap");
}

// Near-reciprocal pair of straight routes crossing at the centre.
inline std::vector<Route> head_on_geometry(double rotation, const ScenarioParams& sp) {
  const double D = sp.head_on_half_length;
  std::vector<Route> routes;
  for (double h : {rotation, rotation + sp.head_on_angle}) {
    const Vec2 u = unit_from_angle(h);
    routes.push_back(Route{{-D * u, D * u}});
  }
  return routes;
}

// Route set for a case; A/B/HeadOn are rotated by U(0, 2pi).
inline std::vector<Route> generate_case(EnvKind kind, Rng& rng, const SectorParams& sector,
                                        std::size_t n_aircraft, const ScenarioParams& sp = {},
                                        double* rotation_out = nullptr) {
  double rotation = 0.0;
  std::vector<Route> routes;
  switch (kind) {
    case EnvKind::Training:
      routes = generate_training_sector(rng, sector, sp);
      break;
    case EnvKind::CaseA:
    case EnvKind::CaseB:
      rotation = uniform(rng, 0.0, 2.0 * units::kPi);
      routes = rotate_routes(structured_case_geometry(kind, sector.sector_radius), rotation);
      break;
    case EnvKind::CaseC:
      if (n_aircraft < 1) throw ConfigError("case C needs at least one aircraft");
      for (std::size_t i = 0; i < n_aircraft; ++i)
        routes.push_back(generate_unstructured_route(rng, sector, sp));
      break;
    case EnvKind::HeadOn:
      rotation = uniform(rng, 0.0, 2.0 * units::kPi);
      routes = head_on_geometry(rotation, sp);
      break;
    default:
      throw ConfigError("unknown case id");
  }
  if (rotation_out) *rotation_out = rotation;
  return routes;
}

inline int draw_aircraft_count(Rng& rng, EnvKind kind) {
  switch (kind) {
    case EnvKind::CaseC: return std::uniform_int_distribution<int>(1, 10)(rng);
    case EnvKind::HeadOn: return 2;
    default: return std::uniform_int_distribution<int>(1, 20)(rng);
  }
}

inline double draw_desired_speed(Rng& rng, EnvKind kind) {
  if (kind == EnvKind::CaseA || kind == EnvKind::CaseB) return units::kt(110.0);
  return units::kt(uniform(rng, 60.0, 120.0));
}

// Spawn times, route assignment and desired speeds.
//   Training/A/B: uniform route choice; per-route spacing U(60, 1200) s with
//   the first aircraft of each route at t = 0.
//   C: aircraft k owns route k; spacing is sequential across aircraft.
//   HeadOn: one aircraft per route at t = 0 with a shared desired speed.
inline std::vector<SpawnRequest> build_spawn_schedule(Rng& rng, EnvKind kind,
                                                      std::size_t n_routes, int n_aircraft = 0) {
  if (n_routes == 0) throw ConfigError("spawn schedule needs at least one route");
  std::vector<SpawnRequest> out;
  std::uniform_real_distribution<double> spacing(60.0, 1200.0);
  if (kind == EnvKind::HeadOn) {
    const double v = draw_desired_speed(rng, kind);
    for (std::size_t r = 0; r < n_routes; ++r) out.push_back({0.0, r, v});
    return out;
  }
  if (kind == EnvKind::CaseC) {
    double t = 0.0;
    for (std::size_t k = 0; k < n_routes; ++k) {
      if (k > 0) t += spacing(rng);
      out.push_back({t, k, draw_desired_speed(rng, kind)});
    }
    return out;
  }
  const int n = n_aircraft > 0 ? n_aircraft : draw_aircraft_count(rng, kind);
  std::vector<double> next_time(n_routes, 0.0);
  std::vector<bool> used(n_routes, false);
  std::uniform_int_distribution<std::size_t> pick_route(0, n_routes - 1);
  for (int k = 0; k < n; ++k) {
    const std::size_t r = pick_route(rng);
    if (used[r]) next_time[r] += spacing(rng);
    used[r] = true;
    out.push_back({next_time[r], r, draw_desired_speed(rng, kind)});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const SpawnRequest& a, const SpawnRequest& b) { return a.time < b.time; });
  return out;
}

inline Scenario generate_scenario(EnvKind kind, Rng& rng, const SectorParams& sector,
                                  const ScenarioParams& sp = {}) {
  Scenario sc;
  sc.kind = kind;
  std::size_t n_c = 0;
  if (kind == EnvKind::CaseC)
    n_c = static_cast<std::size_t>(sp.aircraft_override > 0 ? sp.aircraft_override
                                                            : draw_aircraft_count(rng, kind));
  sc.routes = generate_case(kind, rng, sector, n_c, sp, &sc.rotation);
  sc.spawns = build_spawn_schedule(rng, kind, sc.routes.size(), sp.aircraft_override);
  return sc;
}

}  // namespace sepassure::airspace
