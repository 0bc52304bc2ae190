#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sepassure/airspace/aircraft.hpp"
#include "sepassure/airspace/conflict.hpp"
#include "sepassure/airspace/scenario.hpp"
#include "sepassure/airspace/sector.hpp"
#include "sepassure/errors.hpp"

namespace sepassure::airspace {

using JointAction = std::map<int, Advisory>;

struct Removal {
  int id = 0;
  Status cause = Status::Active;
};

struct StepResult {
  std::vector<SafetyEvent> events;  // detected after motion, before removals
  std::vector<Removal> removals;
  std::vector<int> spawned;
};

struct WorldState {
  double clock = 0.0;
  SectorParams sector;
  EnvKind kind = EnvKind::Training;
  std::vector<Route> routes;
  // Every aircraft spawned this episode in id order; removed ones keep their
  // final state with a non-active status.
  std::vector<AircraftState> aircraft;
  std::vector<SpawnRequest> spawn_queue;  // pending, sorted by time
  int next_id = 0;
  Rng rng;

  std::size_t active_count() const {
    return static_cast<std::size_t>(
        std::count_if(aircraft.begin(), aircraft.end(), [](const auto& a) { return a.active(); }));
  }
  std::vector<int> active_ids() const {
    std::vector<int> ids;
    for (const auto& a : aircraft)
      if (a.active()) ids.push_back(a.id);
    return ids;
  }
  const AircraftState* find(int id) const {
    auto it = std::lower_bound(aircraft.begin(), aircraft.end(), id,
                               [](const AircraftState& a, int v) { return a.id < v; });
    return (it != aircraft.end() && it->id == id) ? &*it : nullptr;
  }
  AircraftState* find(int id) {
    return const_cast<AircraftState*>(static_cast<const WorldState*>(this)->find(id));
  }
  bool episode_over() const { return active_count() == 0 && spawn_queue.empty(); }
};

namespace detail {

// Moves along the polyline, carrying leftover distance across waypoints.
// Returns true once the final waypoint is reached.
inline bool advance_along_route(AircraftState& ac, const Route& r, double dist) {
  for (;;) {
    const Vec2 target = r.waypoints[ac.leg + 1];
    const double rem = distance(ac.position, target);
    if (dist < rem) {
      ac.position = ac.position + (dist / rem) * (target - ac.position);
      return false;
    }
    dist -= rem;
    ac.position = target;
    if (ac.leg + 2 >= r.waypoints.size()) return true;
    ++ac.leg;
    ac.heading = r.leg_heading(ac.leg);
  }
}

inline bool origin_clear(const WorldState& w, Vec2 origin) {
  for (const auto& a : w.aircraft)
    if (a.active() && distance(a.position, origin) <= w.sector.r_pz) return false;
  return true;
}

}  // namespace detail

// Places a new aircraft at its route origin at the current clock with
// cas = desired speed. No separation check; see process_spawns.
inline int insert_aircraft(WorldState& w, std::size_t route_index, double desired_cas) {
  const Route& route = w.routes.at(route_index);
  AircraftState ac;
  ac.id = w.next_id++;
  ac.position = route.origin();
  ac.heading = route.leg_heading(0);
  ac.cas = std::clamp(desired_cas, w.sector.v_min, w.sector.v_max);
  ac.desired_cas = desired_cas;
  ac.route = route_index;
  ac.leg = 0;
  ac.spawn_time = w.clock;
  ac.eta_deadline = w.clock + route.length() / desired_cas + w.sector.timeout_buffer;
  w.aircraft.push_back(ac);
  return ac.id;
}

// Inserts every pending spawn due at the current clock. A spawn whose origin
// lies within r_pz of an active aircraft is deferred by one decision interval.
inline std::vector<int> process_spawns(WorldState& w) {
  std::vector<int> spawned;
  bool deferred = false;
  std::vector<SpawnRequest> keep;
  for (auto& req : w.spawn_queue) {
    if (req.time > w.clock) {
      keep.push_back(req);
      continue;
    }
    const Route& route = w.routes.at(req.route);
    if (!detail::origin_clear(w, route.origin())) {
      keep.push_back({w.clock + w.sector.decision_interval, req.route, req.desired_cas});
      deferred = true;
      continue;
    }
    spawned.push_back(insert_aircraft(w, req.route, req.desired_cas));
  }
  if (deferred)
    std::stable_sort(keep.begin(), keep.end(),
                     [](const SpawnRequest& a, const SpawnRequest& b) { return a.time < b.time; });
  w.spawn_queue = std::move(keep);
  return spawned;
}

inline WorldState make_world(Scenario scenario, const SectorParams& sector, Rng rng = Rng{}) {
  sector.validate();
  WorldState w;
  w.sector = sector;
  w.kind = scenario.kind;
  w.routes = std::move(scenario.routes);
  for (const auto& r : w.routes) validate_route(r, sector.sector_radius, 1e-3);
  w.spawn_queue = std::move(scenario.spawns);
  w.rng = std::move(rng);
  process_spawns(w);
  return w;
}

// Seeded world: the scenario is drawn from the world's own generator.
inline WorldState make_world(EnvKind kind, const SectorParams& sector, std::uint64_t seed,
                             const ScenarioParams& sp = {}) {
  Rng rng(seed);
  Scenario sc = generate_scenario(kind, rng, sector, sp);
  return make_world(std::move(sc), sector, std::move(rng));
}

// One decision interval: speeds, motion, event detection, removals, spawns.
inline StepResult step(WorldState& w, const JointAction& actions) {
  for (const auto& [id, adv] : actions) {
    const auto* ac = w.find(id);
    if (!ac || !ac->active()) throw ContractError("action for unknown or inactive aircraft " + std::to_string(id));
  }
  for (const auto& a : w.aircraft)
    if (a.active() && !actions.count(a.id))
      throw ContractError("no action supplied for active aircraft " + std::to_string(a.id));

  const SectorParams& s = w.sector;
  std::vector<int> reached_end;
  for (auto& a : w.aircraft) {
    if (!a.active()) continue;
    const Advisory adv = actions.at(a.id);
    a.cas = std::clamp(a.cas + advisory_sign(adv) * s.speed_increment, s.v_min, s.v_max);
    if (detail::advance_along_route(a, w.routes[a.route], a.cas * s.decision_interval))
      reached_end.push_back(a.id);
  }
  w.clock += s.decision_interval;

  StepResult res;
  res.events = detect_events(w.aircraft, s, w.clock);

  auto in_event = [&](int id, EventKind k) {
    return std::any_of(res.events.begin(), res.events.end(),
                       [&](const SafetyEvent& e) { return e.kind == k && e.involves(id); });
  };
  for (auto& a : w.aircraft) {
    if (!a.active()) continue;
    const Route& r = w.routes[a.route];
    std::optional<Status> cause;
    const bool on_last_leg = a.leg + 2 >= r.waypoints.size();
    if (std::find(reached_end.begin(), reached_end.end(), a.id) != reached_end.end() ||
        (on_last_leg && distance(a.position, r.destination()) <= s.arrival_capture_radius)) {
      cause = Status::Arrived;
    } else if (w.clock > a.eta_deadline) {
      cause = Status::TimedOut;
    } else if (in_event(a.id, EventKind::Nmac)) {
      cause = Status::NmacRemoved;
    } else if (w.kind == EnvKind::CaseC && a.cas == 0.0 && in_event(a.id, EventKind::LoS)) {
      cause = Status::EarlyTerminated;
    }
    if (cause) {
      a.status = *cause;
      a.removal_time = w.clock;
      res.removals.push_back({a.id, *cause});
    }
  }
  res.spawned = process_spawns(w);
  return res;
}

// Rigid motion of the whole world: rotate by `angle` about the origin, then
// translate by `offset`. Used for frame-invariance checks.
inline WorldState transform_world(WorldState w, double angle, Vec2 offset) {
  for (auto& r : w.routes)
    for (auto& p : r.waypoints) p = rotate(p, angle) + offset;
  for (auto& a : w.aircraft) {
    a.position = rotate(a.position, angle) + offset;
    a.heading = wrap_angle(a.heading + angle);
  }
  return w;
}

}  // namespace sepassure::airspace
