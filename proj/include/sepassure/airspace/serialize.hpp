#pragma once

// Lossless JSON snapshot of a WorldState (SI values, generator state as
// text). Used by training checkpoints so a resumed run continues exactly.

#include <sstream>
#include <string>

#include "json.hpp"
#include "sepassure/airspace/world.hpp"
#include "sepassure/errors.hpp"

namespace sepassure::airspace {

template <typename Engine>
std::string engine_state(const Engine& e) {
  std::ostringstream os;
  os << e;
  return os.str();
}

template <typename Engine>
void restore_engine(Engine& e, const std::string& s) {
  std::istringstream is(s);
  is >> e;
  if (!is) throw IoError("corrupt generator state");
}

inline nlohmann::json sector_to_si_json(const SectorParams& s) {
  return {{"sector_radius", s.sector_radius}, {"r_pz", s.r_pz},
          {"r_nmac", s.r_nmac},               {"v_min", s.v_min},
          {"v_max", s.v_max},                 {"speed_increment", s.speed_increment},
          {"decision_interval", s.decision_interval}, {"lookahead", s.lookahead},
          {"arrival_capture_radius", s.arrival_capture_radius},
          {"timeout_buffer", s.timeout_buffer}};
}

inline SectorParams sector_from_si_json(const nlohmann::json& j) {
  SectorParams s;
  s.sector_radius = j.at("sector_radius");
  s.r_pz = j.at("r_pz");
  s.r_nmac = j.at("r_nmac");
  s.v_min = j.at("v_min");
  s.v_max = j.at("v_max");
  s.speed_increment = j.at("speed_increment");
  s.decision_interval = j.at("decision_interval");
  s.lookahead = j.at("lookahead");
  s.arrival_capture_radius = j.at("arrival_capture_radius");
  s.timeout_buffer = j.at("timeout_buffer");
  return s;
}

inline nlohmann::json world_to_json(const WorldState& w) {
  nlohmann::json j;
  j["clock"] = w.clock;
  j["sector"] = sector_to_si_json(w.sector);
  j["kind"] = std::string(env_kind_name(w.kind));
  auto& routes = j["routes"] = nlohmann::json::array();
  for (const auto& r : w.routes) {
    auto pts = nlohmann::json::array();
    for (const auto& p : r.waypoints) pts.push_back({p.x, p.y});
    routes.push_back(pts);
  }
  auto& ac = j["aircraft"] = nlohmann::json::array();
  for (const auto& a : w.aircraft) {
    ac.push_back({{"id", a.id},
                  {"x", a.position.x},
                  {"y", a.position.y},
                  {"heading", a.heading},
                  {"cas", a.cas},
                  {"desired_cas", a.desired_cas},
                  {"route", a.route},
                  {"leg", a.leg},
                  {"spawn_time", a.spawn_time},
                  {"eta_deadline", a.eta_deadline},
                  {"status", static_cast<int>(a.status)},
                  {"removal_time", a.removal_time}});
  }
  auto& q = j["spawn_queue"] = nlohmann::json::array();
  for (const auto& s : w.spawn_queue) q.push_back({s.time, s.route, s.desired_cas});
  j["next_id"] = w.next_id;
  j["rng"] = engine_state(w.rng);
  return j;
}

inline WorldState world_from_json(const nlohmann::json& j) {
  try {
    WorldState w;
    w.clock = j.at("clock");
    w.sector = sector_from_si_json(j.at("sector"));
    w.kind = parse_env_kind(j.at("kind").get<std::string>());
    for (const auto& r : j.at("routes")) {
      Route route;
      for (const auto& p : r) route.waypoints.push_back({p.at(0), p.at(1)});
      w.routes.push_back(std::move(route));
    }
    for (const auto& a : j.at("aircraft")) {
      AircraftState s;
      s.id = a.at("id");
      s.position = {a.at("x"), a.at("y")};
      s.heading = a.at("heading");
      s.cas = a.at("cas");
      s.desired_cas = a.at("desired_cas");
      s.route = a.at("route");
      s.leg = a.at("leg");
      s.spawn_time = a.at("spawn_time");
      s.eta_deadline = a.at("eta_deadline");
      s.status = static_cast<Status>(a.at("status").get<int>());
      s.removal_time = a.at("removal_time");
      w.aircraft.push_back(s);
    }
    for (const auto& s : j.at("spawn_queue")) w.spawn_queue.push_back({s.at(0), s.at(1), s.at(2)});
    w.next_id = j.at("next_id");
    restore_engine(w.rng, j.at("rng").get<std::string>());
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corrupt world snapshot: ") + e.what());
  }
}

}  // namespace sepassure::airspace
