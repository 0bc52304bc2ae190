#pragma once

// JSON scenario configuration. Aviation units at this boundary only:
//
// {
//   "sector": {
//     "sector_radius_nm": 30, "r_pz_nm": 5, "r_nmac_ft": 500,
//     "v_max_kt": 150, "speed_increment_kt": 5, "decision_interval_s": 1,
//     "lookahead_s": 120, "arrival_capture_radius_m": 100,
//     "timeout_buffer_s": 1200
//   },
//   "case": "a",            // training | a | b | c | head_on
//   "seed": 7,
//   "aircraft": 0,          // 0 = draw from the case distribution
//   "head_on": { "half_length_nm": 5, "angle_deg": 170 }
// }
//
// Every key is optional; omitted keys keep their defaults.

#include <cstdint>
#include <fstream>
#include <string>

#include "json.hpp"
#include "sepassure/airspace/scenario.hpp"
#include "sepassure/airspace/sector.hpp"
#include "sepassure/airspace/units.hpp"
#include "sepassure/errors.hpp"

namespace sepassure::airspace {

struct ScenarioConfig {
  SectorParams sector;
  ScenarioParams scenario;
  EnvKind kind = EnvKind::Training;
  std::uint64_t seed = 0;
};

inline SectorParams sector_from_json(const nlohmann::json& j, SectorParams s = {}) {
  s.sector_radius = units::nm(j.value("sector_radius_nm", units::to_nm(s.sector_radius)));
  s.r_pz = units::nm(j.value("r_pz_nm", units::to_nm(s.r_pz)));
  s.r_nmac = units::ft(j.value("r_nmac_ft", s.r_nmac / units::kFoot));
  s.v_max = units::kt(j.value("v_max_kt", units::to_kt(s.v_max)));
  s.speed_increment = units::kt(j.value("speed_increment_kt", units::to_kt(s.speed_increment)));
  s.decision_interval = j.value("decision_interval_s", s.decision_interval);
  s.lookahead = j.value("lookahead_s", s.lookahead);
  s.arrival_capture_radius = j.value("arrival_capture_radius_m", s.arrival_capture_radius);
  s.timeout_buffer = j.value("timeout_buffer_s", s.timeout_buffer);
  s.validate();
  return s;
}

inline nlohmann::json sector_to_json(const SectorParams& s) {
  return {{"sector_radius_nm", units::to_nm(s.sector_radius)},
          {"r_pz_nm", units::to_nm(s.r_pz)},
          {"r_nmac_ft", s.r_nmac / units::kFoot},
          {"v_max_kt", units::to_kt(s.v_max)},
          {"speed_increment_kt", units::to_kt(s.speed_increment)},
          {"decision_interval_s", s.decision_interval},
          {"lookahead_s", s.lookahead},
          {"arrival_capture_radius_m", s.arrival_capture_radius},
          {"timeout_buffer_s", s.timeout_buffer}};
}

inline ScenarioParams scenario_params_from_json(const nlohmann::json& j, ScenarioParams p = {}) {
  p.aircraft_override = j.value("aircraft", p.aircraft_override);
  if (p.aircraft_override < 0) throw ConfigError("aircraft override must be >= 0");
  if (j.contains("head_on")) {
    const auto& h = j.at("head_on");
    p.head_on_half_length = units::nm(h.value("half_length_nm", units::to_nm(p.head_on_half_length)));
    p.head_on_angle = units::deg(h.value("angle_deg", units::to_deg(p.head_on_angle)));
  }
  return p;
}

inline ScenarioConfig scenario_config_from_json(const nlohmann::json& j) {
  ScenarioConfig c;
  if (j.contains("sector")) c.sector = sector_from_json(j.at("sector"));
  c.scenario = scenario_params_from_json(j);
  c.kind = parse_env_kind(j.value("case", std::string("training")));
  c.seed = j.value("seed", std::uint64_t{0});
  return c;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path);
  try {
    return nlohmann::json::parse(is, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("malformed JSON in " + path + ": " + e.what());
  }
}

inline ScenarioConfig load_scenario_config(const std::string& path) {
  return scenario_config_from_json(read_json_file(path));
}

}  // namespace sepassure::airspace
