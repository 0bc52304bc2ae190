#pragma once

// Piecewise per-agent reward. Exactly one branch fires:
//   NMAC      -> -alpha_nmac
//   conflict  -> -alpha_conflict * t_hat - alpha_los * d_hat   (conflict or LoS)
//   nominal   -> +alpha_v * (1 - |v_cas - v_des| / (v_max - v_min))

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string_view>

#include "json.hpp"
#include "sepassure/airspace/conflict.hpp"
#include "sepassure/airspace/world.hpp"
#include "sepassure/errors.hpp"

namespace sepassure::reward {

using airspace::EventKind;
using airspace::SafetyEvent;

struct RewardParams {
  double alpha_v = 1.0;
  double alpha_conflict = 1.0;
  double alpha_los = 1.0;
  double alpha_nmac = 100.0;  // magnitude; the realized reward is negative

  void validate() const {
    if (!(alpha_v > 0.0 && alpha_conflict > 0.0 && alpha_los > 0.0 && alpha_nmac > 0.0))
      throw ConfigError("reward weights must be positive");
  }
};

inline RewardParams reward_params_from_json(const nlohmann::json& j, RewardParams p = {}) {
  p.alpha_v = j.value("alpha_v", p.alpha_v);
  p.alpha_conflict = j.value("alpha_conflict", p.alpha_conflict);
  p.alpha_los = j.value("alpha_los", p.alpha_los);
  p.alpha_nmac = j.value("alpha_nmac", p.alpha_nmac);
  p.validate();
  return p;
}

inline nlohmann::json reward_params_to_json(const RewardParams& p) {
  return {{"alpha_v", p.alpha_v},
          {"alpha_conflict", p.alpha_conflict},
          {"alpha_los", p.alpha_los},
          {"alpha_nmac", p.alpha_nmac}};
}

enum class Branch { Nmac, Conflict, Nominal };

inline std::string_view branch_name(Branch b) {
  switch (b) {
    case Branch::Nmac: return "nmac";
    case Branch::Conflict: return "conflict";
    case Branch::Nominal: return "nominal";
  }
  return "?";
}

// What the reward needs about one agent, extracted from the events.
struct RewardInputs {
  bool nmac = false;
  std::optional<double> min_t_los;      // over Conflict and LoS pairs (LoS counts as 0)
  std::optional<double> min_los_distance;  // over LoS pairs
  double speed_deviation = 0.0;         // |v_cas - v_des|, m/s
};

struct RewardBreakdown {
  Branch branch = Branch::Nominal;
  double value = 0.0;
  double t_hat = 0.0;
  double d_hat = 0.0;
};

// Any pair closer than r_pz shows up as a LoS or NMAC event, so the nearest
// LoS separation equals the global nearest-intruder distance whenever the
// distance term is active.
inline RewardInputs reward_inputs(const airspace::AircraftState& own,
                                  std::span<const SafetyEvent> events) {
  RewardInputs in;
  in.speed_deviation = std::abs(own.cas - own.desired_cas);
  for (const auto& e : events) {
    if (!e.involves(own.id)) continue;
    switch (e.kind) {
      case EventKind::Nmac: in.nmac = true; break;
      case EventKind::LoS:
        in.min_t_los = 0.0;
        in.min_los_distance = std::min(in.min_los_distance.value_or(e.separation), e.separation);
        break;
      case EventKind::Conflict:
        in.min_t_los = std::min(in.min_t_los.value_or(*e.t_los), *e.t_los);
        break;
    }
  }
  return in;
}

inline RewardBreakdown evaluate_reward(const RewardInputs& in, const RewardParams& p,
                                       const airspace::SectorParams& s) {
  RewardBreakdown r;
  if (in.nmac) {
    r.branch = Branch::Nmac;
    r.value = -p.alpha_nmac;
    return r;
  }
  if (in.min_t_los) {
    r.branch = Branch::Conflict;
    r.t_hat = std::clamp((s.lookahead - *in.min_t_los) / s.lookahead, 0.0, 1.0);
    if (in.min_los_distance)
      r.d_hat = std::clamp((s.r_pz - *in.min_los_distance) / (s.r_pz - s.r_nmac), 0.0, 1.0);
    r.value = -p.alpha_conflict * r.t_hat - p.alpha_los * r.d_hat;
    return r;
  }
  r.branch = Branch::Nominal;
  r.value = p.alpha_v * (1.0 - in.speed_deviation / (s.v_max - s.v_min));
  return r;
}

// Reward for aircraft `id` after a step. The aircraft may already have been
// removed by that step; its final state is still in the world.
inline RewardBreakdown compute_reward(const airspace::WorldState& w, int id,
                                      std::span<const SafetyEvent> events,
                                      const RewardParams& p) {
  const auto* own = w.find(id);
  if (!own) throw ContractError("reward: unknown aircraft " + std::to_string(id));
  return evaluate_reward(reward_inputs(*own, events), p, w.sector);
}

}  // namespace sepassure::reward
