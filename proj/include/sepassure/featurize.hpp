#pragma once

// Egocentric observation of one aircraft: two ownship features plus seven
// features per intruder. Every other active aircraft is an intruder; there is
// no range gate and no cap.

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "sepassure/airspace/world.hpp"
#include "sepassure/errors.hpp"

namespace sepassure::features {

using airspace::AircraftState;
using airspace::Vec2;
using airspace::WorldState;

inline constexpr std::size_t kOwnshipFeatures = 2;
inline constexpr std::size_t kIntruderFeatures = 7;

// Fixed normalizers: distances by the sector diameter, speeds by v_max.
struct FeatureScales {
  double distance = 1.0;
  double speed = 1.0;
  double speed_range = 1.0;

  static FeatureScales from_sector(const airspace::SectorParams& s) {
    return {2.0 * s.sector_radius, s.v_max, s.v_max - s.v_min};
  }
};

struct RelativeKinematics {
  double distance = 0.0;
  double theta = 0.0;     // relative bearing in (-pi, pi]
  double v_radial = 0.0;  // positive when opening
  double v_tangential = 0.0;
  bool degenerate = false;  // coincident positions
};

// Intruder relative to ownship. The tangential axis is the radial unit
// vector rotated +pi/2.
inline RelativeKinematics relative_kinematics(const AircraftState& own,
                                              const AircraftState& intr) {
  RelativeKinematics k;
  const Vec2 p = intr.position - own.position;
  const Vec2 v = intr.velocity() - own.velocity();
  k.distance = airspace::norm(p);
  if (k.distance == 0.0) {
    k.degenerate = true;
    return k;
  }
  k.theta = airspace::wrap_angle(std::atan2(p.y, p.x) - own.heading);
  const Vec2 e_p = (1.0 / k.distance) * p;
  const Vec2 e_psi{-e_p.y, e_p.x};
  k.v_radial = airspace::dot(v, e_p);
  k.v_tangential = airspace::dot(v, e_psi);
  return k;
}

struct IntruderFeature {
  double d_nmac = 0.0;
  double d_pz = 0.0;
  double sin_theta = 0.0;
  double cos_theta = 1.0;
  double b_los = 0.0;
  double v_radial = 0.0;
  double v_tangential = 0.0;

  std::array<double, kIntruderFeatures> values() const {
    return {d_nmac, d_pz, sin_theta, cos_theta, b_los, v_radial, v_tangential};
  }
};

struct EgoObservation {
  int id = 0;
  double v_cas = 0.0;            // normalized
  double speed_deviation = 0.0;  // normalized |v_cas - v_des|
  std::vector<IntruderFeature> intruders;

  std::array<double, kOwnshipFeatures> ownship() const { return {v_cas, speed_deviation}; }
  std::size_t intruder_count() const { return intruders.size(); }

  // Row-major [n x 7] block.
  std::vector<double> intruder_matrix() const {
    std::vector<double> out;
    out.reserve(intruders.size() * kIntruderFeatures);
    for (const auto& f : intruders) {
      const auto v = f.values();
      out.insert(out.end(), v.begin(), v.end());
    }
    return out;
  }
};

inline IntruderFeature intruder_feature(const AircraftState& own, const AircraftState& intr,
                                        const airspace::SectorParams& s,
                                        const FeatureScales& sc) {
  const auto k = relative_kinematics(own, intr);
  IntruderFeature f;
  f.d_nmac = (k.distance - s.r_nmac) / sc.distance;
  f.d_pz = (k.distance - s.r_pz) / sc.distance;
  f.sin_theta = std::sin(k.theta);
  f.cos_theta = std::cos(k.theta);
  f.b_los = k.distance <= s.r_pz ? 1.0 : 0.0;
  f.v_radial = k.v_radial / sc.speed;
  f.v_tangential = k.v_tangential / sc.speed;
  return f;
}

inline EgoObservation featurize(const WorldState& w, int id, const FeatureScales& sc) {
  const AircraftState* own = w.find(id);
  if (!own || !own->active())
    throw ContractError("featurize: aircraft " + std::to_string(id) + " is not active");
  EgoObservation obs;
  obs.id = id;
  obs.v_cas = own->cas / sc.speed;
  obs.speed_deviation = std::abs(own->cas - own->desired_cas) / sc.speed_range;
  for (const auto& other : w.aircraft) {
    if (!other.active() || other.id == id) continue;
    obs.intruders.push_back(intruder_feature(*own, other, w.sector, sc));
  }
  return obs;
}

inline EgoObservation featurize(const WorldState& w, int id) {
  return featurize(w, id, FeatureScales::from_sector(w.sector));
}

}  // namespace sepassure::features
