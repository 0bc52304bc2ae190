#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sepassure/featurize.hpp"

using namespace sepassure;
using namespace sepassure::airspace;
using namespace sepassure::features;
using units::kPi;
using units::kt;
using units::nm;

namespace {

AircraftState aircraft_at(int id, Vec2 p, double heading, double cas) {
  AircraftState a;
  a.id = id;
  a.position = p;
  a.heading = heading;
  a.cas = cas;
  a.desired_cas = cas;
  return a;
}

// n aircraft at random positions in the sector with random headings/speeds.
WorldState random_world(std::mt19937_64& rng, int n) {
  SectorParams s;
  std::uniform_real_distribution<double> ang(-kPi, kPi), spd(0.0, s.v_max), u(0.0, 1.0);
  Scenario sc;
  for (int i = 0; i < n; ++i) {
    const double r = s.sector_radius * 0.9 * std::sqrt(u(rng));
    const Vec2 p = r * unit_from_angle(ang(rng));
    sc.routes.push_back(Route{{p, p + nm(1) * unit_from_angle(ang(rng))}});
  }
  auto w = make_world(sc, s);
  for (int i = 0; i < n; ++i) {
    insert_aircraft(w, static_cast<std::size_t>(i), spd(rng) + 1.0);
    w.aircraft.back().cas = spd(rng);
  }
  return w;
}

void expect_same(const EgoObservation& a, const EgoObservation& b, double tol) {
  EXPECT_NEAR(a.v_cas, b.v_cas, tol);
  EXPECT_NEAR(a.speed_deviation, b.speed_deviation, tol);
  ASSERT_EQ(a.intruders.size(), b.intruders.size());
  const auto ma = a.intruder_matrix(), mb = b.intruder_matrix();
  for (std::size_t k = 0; k < ma.size(); ++k) EXPECT_NEAR(ma[k], mb[k], tol) << "feature " << k;
}

}  // namespace

TEST(RelativeKinematics, ThreeFourFive) {
  auto own = aircraft_at(0, {0, 0}, kPi / 2, kt(100));
  auto intr = aircraft_at(1, {nm(3), nm(4)}, 0.0, kt(100));
  const auto k = relative_kinematics(own, intr);
  EXPECT_NEAR(k.distance, nm(5), 1e-9);
  EXPECT_NEAR(std::sin(k.theta), -0.6, 1e-12);
  EXPECT_NEAR(std::cos(k.theta), 0.8, 1e-12);
  EXPECT_FALSE(k.degenerate);
}

TEST(RelativeKinematics, Projection) {
  // Ownship stationary so the relative velocity is the intruder's own.
  auto own = aircraft_at(0, {0, 0}, 0.0, 0.0);
  const Vec2 v{-kt(10), kt(5)};
  auto intr = aircraft_at(1, {nm(1), 0}, std::atan2(v.y, v.x), norm(v));
  const auto k = relative_kinematics(own, intr);
  EXPECT_NEAR(k.v_radial, -kt(10), 1e-12);
  EXPECT_NEAR(k.v_tangential, kt(5), 1e-12);
}

TEST(RelativeKinematics, DeadAheadAndDegenerate) {
  auto own = aircraft_at(0, {nm(1), nm(1)}, 1.1, kt(80));
  auto ahead = aircraft_at(1, own.position + nm(2) * unit_from_angle(1.1), 0.0, kt(80));
  const auto k = relative_kinematics(own, ahead);
  EXPECT_NEAR(k.theta, 0.0, 1e-12);
  EXPECT_NEAR(std::sin(k.theta), 0.0, 1e-12);

  auto same = aircraft_at(2, own.position, 2.0, kt(90));
  const auto kd = relative_kinematics(own, same);
  EXPECT_TRUE(kd.degenerate);
  EXPECT_EQ(kd.theta, 0.0);
  EXPECT_EQ(kd.v_radial, 0.0);
  EXPECT_EQ(kd.v_tangential, 0.0);
}

TEST(Featurize, SingleAircraftHasNoIntruders) {
  std::mt19937_64 rng(1);
  auto w = random_world(rng, 1);
  auto& a = w.aircraft[0];
  a.cas = a.desired_cas;
  const auto obs = featurize(w, a.id);
  EXPECT_TRUE(obs.intruders.empty());
  EXPECT_EQ(obs.speed_deviation, 0.0);
  EXPECT_NEAR(obs.v_cas, a.cas / w.sector.v_max, 1e-15);
}

TEST(Featurize, ProtectionZoneBoundary) {
  SectorParams s;
  Scenario sc;
  sc.routes = {Route{{{0, 0}, {nm(1), 0}}}, Route{{{0, nm(5)}, {nm(1), nm(5)}}}};
  auto w = make_world(sc, s);
  insert_aircraft(w, 0, kt(100));
  insert_aircraft(w, 1, kt(100));
  const auto obs = featurize(w, 0);
  ASSERT_EQ(obs.intruders.size(), 1u);
  EXPECT_EQ(obs.intruders[0].b_los, 1.0);
  EXPECT_NEAR(obs.intruders[0].d_pz, 0.0, 1e-15);
  // d_pz and d_nmac differ by the radius gap.
  EXPECT_NEAR((obs.intruders[0].d_nmac - obs.intruders[0].d_pz) * 2 * s.sector_radius,
              s.r_pz - s.r_nmac, 1e-9);
}

TEST(Featurize, InactiveOwnshipIsContractError) {
  std::mt19937_64 rng(2);
  auto w = random_world(rng, 3);
  w.aircraft[1].status = Status::Arrived;
  EXPECT_THROW(featurize(w, 1), ContractError);
  EXPECT_THROW(featurize(w, 99), ContractError);
  EXPECT_EQ(featurize(w, 0).intruders.size(), 1u);
}

TEST(Featurize, InvariantsOnRandomWorlds) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    auto w = random_world(rng, 1 + trial % 20);
    for (int id : w.active_ids()) {
      const auto obs = featurize(w, id);
      EXPECT_EQ(obs.intruders.size(), w.active_count() - 1);
      for (double x : obs.intruder_matrix()) EXPECT_TRUE(std::isfinite(x));
      for (const auto& f : obs.intruders) {
        EXPECT_NEAR(f.sin_theta * f.sin_theta + f.cos_theta * f.cos_theta, 1.0, 1e-12);
        EXPECT_TRUE(f.b_los == 0.0 || f.b_los == 1.0);
      }
    }
  }
}

TEST(Featurize, FrameInvariance) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ang(-kPi, kPi), off(-nm(50), nm(50));
  for (int trial = 0; trial < 1000; ++trial) {
    auto w = random_world(rng, 2 + trial % 6);
    auto moved = transform_world(w, ang(rng), {off(rng), off(rng)});
    for (int id : w.active_ids()) expect_same(featurize(w, id), featurize(moved, id), 1e-9);
  }
}

TEST(Featurize, MirrorSymmetry) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    auto w = random_world(rng, 2 + trial % 5);
    const auto& own = w.aircraft[0];
    const Vec2 o = own.position, u = unit_from_angle(own.heading);
    auto m = w;
    for (auto& a : m.aircraft) {
      const Vec2 q = a.position - o;
      a.position = o + 2.0 * dot(u, q) * u - q;
      a.heading = wrap_angle(2.0 * own.heading - a.heading);
    }
    const auto f = featurize(w, own.id), g = featurize(m, own.id);
    ASSERT_EQ(f.intruders.size(), g.intruders.size());
    for (std::size_t k = 0; k < f.intruders.size(); ++k) {
      const auto& a = f.intruders[k];
      const auto& b = g.intruders[k];
      EXPECT_NEAR(a.d_nmac, b.d_nmac, 1e-9);
      EXPECT_NEAR(a.cos_theta, b.cos_theta, 1e-9);
      EXPECT_NEAR(a.sin_theta, -b.sin_theta, 1e-9);
      EXPECT_NEAR(a.v_radial, b.v_radial, 1e-9);
      EXPECT_NEAR(a.v_tangential, -b.v_tangential, 1e-9);
    }
  }
}

TEST(Featurize, LosFlagMatchesRawGeometry) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SectorParams s;
  for (int trial = 0; trial < 10000; ++trial) {
    // Concentrate separations around r_pz so both outcomes are common.
    const double sep = s.r_pz * (0.5 + u(rng));
    Scenario sc;
    const Vec2 p0{nm(-2), 0};
    const Vec2 p1 = p0 + sep * unit_from_angle(2 * kPi * u(rng));
    sc.routes = {Route{{p0, p0 + Vec2{100, 0}}}, Route{{p1, p1 + Vec2{0, 100}}}};
    auto w = make_world(sc, s);
    insert_aircraft(w, 0, kt(90));
    insert_aircraft(w, 1, kt(90));
    const double dx = w.aircraft[1].position.x - w.aircraft[0].position.x;
    const double dy = w.aircraft[1].position.y - w.aircraft[0].position.y;
    const double raw = std::sqrt(dx * dx + dy * dy);
    EXPECT_EQ(featurize(w, 0).intruders[0].b_los, raw <= s.r_pz ? 1.0 : 0.0);
  }
}

TEST(Featurize, BearingContinuityAcrossTail) {
  auto own = aircraft_at(0, {0, 0}, 0.0, kt(100));
  double prev_s = 0, prev_c = 0;
  bool first = true;
  // Sweep the intruder behind the ownship through the +-pi bearing.
  for (int k = -100; k <= 100; ++k) {
    const double a = kPi + k * 1e-4;
    auto intr = aircraft_at(1, nm(3) * unit_from_angle(a), 0.0, kt(100));
    const auto th = relative_kinematics(own, intr).theta;
    const double sn = std::sin(th), cs = std::cos(th);
    if (!first) {
      EXPECT_LT(std::abs(sn - prev_s), 2e-4);
      EXPECT_LT(std::abs(cs - prev_c), 2e-4);
    }
    prev_s = sn;
    prev_c = cs;
    first = false;
  }
}
