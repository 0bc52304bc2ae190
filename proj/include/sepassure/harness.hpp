#pragma once

// Evaluation episodes, safety/efficiency metrics, curve smoothing and CSV
// reports.
//
// Per-episode CSV:
//   episode,seed,case,aircraft,max_density,steps,nmac_count,los_seconds,speed_adherence
// Aggregate CSV (first row covers all episodes, then one row per peak density):
//   mode,case,group,episodes,mean_nmac_count,mean_los_seconds,mean_speed_adherence,mean_max_density

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "sepassure/airspace/event_log.hpp"
#include "sepassure/airspace/world.hpp"
#include "sepassure/errors.hpp"
#include "sepassure/featurize.hpp"
#include "sepassure/policy.hpp"

namespace sepassure::harness {

using airspace::Advisory;
using airspace::EnvKind;
using airspace::WorldState;

inline constexpr double kAdherenceBand = units::kt(10.0);

struct EpisodeMetrics {
  std::size_t episode = 0;
  std::uint64_t seed = 0;
  std::size_t nmac_count = 0;
  double los_seconds = 0.0;
  double speed_adherence = 0.0;
  std::size_t max_density = 0;
  std::size_t aircraft = 0;  // spawned over the episode
  std::size_t steps = 0;
  // Raw counts behind speed_adherence.
  std::size_t adherent_samples = 0;
  std::size_t speed_samples = 0;
};

// Accumulates metrics step by step; usable on scripted worlds.
class MetricsRecorder {
 public:
  // Call before step(): records the density the step starts from.
  void before_step(const WorldState& w) {
    m_.max_density = std::max(m_.max_density, w.active_count());
    acted_ = w.active_ids();
  }

  // Call after step() with its result.
  void after_step(const WorldState& w, const airspace::StepResult& res) {
    ++m_.steps;
    const double dt = w.sector.decision_interval;
    for (const auto& e : res.events) {
      if (e.kind == airspace::EventKind::Nmac) ++m_.nmac_count;
      // Any pair at or inside r_pz counts toward LoS time, NMAC pairs included.
      if (e.kind != airspace::EventKind::Conflict) m_.los_seconds += dt;
    }
    // Speed flown during the step, for every aircraft that acted.
    for (int id : acted_) {
      const auto* a = w.find(id);
      ++m_.speed_samples;
      if (std::abs(a->cas - a->desired_cas) <= kAdherenceBand + 1e-9) ++m_.adherent_samples;
    }
  }

  EpisodeMetrics finish(const WorldState& w) {
    m_.aircraft = w.aircraft.size();
    m_.speed_adherence = m_.speed_samples
                             ? static_cast<double>(m_.adherent_samples) / static_cast<double>(m_.speed_samples)
                             : 1.0;
    return m_;
  }

 private:
  EpisodeMetrics m_;
  std::vector<int> acted_;
};

// Maps the current world to one advisory per active aircraft (ids ascending).
using PolicyFn = std::function<airspace::JointAction(const WorldState&)>;

inline PolicyFn greedy_policy(const policy::PolicyParams& params, features::FeatureScales scales) {
  return [&params, scales](const WorldState& w) {
    airspace::JointAction ja;
    const auto ids = w.active_ids();
    if (ids.empty()) return ja;
    std::vector<features::EgoObservation> obs;
    for (int id : ids) obs.push_back(features::featurize(w, id, scales));
    std::vector<const features::EgoObservation*> batch;
    for (const auto& o : obs) batch.push_back(&o);
    nn::NoGradGuard ng;
    const auto out = policy::forward_batch(batch, params);
    for (std::size_t i = 0; i < ids.size(); ++i)
      ja[ids[i]] = airspace::advisory_from_index(
          policy::argmax3(out.logits.data().data() + i * policy::kNumActions));
    return ja;
  };
}

// Uniform random advisories from a private generator.
inline PolicyFn random_policy(std::uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  return [rng](const WorldState& w) {
    std::uniform_int_distribution<std::size_t> pick(0, airspace::kNumAdvisories - 1);
    airspace::JointAction ja;
    for (int id : w.active_ids()) ja[id] = airspace::advisory_from_index(pick(*rng));
    return ja;
  };
}

inline PolicyFn constant_policy(Advisory a) {
  return [a](const WorldState& w) {
    airspace::JointAction ja;
    for (int id : w.active_ids()) ja[id] = a;
    return ja;
  };
}

using StepObserver = std::function<void(const WorldState&, const airspace::StepResult&)>;

inline EpisodeMetrics run_episode(WorldState w, const PolicyFn& pol, std::size_t max_steps = 1'000'000,
                                  const StepObserver& observer = {}) {
  MetricsRecorder rec;
  std::size_t n = 0;
  while (!w.episode_over()) {
    if (++n > max_steps) throw ContractError("episode exceeded the step limit");
    rec.before_step(w);
    const auto res = airspace::step(w, pol(w));
    rec.after_step(w, res);
    if (observer) observer(w, res);
  }
  return rec.finish(w);
}

struct EvalOptions {
  EnvKind kind = EnvKind::CaseA;
  std::size_t episodes = 100;
  std::uint64_t seed = 0;
  airspace::SectorParams sector;
  airspace::ScenarioParams scenario;
};

// Per-episode seeds are drawn from one generator seeded with opt.seed, so a
// run is reproducible and episode k does not depend on the policy.
inline std::vector<std::uint64_t> episode_seeds(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::vector<std::uint64_t> out(n);
  for (auto& s : out) s = rng();
  return out;
}

inline std::vector<EpisodeMetrics> evaluate(const PolicyFn& pol, const EvalOptions& opt) {
  std::vector<EpisodeMetrics> out;
  const auto seeds = episode_seeds(opt.seed, opt.episodes);
  for (std::size_t k = 0; k < opt.episodes; ++k) {
    auto m = run_episode(airspace::make_world(opt.kind, opt.sector, seeds[k], opt.scenario), pol);
    m.episode = k;
    m.seed = seeds[k];
    out.push_back(m);
  }
  return out;
}

struct Aggregate {
  std::string group;
  std::size_t episodes = 0;
  double mean_nmac_count = 0.0;
  double mean_los_seconds = 0.0;
  double mean_speed_adherence = 0.0;
  double mean_max_density = 0.0;
};

inline Aggregate aggregate(const std::vector<EpisodeMetrics>& ms, std::string group = "all") {
  Aggregate a;
  a.group = std::move(group);
  a.episodes = ms.size();
  if (ms.empty()) return a;
  for (const auto& m : ms) {
    a.mean_nmac_count += static_cast<double>(m.nmac_count);
    a.mean_los_seconds += m.los_seconds;
    a.mean_speed_adherence += m.speed_adherence;
    a.mean_max_density += static_cast<double>(m.max_density);
  }
  const double n = static_cast<double>(ms.size());
  a.mean_nmac_count /= n;
  a.mean_los_seconds /= n;
  a.mean_speed_adherence /= n;
  a.mean_max_density /= n;
  return a;
}

// "all" first, then one row per observed peak density in ascending order.
inline std::vector<Aggregate> aggregate_by_density(const std::vector<EpisodeMetrics>& ms) {
  std::vector<Aggregate> out{aggregate(ms)};
  std::map<std::size_t, std::vector<EpisodeMetrics>> by;
  for (const auto& m : ms) by[m.max_density].push_back(m);
  for (const auto& [d, group] : by) out.push_back(aggregate(group, "density_" + std::to_string(d)));
  return out;
}

// y0 = x0, y_t = a x_t + (1 - a) y_{t-1}, evaluated as y + a (x - y) so a
// constant series stays exactly constant.
inline std::vector<double> smooth_curve(const std::vector<double>& x, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("smoothing alpha must lie in (0, 1]");
  std::vector<double> y;
  y.reserve(x.size());
  for (std::size_t t = 0; t < x.size(); ++t)
    y.push_back(t == 0 ? x[0] : y[t - 1] + alpha * (x[t] - y[t - 1]));
  return y;
}

inline constexpr const char* kEpisodeHeader =
    "episode,seed,case,aircraft,max_density,steps,nmac_count,los_seconds,speed_adherence";
inline constexpr const char* kAggregateHeader =
    "mode,case,group,episodes,mean_nmac_count,mean_los_seconds,mean_speed_adherence,mean_max_density";

struct ReportPaths {
  std::string episodes;
  std::string aggregate;
};

inline ReportPaths emit_report(const std::vector<EpisodeMetrics>& ms, const std::string& out_dir,
                               EnvKind kind, const std::string& mode = "greedy") {
  using airspace::format_double;
  if (ms.empty()) throw ContractError("emit_report needs at least one episode");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
  const std::string case_name(airspace::env_kind_name(kind));
  ReportPaths paths{(fs::path(out_dir) / "episodes.csv").string(),
                    (fs::path(out_dir) / "aggregate.csv").string()};
  std::ofstream ep(paths.episodes, std::ios::trunc);
  if (!ep) throw IoError("cannot write " + paths.episodes);
  ep << kEpisodeHeader << '\n';
  for (const auto& m : ms)
    ep << m.episode << ',' << m.seed << ',' << case_name << ',' << m.aircraft << ',' << m.max_density
       << ',' << m.steps << ',' << m.nmac_count << ',' << format_double(m.los_seconds) << ','
       << format_double(m.speed_adherence) << '\n';
  std::ofstream ag(paths.aggregate, std::ios::trunc);
  if (!ag) throw IoError("cannot write " + paths.aggregate);
  ag << kAggregateHeader << '\n';
  for (const auto& a : aggregate_by_density(ms))
    ag << mode << ',' << case_name << ',' << a.group << ',' << a.episodes << ','
       << format_double(a.mean_nmac_count) << ',' << format_double(a.mean_los_seconds) << ','
       << format_double(a.mean_speed_adherence) << ',' << format_double(a.mean_max_density) << '\n';
  if (!ep || !ag) throw IoError("write failed in " + out_dir);
  return paths;
}

// One episode with event and trajectory logs for offline plotting.
inline EpisodeMetrics dump_rollout(WorldState w, const PolicyFn& pol, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::ofstream ev(fs::path(out_dir) / "events.csv", std::ios::trunc);
  std::ofstream tr(fs::path(out_dir) / "trajectory.csv", std::ios::trunc);
  if (!ev || !tr) throw IoError("cannot write logs in " + out_dir);
  ev << airspace::kEventLogHeader << '\n';
  tr << airspace::kTrajectoryHeader << '\n';
  airspace::write_trajectory_rows(tr, w);
  return run_episode(std::move(w), pol, 1'000'000, [&](const WorldState& s, const airspace::StepResult& r) {
    airspace::write_event_rows(ev, r.events);
    airspace::write_trajectory_rows(tr, s);
  });
}

}  // namespace sepassure::harness
