#pragma once

// Clipped-surrogate PPO with GAE over lockstep parallel environments. One
// PolicyParams instance acts for every aircraft in every environment.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sepassure/airspace/config.hpp"
#include "sepassure/airspace/event_log.hpp"
#include "sepassure/airspace/serialize.hpp"
#include "sepassure/airspace/world.hpp"
#include "sepassure/errors.hpp"
#include "sepassure/featurize.hpp"
#include "sepassure/numerics/optim.hpp"
#include "sepassure/policy.hpp"
#include "sepassure/reward.hpp"

namespace sepassure::ppo {

using airspace::EnvKind;
using airspace::Rng;
using airspace::WorldState;
using features::EgoObservation;
using nn::Tensor;
using policy::PolicyParams;

struct HyperParams {
  std::size_t updates = 200;
  std::size_t n_envs = 8;
  std::size_t horizon = 4096;
  std::size_t batch_size = 128;
  std::size_t epochs = 4;
  double gamma = 0.99;
  double lambda = 0.95;
  double clip_eps = 0.2;
  double entropy_coef = 0.01;
  double vf_coef = 0.5;
  double max_grad_norm = 0.5;
  bool normalize_advantages = true;
  bool clip_value = true;
  double learning_rate = 3e-4;

  void validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0 && lambda >= 0.0 && lambda <= 1.0))
      throw ConfigError("gamma and lambda must lie in [0, 1]");
    if (!(clip_eps > 0.0)) throw ConfigError("clip_eps must be positive");
    if (n_envs == 0 || horizon == 0 || batch_size == 0 || epochs == 0)
      throw ConfigError("n_envs, horizon, batch_size and epochs must be positive");
    if (!(max_grad_norm > 0.0)) throw ConfigError("max_grad_norm must be positive");
    if (learning_rate < 0.0 || entropy_coef < 0.0 || vf_coef < 0.0)
      throw ConfigError("learning rate and loss coefficients must be non-negative");
  }
};

inline nlohmann::json hyper_params_to_json(const HyperParams& h) {
  return {{"updates", h.updates},
          {"n_envs", h.n_envs},
          {"horizon", h.horizon},
          {"batch_size", h.batch_size},
          {"epochs", h.epochs},
          {"gamma", h.gamma},
          {"lambda", h.lambda},
          {"clip_eps", h.clip_eps},
          {"entropy_coef", h.entropy_coef},
          {"vf_coef", h.vf_coef},
          {"max_grad_norm", h.max_grad_norm},
          {"normalize_advantages", h.normalize_advantages},
          {"clip_value", h.clip_value},
          {"learning_rate", h.learning_rate}};
}

inline HyperParams hyper_params_from_json(const nlohmann::json& j, HyperParams h = {}) {
  h.updates = j.value("updates", h.updates);
  h.n_envs = j.value("n_envs", h.n_envs);
  h.horizon = j.value("horizon", h.horizon);
  h.batch_size = j.value("batch_size", h.batch_size);
  h.epochs = j.value("epochs", h.epochs);
  h.gamma = j.value("gamma", h.gamma);
  h.lambda = j.value("lambda", h.lambda);
  h.clip_eps = j.value("clip_eps", h.clip_eps);
  h.entropy_coef = j.value("entropy_coef", h.entropy_coef);
  h.vf_coef = j.value("vf_coef", h.vf_coef);
  h.max_grad_norm = j.value("max_grad_norm", h.max_grad_norm);
  h.normalize_advantages = j.value("normalize_advantages", h.normalize_advantages);
  h.clip_value = j.value("clip_value", h.clip_value);
  h.learning_rate = j.value("learning_rate", h.learning_rate);
  h.validate();
  return h;
}

// Training configuration file. A superset of the scenario config:
//
// {
//   "case": "training", "seed": 0, "aircraft": 0, "sector": {...}, "head_on": {...},
//   "ppo": { "updates": 200, "n_envs": 8, "horizon": 4096, ... },
//   "reward": { "alpha_v": 1, "alpha_conflict": 1, "alpha_los": 1, "alpha_nmac": 100 },
//   "policy": { "d_emb": 128, "d_ff": 512, "heads": 16, "layers": 1 },
//   "checkpoint_every": 10
// }
struct TrainConfig {
  HyperParams hp;
  reward::RewardParams reward;
  airspace::SectorParams sector;
  airspace::ScenarioParams scenario;
  EnvKind kind = EnvKind::Training;
  policy::PolicyConfig policy;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 10;
};

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  const auto sc = airspace::scenario_config_from_json(j);
  c.sector = sc.sector;
  c.scenario = sc.scenario;
  c.kind = sc.kind;
  c.seed = sc.seed;
  if (j.contains("ppo")) c.hp = hyper_params_from_json(j.at("ppo"));
  if (j.contains("reward")) c.reward = reward::reward_params_from_json(j.at("reward"));
  if (j.contains("policy")) c.policy = policy::policy_config_from_json(j.at("policy"));
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.hp.validate();
  return c;
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"case", std::string(airspace::env_kind_name(c.kind))},
          {"seed", c.seed},
          {"aircraft", c.scenario.aircraft_override},
          {"sector", airspace::sector_to_json(c.sector)},
          {"head_on",
           {{"half_length_nm", units::to_nm(c.scenario.head_on_half_length)},
            {"angle_deg", units::to_deg(c.scenario.head_on_angle)}}},
          {"ppo", hyper_params_to_json(c.hp)},
          {"reward", reward::reward_params_to_json(c.reward)},
          {"policy", policy::policy_config_to_json(c.policy)},
          {"checkpoint_every", c.checkpoint_every}};
}

inline TrainConfig load_train_config(const std::string& path) {
  return train_config_from_json(airspace::read_json_file(path));
}

// ---------------------------------------------------------------------------
// Rollout buffer

struct Transition {
  std::size_t env = 0;
  std::uint64_t episode = 0;
  int agent = 0;
  double time = 0.0;  // decision time
  EgoObservation obs;
  std::size_t action = 0;
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  bool done = false;  // removed by this step
};

struct Track {
  std::size_t begin = 0;
  std::size_t end = 0;        // one past the last record
  double bootstrap = 0.0;     // v(s_T) when truncated, else 0
  bool truncated = false;
};

using TrackKey = std::tuple<std::size_t, std::uint64_t, int>;

struct RolloutBuffer {
  std::vector<Transition> records;
  std::map<TrackKey, double> truncation_values;
  std::vector<Track> tracks;
  std::vector<double> advantages;
  std::vector<double> returns;
  double decision_interval = 1.0;

  std::size_t size() const { return records.size(); }

  // Groups records into per-agent tracks (time order preserved) and checks
  // that each track is contiguous and properly terminated.
  void finalize() {
    std::stable_sort(records.begin(), records.end(), [](const Transition& a, const Transition& b) {
      return std::tie(a.env, a.episode, a.agent) < std::tie(b.env, b.episode, b.agent);
    });
    tracks.clear();
    for (std::size_t i = 0; i < records.size();) {
      std::size_t j = i + 1;
      const TrackKey key{records[i].env, records[i].episode, records[i].agent};
      while (j < records.size() &&
             TrackKey{records[j].env, records[j].episode, records[j].agent} == key)
        ++j;
      Track t{i, j, 0.0, false};
      if (!records[j - 1].done) {
        auto it = truncation_values.find(key);
        if (it == truncation_values.end())
          throw ContractError("track without terminal record has no bootstrap value");
        t.bootstrap = it->second;
        t.truncated = true;
      }
      tracks.push_back(t);
      i = j;
    }
    validate_tracks();
  }

  void validate_tracks() const {
    std::size_t covered = 0;
    for (const auto& t : tracks) {
      if (t.begin != covered || t.end <= t.begin) throw ContractError("rollout tracks do not tile the buffer");
      covered = t.end;
      for (std::size_t k = t.begin; k < t.end; ++k) {
        const auto& r = records[k];
        if (k > t.begin) {
          const auto& p = records[k - 1];
          if (r.env != p.env || r.episode != p.episode || r.agent != p.agent)
            throw ContractError("rollout track mixes agents");
          if (std::abs(r.time - p.time - decision_interval) > 1e-9)
            throw ContractError("rollout track is not contiguous in time");
        }
        if (r.done && k + 1 != t.end) throw ContractError("done flag inside a track");
      }
    }
    if (covered != records.size()) throw ContractError("rollout tracks do not tile the buffer");
  }
};

// Backward GAE recursion over one track. next_value beyond the last record is
// `bootstrap` unless the last record is terminal.
inline void gae_track(std::span<const double> rewards, std::span<const double> values,
                      std::span<const std::uint8_t> dones, double bootstrap, double gamma,
                      double lambda, std::span<double> adv, std::span<double> ret) {
  const std::size_t n = rewards.size();
  double next_adv = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double next_v = (k + 1 < n) ? values[k + 1] : bootstrap;
    const double nonterminal = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * next_v * nonterminal - values[k];
    next_adv = delta + gamma * lambda * nonterminal * next_adv;
    adv[k] = next_adv;
    ret[k] = next_adv + values[k];
  }
}

inline void compute_gae(RolloutBuffer& buf, double gamma, double lambda) {
  buf.validate_tracks();
  const std::size_t n = buf.records.size();
  buf.advantages.assign(n, 0.0);
  buf.returns.assign(n, 0.0);
  std::vector<double> r, v;
  std::vector<std::uint8_t> d;
  for (const auto& t : buf.tracks) {
    r.clear();
    v.clear();
    d.clear();
    for (std::size_t k = t.begin; k < t.end; ++k) {
      r.push_back(buf.records[k].reward);
      v.push_back(buf.records[k].value);
      d.push_back(buf.records[k].done ? 1 : 0);
    }
    gae_track(r, v, d, t.truncated ? t.bootstrap : 0.0, gamma, lambda,
              std::span<double>(buf.advantages).subspan(t.begin, t.end - t.begin),
              std::span<double>(buf.returns).subspan(t.begin, t.end - t.begin));
  }
}

// ---------------------------------------------------------------------------
// Environments

struct EnvSlot {
  WorldState world;
  Rng scenario_rng;
  std::uint64_t episode = 0;
};

struct EpisodeCounters {
  std::size_t episodes_completed = 0;
  std::size_t nmac_events = 0;
  std::size_t los_pair_steps = 0;
};

class VecEnv {
 public:
  VecEnv() = default;
  VecEnv(std::size_t n, EnvKind kind, const airspace::SectorParams& sector,
         const airspace::ScenarioParams& sp, std::uint64_t seed)
      : kind_(kind), sector_(sector), sp_(sp) {
    for (std::size_t e = 0; e < n; ++e) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(e), 0x5e9au};
      EnvSlot slot;
      slot.scenario_rng.seed(seq);
      slot.world = fresh_world(slot.scenario_rng);
      envs_.push_back(std::move(slot));
    }
  }

  std::size_t size() const { return envs_.size(); }
  EnvSlot& operator[](std::size_t e) { return envs_[e]; }
  const EnvSlot& operator[](std::size_t e) const { return envs_[e]; }
  const airspace::SectorParams& sector() const { return sector_; }

  // Starts a new episode in every env whose episode has ended.
  std::size_t regenerate_finished() {
    std::size_t n = 0;
    for (auto& s : envs_) {
      if (!s.world.episode_over()) continue;
      s.world = fresh_world(s.scenario_rng);
      ++s.episode;
      ++n;
    }
    return n;
  }

  nlohmann::json to_json() const {
    auto arr = nlohmann::json::array();
    for (const auto& s : envs_)
      arr.push_back({{"world", airspace::world_to_json(s.world)},
                     {"scenario_rng", airspace::engine_state(s.scenario_rng)},
                     {"episode", s.episode}});
    return arr;
  }

  void restore(const nlohmann::json& arr) {
    if (arr.size() != envs_.size()) throw IoError("checkpoint env count mismatch");
    for (std::size_t e = 0; e < envs_.size(); ++e) {
      envs_[e].world = airspace::world_from_json(arr[e].at("world"));
      airspace::restore_engine(envs_[e].scenario_rng, arr[e].at("scenario_rng").get<std::string>());
      envs_[e].episode = arr[e].at("episode");
    }
  }

 private:
  WorldState fresh_world(Rng& rng) const {
    return airspace::make_world(kind_, sector_, rng(), sp_);
  }

  EnvKind kind_ = EnvKind::Training;
  airspace::SectorParams sector_;
  airspace::ScenarioParams sp_;
  std::vector<EnvSlot> envs_;
};

// T lockstep steps across all envs. Every active aircraft contributes one
// transition per step; all observations of a step go through one batched
// no-grad forward pass.
inline RolloutBuffer collect_rollouts(VecEnv& envs, const PolicyParams& params, std::size_t T,
                                      Rng& rng, const reward::RewardParams& rp,
                                      const features::FeatureScales& scales,
                                      EpisodeCounters* counters = nullptr) {
  RolloutBuffer buf;
  buf.decision_interval = envs.sector().decision_interval;
  struct Pending {
    std::size_t env;
    int agent;
    std::size_t record;
  };
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t finished = envs.regenerate_finished();
    if (counters) counters->episodes_completed += finished;
    std::vector<Transition> step_records;
    std::vector<Pending> pending;
    for (std::size_t e = 0; e < envs.size(); ++e) {
      const auto& w = envs[e].world;
      for (int id : w.active_ids()) {
        Transition tr;
        tr.env = e;
        tr.episode = envs[e].episode;
        tr.agent = id;
        tr.time = w.clock;
        tr.obs = features::featurize(w, id, scales);
        pending.push_back({e, id, step_records.size()});
        step_records.push_back(std::move(tr));
      }
    }
    std::vector<airspace::JointAction> joint(envs.size());
    if (!step_records.empty()) {
      std::vector<const EgoObservation*> batch;
      for (const auto& r : step_records) batch.push_back(&r.obs);
      const auto acts = policy::act_batch(batch, params, rng, policy::ActMode::Sample);
      for (std::size_t k = 0; k < acts.size(); ++k) {
        auto& r = step_records[k];
        r.action = airspace::advisory_index(acts[k].advisory);
        r.log_prob = acts[k].log_prob;
        r.value = acts[k].value;
        joint[r.env][r.agent] = acts[k].advisory;
      }
    }
    std::size_t k = 0;
    for (std::size_t e = 0; e < envs.size(); ++e) {
      auto& w = envs[e].world;
      const auto res = airspace::step(w, joint[e]);
      if (counters) {
        for (const auto& ev : res.events) {
          if (ev.kind == airspace::EventKind::Nmac) ++counters->nmac_events;
          if (ev.kind == airspace::EventKind::LoS) ++counters->los_pair_steps;
        }
      }
      for (; k < step_records.size() && step_records[k].env == e; ++k) {
        auto& r = step_records[k];
        r.reward = reward::compute_reward(w, r.agent, res.events, rp).value;
        r.done = !w.find(r.agent)->active();
      }
    }
    for (auto& r : step_records) buf.records.push_back(std::move(r));
  }
  // Truncation bootstrap for agents still flying at the horizon.
  std::vector<EgoObservation> tail_obs;
  std::vector<TrackKey> tail_keys;
  for (std::size_t e = 0; e < envs.size(); ++e) {
    const auto& w = envs[e].world;
    for (int id : w.active_ids()) {
      tail_obs.push_back(features::featurize(w, id, scales));
      tail_keys.emplace_back(e, envs[e].episode, id);
    }
  }
  if (!tail_obs.empty()) {
    std::vector<const EgoObservation*> batch;
    for (const auto& o : tail_obs) batch.push_back(&o);
    nn::NoGradGuard ng;
    const auto out = policy::forward_batch(batch, params);
    for (std::size_t i = 0; i < tail_keys.size(); ++i) buf.truncation_values[tail_keys[i]] = out.values[i];
  }
  buf.finalize();
  return buf;
}

// ---------------------------------------------------------------------------
// Update

struct TrainStats {
  std::size_t update = 0;
  double mean_lambda_return = 0.0;
  double mean_entropy = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double total_loss = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;  // mean pre-clip global norm over minibatches
  // Diagnostics, not part of the CSV.
  std::size_t transitions = 0;
  std::size_t minibatches = 0;
  double max_post_clip_norm = 0.0;
  double max_normalized_adv_mean = 0.0;
  double max_normalized_adv_var_error = 0.0;
  EpisodeCounters episodes;
};

inline constexpr const char* kStatsHeader =
    "update,mean_lambda_return,mean_entropy,policy_loss,value_loss,clip_fraction,grad_norm";

inline void write_stats_row(std::ostream& os, const TrainStats& s) {
  using airspace::format_double;
  os << s.update << ',' << format_double(s.mean_lambda_return) << ','
     << format_double(s.mean_entropy) << ',' << format_double(s.policy_loss) << ','
     << format_double(s.value_loss) << ',' << format_double(s.clip_fraction) << ','
     << format_double(s.grad_norm) << '\n';
}

// Per-sample clipped surrogate objective.
inline double clipped_objective(double ratio, double adv, double eps) {
  return std::min(ratio * adv, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * adv);
}

struct MinibatchLoss {
  Tensor total;
  Tensor policy;
  Tensor value;
  Tensor entropy;
  double clip_fraction = 0.0;
};

// Loss for one minibatch. `adv` is already normalized if requested.
inline MinibatchLoss ppo_loss(const PolicyParams& params, const std::vector<const EgoObservation*>& obs,
                              const std::vector<std::size_t>& actions, const std::vector<double>& old_logp,
                              const std::vector<double>& old_values, const std::vector<double>& returns,
                              const std::vector<double>& adv, const HyperParams& hp) {
  const std::size_t B = obs.size();
  const auto ev = policy::evaluate_actions(obs, actions, params);
  const Tensor A = Tensor::vector(adv);
  const Tensor ratio = nn::exp(nn::sub(ev.log_probs, Tensor::vector(old_logp)));
  const Tensor surr1 = nn::mul(ratio, A);
  const Tensor surr2 = nn::mul(nn::clamp(ratio, 1.0 - hp.clip_eps, 1.0 + hp.clip_eps), A);
  MinibatchLoss L;
  L.policy = nn::scale(nn::mean(nn::minimum(surr1, surr2)), -1.0);
  const Tensor R = Tensor::vector(returns);
  const Tensor err = nn::square(nn::sub(ev.values, R));
  if (hp.clip_value) {
    const Tensor v_old = Tensor::vector(old_values);
    const Tensor v_clip = nn::add(v_old, nn::clamp(nn::sub(ev.values, v_old), -hp.clip_eps, hp.clip_eps));
    L.value = nn::scale(nn::mean(nn::maximum(err, nn::square(nn::sub(v_clip, R)))), 0.5);
  } else {
    L.value = nn::scale(nn::mean(err), 0.5);
  }
  L.entropy = nn::mean(ev.entropies);
  L.total = nn::sub(nn::add(L.policy, nn::scale(L.value, hp.vf_coef)), nn::scale(L.entropy, hp.entropy_coef));
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < B; ++i) clipped += std::abs(ratio[i] - 1.0) > hp.clip_eps;
  L.clip_fraction = static_cast<double>(clipped) / static_cast<double>(B);
  return L;
}

// Zero mean, unit (population) variance; eps guards constant batches.
inline std::vector<double> normalize(std::vector<double> a) {
  const double n = static_cast<double>(a.size());
  const double mu = std::accumulate(a.begin(), a.end(), 0.0) / n;
  double var = 0.0;
  for (double x : a) var += (x - mu) * (x - mu);
  const double sd = std::sqrt(var / n);
  for (double& x : a) x = (x - mu) / (sd + 1e-8);
  return a;
}

inline TrainStats ppo_update(PolicyParams& params, nn::Adam& opt, const RolloutBuffer& buf,
                             const HyperParams& hp, Rng& rng) {
  const std::size_t n = buf.size();
  if (n == 0) throw ContractError("ppo_update on an empty buffer");
  if (buf.advantages.size() != n) throw ContractError("ppo_update before compute_gae");
  TrainStats st;
  st.transitions = n;
  st.mean_lambda_return = std::accumulate(buf.returns.begin(), buf.returns.end(), 0.0) / static_cast<double>(n);
  auto param_list = opt.params();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t start = 0; start < n; start += hp.batch_size) {
      const std::size_t end = std::min(n, start + hp.batch_size);
      std::vector<const EgoObservation*> obs;
      std::vector<std::size_t> actions;
      std::vector<double> old_logp, old_v, ret, adv;
      for (std::size_t k = start; k < end; ++k) {
        const auto& r = buf.records[idx[k]];
        obs.push_back(&r.obs);
        actions.push_back(r.action);
        old_logp.push_back(r.log_prob);
        old_v.push_back(r.value);
        ret.push_back(buf.returns[idx[k]]);
        adv.push_back(buf.advantages[idx[k]]);
      }
      if (hp.normalize_advantages && adv.size() > 1) {
        adv = normalize(std::move(adv));
        const double m = std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(adv.size());
        double v = 0.0;
        for (double x : adv) v += (x - m) * (x - m);
        v /= static_cast<double>(adv.size());
        st.max_normalized_adv_mean = std::max(st.max_normalized_adv_mean, std::abs(m));
        // Constant-advantage batches normalize to all zeros; skip those.
        if (v > 0.0) st.max_normalized_adv_var_error = std::max(st.max_normalized_adv_var_error, std::abs(v - 1.0));
      }
      opt.zero_grad();
      MinibatchLoss L;
      try {
        L = ppo_loss(params, obs, actions, old_logp, old_v, ret, adv, hp);
      } catch (const NumericError& e) {
        throw NumericError(std::string("ppo update aborted: ") + e.what());
      }
      nn::backward(L.total);
      const double norm = nn::clip_grad_norm(param_list, hp.max_grad_norm);
      st.max_post_clip_norm = std::max(st.max_post_clip_norm, nn::global_grad_norm(param_list));
      opt.step();
      st.policy_loss += L.policy.item();
      st.value_loss += L.value.item();
      st.total_loss += L.total.item();
      st.mean_entropy += L.entropy.item();
      st.clip_fraction += L.clip_fraction;
      st.grad_norm += norm;
      ++st.minibatches;
    }
  }
  const double m = static_cast<double>(st.minibatches);
  st.policy_loss /= m;
  st.value_loss /= m;
  st.total_loss /= m;
  st.mean_entropy /= m;
  st.clip_fraction /= m;
  st.grad_norm /= m;
  return st;
}

// ---------------------------------------------------------------------------
// Trainer

inline nn::AdamConfig adam_config(const HyperParams& hp) {
  nn::AdamConfig c;
  c.learning_rate = hp.learning_rate;
  return c;
}

class Trainer {
 public:
  explicit Trainer(TrainConfig cfg)
      : cfg_(std::move(cfg)),
        params_(policy::make_policy(cfg_.policy, cfg_.seed)),
        opt_(std::make_unique<nn::Adam>(params_.parameters(), adam_config(cfg_.hp))),
        envs_(cfg_.hp.n_envs, cfg_.kind, cfg_.sector, cfg_.scenario, cfg_.seed),
        scales_(features::FeatureScales::from_sector(cfg_.sector)) {
    cfg_.reward.validate();
    cfg_.hp.validate();
    std::seed_seq seq{static_cast<std::uint32_t>(cfg_.seed), static_cast<std::uint32_t>(cfg_.seed >> 32), 0xac7u};
    rng_.seed(seq);
  }

  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;
  Trainer(Trainer&&) = default;
  Trainer& operator=(Trainer&&) = default;

  // One collect -> GAE -> update cycle.
  TrainStats run_update() {
    EpisodeCounters counters;
    buffer_ = collect_rollouts(envs_, params_, cfg_.hp.horizon, rng_, cfg_.reward, scales_, &counters);
    compute_gae(buffer_, cfg_.hp.gamma, cfg_.hp.lambda);
    auto st = ppo_update(params_, *opt_, buffer_, cfg_.hp, rng_);
    st.update = ++updates_;
    st.episodes = counters;
    return st;
  }

  nlohmann::json metadata() const {
    return {{"kind", "sepassure-train"},
            {"train_config", train_config_to_json(cfg_)},
            {"features", {{"distance", scales_.distance}, {"speed", scales_.speed}, {"speed_range", scales_.speed_range}}},
            {"reward", reward::reward_params_to_json(cfg_.reward)},
            // Exact SI copies; the aviation-unit config above can drift by an ulp.
            {"sector_si", airspace::sector_to_si_json(cfg_.sector)},
            {"scenario_si",
             {{"head_on_half_length", cfg_.scenario.head_on_half_length},
              {"head_on_angle", cfg_.scenario.head_on_angle},
              {"min_endpoint_separation", cfg_.scenario.min_endpoint_separation}}},
            {"seed", cfg_.seed},
            {"updates_done", updates_},
            {"adam_steps", opt_->steps()},
            {"rng", airspace::engine_state(rng_)},
            {"envs", envs_.to_json()}};
  }

  void save(const std::string& path) const {
    std::vector<nn::NamedTensor> extra;
    const auto named = params_.named_parameters();
    for (std::size_t k = 0; k < named.size(); ++k) {
      const auto& shape = named[k].tensor.shape();
      extra.push_back({"adam.m." + named[k].name, Tensor(shape, opt_->first_moments()[k])});
      extra.push_back({"adam.v." + named[k].name, Tensor(shape, opt_->second_moments()[k])});
    }
    policy::save_policy(path, params_, metadata(), std::move(extra));
  }

  static Trainer resume(const std::string& path) {
    auto loaded = policy::load_policy(path);
    const auto& meta = loaded.metadata;
    if (!meta.contains("train_config")) throw IoError(path + " is not a training checkpoint");
    auto cfg = train_config_from_json(meta.at("train_config"));
    cfg.sector = airspace::sector_from_si_json(meta.at("sector_si"));
    const auto& sc = meta.at("scenario_si");
    cfg.scenario.head_on_half_length = sc.at("head_on_half_length");
    cfg.scenario.head_on_angle = sc.at("head_on_angle");
    cfg.scenario.min_endpoint_separation = sc.at("min_endpoint_separation");
    Trainer t(std::move(cfg));
    policy::assign_parameters(t.params_, loaded.raw.tensors);
    const auto named = t.params_.named_parameters();
    for (std::size_t k = 0; k < named.size(); ++k) {
      const auto* m = loaded.raw.find("adam.m." + named[k].name);
      const auto* v = loaded.raw.find("adam.v." + named[k].name);
      if (!m || !v) throw IoError("checkpoint lacks optimizer state for " + named[k].name);
      t.opt_->first_moments()[k].assign(m->data().begin(), m->data().end());
      t.opt_->second_moments()[k].assign(v->data().begin(), v->data().end());
    }
    t.opt_->set_steps(meta.at("adam_steps").get<long long>());
    t.updates_ = meta.at("updates_done");
    airspace::restore_engine(t.rng_, meta.at("rng").get<std::string>());
    t.envs_.restore(meta.at("envs"));
    return t;
  }

  const TrainConfig& config() const { return cfg_; }
  const PolicyParams& params() const { return params_; }
  const RolloutBuffer& last_buffer() const { return buffer_; }
  std::size_t updates_done() const { return updates_; }
  const features::FeatureScales& scales() const { return scales_; }

 private:
  TrainConfig cfg_;
  PolicyParams params_;
  std::unique_ptr<nn::Adam> opt_;
  VecEnv envs_;
  features::FeatureScales scales_;
  Rng rng_;
  RolloutBuffer buffer_;
  std::size_t updates_ = 0;
};

using ProgressFn = std::function<void(const TrainStats&)>;

inline std::string checkpoint_name(std::size_t update) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "checkpoint_%04zu.ckpt", update);
  return buf;
}

// Runs updates until cfg.hp.updates are done. Appends one row per update to
// out_dir/stats.csv, writes a checkpoint every checkpoint_every updates and
// out_dir/final.ckpt at the end. Returns the stats of this call's updates.
inline std::vector<TrainStats> train(Trainer& trainer, const std::string& out_dir,
                                     const ProgressFn& progress = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const fs::path stats_path = fs::path(out_dir) / "stats.csv";
  const bool fresh = trainer.updates_done() == 0;
  std::ofstream csv(stats_path, fresh ? std::ios::trunc : std::ios::app);
  if (!csv) throw IoError("cannot write " + stats_path.string());
  if (fresh) csv << kStatsHeader << '\n';
  std::vector<TrainStats> all;
  const auto& cfg = trainer.config();
  while (trainer.updates_done() < cfg.hp.updates) {
    auto st = trainer.run_update();
    write_stats_row(csv, st);
    csv.flush();
    if (progress) progress(st);
    if (cfg.checkpoint_every && st.update % cfg.checkpoint_every == 0)
      trainer.save((fs::path(out_dir) / checkpoint_name(st.update)).string());
    all.push_back(st);
  }
  trainer.save((fs::path(out_dir) / "final.ckpt").string());
  return all;
}

}  // namespace sepassure::ppo
