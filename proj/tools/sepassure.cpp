// sepassure: train, evaluate and inspect speed-advisory policies.
//
//   sepassure train --config configs/smoke.json --out runs/smoke
//   sepassure train --checkpoint runs/smoke/checkpoint_0020.ckpt --out runs/smoke
//   sepassure eval --checkpoint runs/smoke/final.ckpt --case a --episodes 100 --seed 7 --out eval/a
//   sepassure gradcheck
//   sepassure rollout-dump --checkpoint runs/smoke/final.ckpt --case b --seed 3 --out dump/b
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "sepassure/airspace/config.hpp"
#include "sepassure/airspace/serialize.hpp"
#include "sepassure/gradient_suite.hpp"
#include "sepassure/harness.hpp"
#include "sepassure/ppo.hpp"

using namespace sepassure;

namespace {

struct Options {
  std::string config;
  std::string checkpoint;
  std::string case_id = "a";
  std::size_t episodes = 100;
  std::uint64_t seed = 0;
  std::string out;
  bool random_policy = false;
};

// Sector and scenario for evaluation: an explicit config wins, then the
// checkpoint's training sector, then defaults.
struct EvalSetup {
  airspace::SectorParams sector;
  airspace::ScenarioParams scenario;
  std::optional<policy::PolicyParams> params;
};

EvalSetup eval_setup(const Options& o) {
  EvalSetup s;
  if (!o.checkpoint.empty()) {
    auto loaded = policy::load_policy(o.checkpoint);
    if (loaded.metadata.contains("sector_si"))
      s.sector = airspace::sector_from_si_json(loaded.metadata.at("sector_si"));
    if (loaded.metadata.contains("train_config"))
      s.scenario = airspace::scenario_params_from_json(loaded.metadata.at("train_config"));
    s.params = std::move(loaded.params);
  }
  if (!o.config.empty()) {
    const auto c = airspace::load_scenario_config(o.config);
    s.sector = c.sector;
    s.scenario = c.scenario;
  }
  return s;
}

harness::PolicyFn pick_policy(const Options& o, const EvalSetup& s) {
  if (o.random_policy) return harness::random_policy(o.seed ^ 0x9e3779b97f4a7c15ull);
  if (!s.params) throw ConfigError("--checkpoint is required unless --random is given");
  return harness::greedy_policy(*s.params, features::FeatureScales::from_sector(s.sector));
}

int cmd_train(const Options& o, bool seed_given) {
  std::optional<ppo::Trainer> trainer;
  if (!o.checkpoint.empty()) {
    trainer.emplace(ppo::Trainer::resume(o.checkpoint));
    std::printf("resumed %s at update %zu\n", o.checkpoint.c_str(), trainer->updates_done());
  } else {
    if (o.config.empty()) throw ConfigError("train needs --config or --checkpoint");
    auto cfg = ppo::load_train_config(o.config);
    if (seed_given) cfg.seed = o.seed;
    trainer.emplace(std::move(cfg));
  }
  const std::string out = o.out.empty() ? "runs/train" : o.out;
  const auto& cfg = trainer->config();
  std::printf("training %s: %zu updates, %zu envs x %zu steps, %zu parameters -> %s\n",
              std::string(airspace::env_kind_name(cfg.kind)).c_str(), cfg.hp.updates, cfg.hp.n_envs,
              cfg.hp.horizon, trainer->params().parameter_count(), out.c_str());
  const auto t0 = std::chrono::steady_clock::now();
  ppo::train(*trainer, out, [&](const ppo::TrainStats& st) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("update %4zu  return %9.3f  entropy %.4f  loss %9.4f  clip %.3f  nmac %zu  %.0fs\n", st.update,
                st.mean_lambda_return, st.mean_entropy, st.total_loss, st.clip_fraction,
                st.episodes.nmac_events, secs);
    std::fflush(stdout);
  });
  std::printf("wrote %s/final.ckpt\n", out.c_str());
  return 0;
}

int cmd_eval(const Options& o) {
  const auto setup = eval_setup(o);
  harness::EvalOptions opt;
  opt.kind = airspace::parse_env_kind(o.case_id);
  opt.episodes = o.episodes;
  opt.seed = o.seed;
  opt.sector = setup.sector;
  opt.scenario = setup.scenario;
  if (opt.episodes == 0) throw ConfigError("--episodes must be positive");
  const auto ms = harness::evaluate(pick_policy(o, setup), opt);
  const std::string out = o.out.empty() ? "eval" : o.out;
  const auto paths = harness::emit_report(ms, out, opt.kind, o.random_policy ? "random" : "greedy");
  for (const auto& a : harness::aggregate_by_density(ms))
    std::printf("%-12s episodes %4zu  nmac %.4f  los_s %.3f  adherence %.4f  density %.2f\n", a.group.c_str(),
                a.episodes, a.mean_nmac_count, a.mean_los_seconds, a.mean_speed_adherence, a.mean_max_density);
  std::printf("wrote %s and %s\n", paths.episodes.c_str(), paths.aggregate.c_str());
  return 0;
}

int cmd_gradcheck(const Options& o) {
  double worst = 0.0;
  auto report = [&](const gradsuite::Entry& e) {
    worst = std::max(worst, e.max_rel_error);
    std::printf("%-44s coords %7zu  max_rel_error %.3e\n", e.name.c_str(), e.coords, e.max_rel_error);
  };
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& e : gradsuite::op_suite(o.seed)) report(e);
  report(gradsuite::network_check(policy::PolicyConfig{16, 32, 4, 1}, o.seed + 1, 3, 0));
  report(gradsuite::network_check(policy::PolicyConfig{}, o.seed + 2, 3, 6));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("max relative error %.3e (%.1fs)\n", worst, secs);
  return worst < 1e-4 ? 0 : 1;
}

int cmd_rollout_dump(const Options& o) {
  const auto setup = eval_setup(o);
  const auto kind = airspace::parse_env_kind(o.case_id);
  const std::string out = o.out.empty() ? "rollout" : o.out;
  const auto m = harness::dump_rollout(airspace::make_world(kind, setup.sector, o.seed, setup.scenario),
                                       pick_policy(o, setup), out);
  std::printf("%zu steps, %zu aircraft, nmac %zu, los_s %.0f, adherence %.4f\n", m.steps, m.aircraft, m.nmac_count,
              m.los_seconds, m.speed_adherence);
  std::printf("wrote %s/events.csv and %s/trajectory.csv\n", out.c_str(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speed-advisory separation assurance: training, evaluation and diagnostics"};
  app.require_subcommand(1);
  Options o;
  const std::vector<std::string> cases{"a", "b", "c", "training", "head_on"};

  auto* train = app.add_subcommand("train", "Train a policy with PPO");
  train->add_option("--config", o.config, "Training config JSON");
  train->add_option("--checkpoint", o.checkpoint, "Resume from a training checkpoint");
  auto* train_seed = train->add_option("--seed", o.seed, "Override the config seed");
  train->add_option("--out", o.out, "Output directory (stats.csv, checkpoints)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint with greedy advisories");
  eval->add_option("--checkpoint", o.checkpoint, "Policy checkpoint");
  eval->add_option("--config", o.config, "Scenario config overriding the checkpoint's sector");
  eval->add_option("--case", o.case_id, "Scenario case")->check(CLI::IsMember(cases));
  eval->add_option("--episodes", o.episodes, "Number of episodes")->check(CLI::PositiveNumber);
  eval->add_option("--seed", o.seed, "Evaluation seed");
  eval->add_option("--out", o.out, "Report directory");
  eval->add_flag("--random", o.random_policy, "Uniform random advisories instead of a checkpoint");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every op and the full network");
  grad->add_option("--seed", o.seed, "Seed for inputs and parameters");

  auto* dump = app.add_subcommand("rollout-dump", "Write event and trajectory logs for one episode");
  dump->add_option("--checkpoint", o.checkpoint, "Policy checkpoint");
  dump->add_option("--config", o.config, "Scenario config overriding the checkpoint's sector");
  dump->add_option("--case", o.case_id, "Scenario case")->check(CLI::IsMember(cases));
  dump->add_option("--seed", o.seed, "Scenario seed");
  dump->add_option("--out", o.out, "Output directory");
  dump->add_flag("--random", o.random_policy, "Uniform random advisories instead of a checkpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train) return cmd_train(o, train_seed->count() > 0);
    if (*eval) return cmd_eval(o);
    if (*grad) return cmd_gradcheck(o);
    if (*dump) return cmd_rollout_dump(o);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
