#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <random>

#include "sepassure/gradient_suite.hpp"
#include "sepassure/policy.hpp"

using namespace sepassure;
using namespace sepassure::policy;
using features::EgoObservation;
using gradsuite::synthetic_observation;

namespace {

PolicyConfig small_config(std::size_t layers = 1) { return {16, 32, 4, layers}; }

std::vector<double> values_of(const nn::Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(PolicyConfig, ParameterCountMatchesEnumeration) {
  for (std::size_t m : {1u, 2u, 3u}) {
    PolicyConfig c;
    c.layers = m;
    const auto p = make_policy(c, m);
    EXPECT_EQ(p.parameter_count(), parameter_count(c)) << "M=" << m;
    const auto s = make_policy(small_config(m), m);
    EXPECT_EQ(s.parameter_count(), parameter_count(small_config(m)));
  }
  // Hand count for d=128, ff=512, M=1.
  const std::size_t d = 128, f = 512;
  const std::size_t expected = d + (d + 2) * d + d + 2 * d + 7 * d + d + 2 * d +
                               (4 * d + 4 * d * d + 4 * d + d * f + f + f * d + d) + 3 * d + 3 + d + 1;
  EXPECT_EQ(parameter_count(PolicyConfig{}), expected);
}

TEST(PolicyConfig, RejectsIndivisibleHeads) {
  EXPECT_THROW(make_policy(PolicyConfig{128, 512, 12, 1}, 0), ConfigError);
  EXPECT_THROW(make_policy(PolicyConfig{128, 512, 16, 0}, 0), ConfigError);
  auto c = policy_config_from_json(nlohmann::json{{"layers", 3}});
  EXPECT_EQ(c.layers, 3u);
  EXPECT_EQ(c.d_emb, 128u);
}

TEST(Tokens, ClsTokenShapeAndDependence) {
  const auto p = make_policy(PolicyConfig{}, 1);
  const auto a = make_cls_token(nn::Tensor::matrix(1, 2, {0.5, 0.1}), p);
  const auto a2 = make_cls_token(nn::Tensor::matrix(1, 2, {0.5, 0.1}), p);
  const auto b = make_cls_token(nn::Tensor::matrix(1, 2, {0.6, 0.0}), p);
  EXPECT_EQ(a.shape(), (nn::Shape{1, 128}));
  EXPECT_EQ(values_of(a), values_of(a2));
  EXPECT_NE(values_of(a), values_of(b));
}

TEST(Tokens, IntruderTokens) {
  const auto p = make_policy(PolicyConfig{}, 2);
  EXPECT_EQ(make_intruder_tokens(nn::Tensor::zeros({0, 7}), p).size(), 0u);
  std::mt19937_64 rng(3);
  const auto obs = synthetic_observation(rng, 5);
  const auto t = make_intruder_tokens(nn::Tensor::matrix(5, 7, obs.intruder_matrix()), p);
  EXPECT_EQ(t.shape(), (nn::Shape{5, 128}));
  auto row = obs.intruder_matrix();
  row.resize(7);
  std::vector<double> twice = row;
  twice.insert(twice.end(), row.begin(), row.end());
  const auto u = make_intruder_tokens(nn::Tensor::matrix(2, 7, twice), p);
  for (std::size_t j = 0; j < 128; ++j) EXPECT_EQ(u.at(0, j), u.at(1, j));
}

TEST(Forward, ShapesForAllIntruderCounts) {
  const auto p = make_policy(PolicyConfig{}, 4);
  std::mt19937_64 rng(5);
  nn::NoGradGuard ng;
  for (std::size_t n = 0; n < 20; ++n) {
    const auto obs = synthetic_observation(rng, n);
    const auto out = forward(obs, p);
    EXPECT_EQ(out.logits.shape(), (nn::Shape{1, 3}));
    EXPECT_EQ(out.values.shape(), (nn::Shape{1}));
    for (double x : out.logits.data()) EXPECT_TRUE(std::isfinite(x));
  }
}

TEST(Forward, PermutationInvariance) {
  const auto p = make_policy(PolicyConfig{}, 6);
  std::mt19937_64 rng(7);
  nn::NoGradGuard ng;
  for (std::size_t n = 0; n < 20; ++n) {
    const auto obs = synthetic_observation(rng, n);
    const auto ref = forward(obs, p);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      auto perm = obs;
      std::shuffle(perm.intruders.begin(), perm.intruders.end(), rng);
      const auto out = forward(perm, p);
      for (std::size_t a = 0; a < 3; ++a)
        worst = std::max(worst, std::abs(out.logits[a] - ref.logits[a]));
      worst = std::max(worst, std::abs(out.values[0] - ref.values[0]));
    }
    EXPECT_LT(worst, 1e-10) << "n=" << n;
  }
}

TEST(Forward, BatchMatchesPerSample) {
  const auto p = make_policy(small_config(2), 8);
  std::mt19937_64 rng(9);
  std::vector<EgoObservation> obs;
  for (int i = 0; i < 30; ++i) obs.push_back(synthetic_observation(rng, static_cast<std::size_t>(i % 7)));
  std::vector<const EgoObservation*> batch;
  for (auto& o : obs) batch.push_back(&o);
  nn::NoGradGuard ng;
  const auto out = forward_batch(batch, p);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto one = forward(obs[i], p);
    for (std::size_t a = 0; a < 3; ++a) EXPECT_NEAR(out.logits.at(i, a), one.logits[a], 1e-12);
    EXPECT_NEAR(out.values[i], one.values[0], 1e-12);
  }
}

TEST(Act, GreedyPicksArgmax) {
  std::mt19937_64 rng(1);
  const double logits[3] = {0.1, 2.0, 0.3};
  const auto r = select_action(logits, 0.0, rng, ActMode::Greedy);
  EXPECT_EQ(airspace::advisory_index(r.advisory), 1u);
}

TEST(Act, UniformLogProb) {
  std::mt19937_64 rng(1);
  const double logits[3] = {0.7, 0.7, 0.7};
  for (int k = 0; k < 10; ++k)
    EXPECT_NEAR(select_action(logits, 0.0, rng, ActMode::Sample).log_prob, -std::log(3.0), 1e-15);
}

TEST(Act, SampleFrequenciesMatchSoftmax) {
  std::mt19937_64 rng(2);
  const double logits[3] = {-0.4, 1.1, 0.2};
  const int draws = 100000;
  std::array<int, 3> counts{};
  std::array<double, 3> probs{};
  for (int k = 0; k < draws; ++k) {
    const auto r = select_action(logits, 0.0, rng, ActMode::Sample);
    ++counts[airspace::advisory_index(r.advisory)];
    probs = r.probs;
  }
  for (std::size_t a = 0; a < 3; ++a) {
    const double sigma = std::sqrt(draws * probs[a] * (1 - probs[a]));
    EXPECT_LT(std::abs(counts[a] - draws * probs[a]), 3 * sigma) << "action " << a;
  }
}

TEST(EvaluateActions, ConsistentWithAct) {
  const auto p = make_policy(small_config(), 10);
  std::mt19937_64 rng(11);
  std::vector<EgoObservation> obs;
  std::vector<const EgoObservation*> batch;
  for (int i = 0; i < 12; ++i) obs.push_back(synthetic_observation(rng, static_cast<std::size_t>(i % 4)));
  for (auto& o : obs) batch.push_back(&o);
  std::vector<std::size_t> actions;
  std::vector<ActResult> acts;
  for (auto& o : obs) {
    acts.push_back(act(o, p, rng, ActMode::Sample));
    actions.push_back(airspace::advisory_index(acts.back().advisory));
  }
  const auto ev = evaluate_actions(batch, actions, p);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    EXPECT_NEAR(ev.log_probs[i], acts[i].log_prob, 1e-12);
    EXPECT_NEAR(ev.values[i], acts[i].value, 1e-12);
    EXPECT_GE(ev.entropies[i], 0.0);
    EXPECT_LE(ev.entropies[i], std::log(3.0) + 1e-12);
  }
}

TEST(EvaluateActions, UniformEntropyIsLn3) {
  auto p = make_policy(small_config(), 12);
  for (auto& w : p.policy_head.weight.mutable_data()) w = 0.0;
  std::mt19937_64 rng(13);
  const auto obs = synthetic_observation(rng, 2);
  const auto ev = evaluate_actions({&obs}, {0}, p);
  EXPECT_NEAR(ev.entropies[0], std::log(3.0), 1e-12);
  EXPECT_NEAR(ev.log_probs[0], -std::log(3.0), 1e-12);
}

TEST(Gradients, FullNetworkEveryCoordinateSmallWidth) {
  for (std::size_t m : {1u, 2u}) {
    const auto e = gradsuite::network_check(small_config(m), 100 + m, 3, 0);
    EXPECT_LT(e.max_rel_error, 1e-4) << e.name;
    EXPECT_EQ(e.coords, parameter_count(small_config(m)));
  }
}

TEST(Gradients, FullNetworkTableDimensionsSampled) {
  const auto e = gradsuite::network_check(PolicyConfig{}, 7, 3, 6);
  EXPECT_LT(e.max_rel_error, 1e-4) << e.name;
}

TEST(Gradients, HeadsShareTheEncoder) {
  auto p = make_policy(small_config(), 14);
  std::mt19937_64 rng(15);
  const auto obs = synthetic_observation(rng, 3);
  nn::NoGradGuard ng;
  const auto before = forward(obs, p);
  p.encoder[0].ff_out.weight.mutable_data()[5] += 0.05;
  const auto after = forward(obs, p);
  EXPECT_NE(values_of(before.logits), values_of(after.logits));
  EXPECT_NE(before.values[0], after.values[0]);
}

TEST(Checkpoint, RoundTripForwardIsBitIdentical) {
  auto p = make_policy(PolicyConfig{128, 512, 16, 2}, 16);
  const auto path = (std::filesystem::temp_directory_path() / "sepassure_policy_test.bin").string();
  save_policy(path, p, {{"seed", 16}, {"note", "test"}});
  const auto loaded = load_policy(path);
  std::filesystem::remove(path);
  EXPECT_EQ(loaded.params.config, p.config);
  EXPECT_EQ(loaded.metadata.at("seed"), 16);
  std::mt19937_64 rng(17);
  nn::NoGradGuard ng;
  for (std::size_t n : {0u, 1u, 6u}) {
    const auto obs = synthetic_observation(rng, n);
    const auto a = forward(obs, p), b = forward(obs, loaded.params);
    EXPECT_EQ(std::memcmp(a.logits.data().data(), b.logits.data().data(), 3 * sizeof(double)), 0);
    EXPECT_EQ(std::memcmp(a.values.data().data(), b.values.data().data(), sizeof(double)), 0);
  }
}

TEST(Checkpoint, CloneIsIndependent) {
  auto p = make_policy(small_config(), 18);
  auto q = p.clone();
  p.cls_base.mutable_data()[0] += 1.0;
  EXPECT_NE(p.cls_base[0], q.cls_base[0]);
  EXPECT_EQ(p.cls_base[1], q.cls_base[1]);
}

TEST(Gradients, SharedOpSuite) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto entries = gradsuite::op_suite(seed);
    EXPECT_GE(entries.size(), 28u);
    for (const auto& e : entries) EXPECT_LT(e.max_rel_error, 1e-4) << e.name;
  }
}
