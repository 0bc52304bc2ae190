#pragma once

// Finite-difference checks over every differentiable op and the full policy
// network. Shared by the test suite, the acceptance runner and the CLI.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "sepassure/featurize.hpp"
#include "sepassure/numerics/gradcheck.hpp"
#include "sepassure/numerics/layers.hpp"
#include "sepassure/policy.hpp"

namespace sepassure::gradsuite {

using nn::GradCheckOptions;
using nn::Tensor;

struct Entry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coords = 0;
};

inline Tensor random_tensor(nn::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n01(0.0, scale);
  std::vector<double> v(nn::shape_size(shape));
  for (auto& x : v) x = n01(rng);
  return Tensor(std::move(shape), std::move(v), true);
}

// Random linear functional of y: reduces any output to a scalar loss whose
// gradient touches every output coordinate.
inline Tensor project(const Tensor& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> w(y.size());
  for (auto& x : w) x = n01(rng);
  return nn::sum(nn::mul(y, Tensor(y.shape(), std::move(w))));
}

inline Entry check(const std::string& name, std::vector<Tensor> params,
                   const std::function<Tensor()>& f, std::uint64_t seed,
                   const GradCheckOptions& opt = {}) {
  auto res = nn::finite_diff_check([&] { return project(f(), seed); }, params, opt);
  return {name, res.max_rel_error, res.coords_checked};
}

// One pass over every op on random inputs drawn from `seed`.
inline std::vector<Entry> op_suite(std::uint64_t seed) {
  using namespace nn;
  std::mt19937_64 rng(seed);
  std::vector<Entry> out;
  auto run = [&](const char* name, std::vector<Tensor> params, std::function<Tensor()> f) {
    out.push_back(check(name, std::move(params), f, rng()));
  };
  auto a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  auto c = random_tensor({3, 4}, rng), e = random_tensor({3, 4}, rng);
  auto bias = random_tensor({4}, rng), g = random_tensor({4}, rng), h = random_tensor({4}, rng);
  run("matmul", {a, b}, [&] { return matmul(a, b); });
  run("add_row", {c, bias}, [&] { return add_row(c, bias); });
  run("add", {c, e}, [&] { return add(c, e); });
  run("sub", {c, e}, [&] { return sub(c, e); });
  run("mul", {c, e}, [&] { return mul(c, e); });
  run("scale", {c}, [&] { return scale(c, -1.7); });
  run("add_scalar", {c}, [&] { return add_scalar(c, 0.3); });
  run("exp", {c}, [&] { return exp(c); });
  run("square", {c}, [&] { return square(c); });
  run("gelu", {c}, [&] { return gelu(c); });
  run("softmax", {c}, [&] { return softmax(c); });
  run("log_softmax", {c}, [&] { return log_softmax(c); });
  run("sum", {c}, [&] { return sum(c); });
  run("mean", {c}, [&] { return mean(c); });
  run("row_sum", {c}, [&] { return row_sum(c); });
  run("layer_norm", {c, g, h}, [&] { return layer_norm(c, g, h); });
  run("concat_rows", {c, e}, [&] { return concat_rows({c, e}); });
  run("concat_cols", {c, a}, [&] { return concat_cols(c, a); });
  run("gather_rows", {c}, [&] { return gather_rows(c, {2, 0, 2, 1}); });
  run("repeat_rows", {g}, [&] { return repeat_rows(g, 3); });
  run("pick", {c}, [&] { return pick(c, {3, 0, 1}); });
  run("reshape", {c}, [&] { return reshape(c, {4, 3}); });
  auto lb = random_tensor({2}, rng);
  run("linear", {c, b, lb}, [&] { return linear(c, b, lb); });
  // Piecewise ops; random inputs avoid the kinks with probability one.
  run("clamp", {c}, [&] { return clamp(c, -0.5, 0.5); });
  run("minimum", {c, e}, [&] { return minimum(c, e); });
  run("maximum", {c, e}, [&] { return maximum(c, e); });
  auto q = random_tensor({6, 8}, rng), k = random_tensor({6, 8}, rng), v = random_tensor({6, 8}, rng);
  run("attention_core", {q, k, v}, [&] { return attention_core(q, k, v, 3, 2); });
  auto w = make_attention(8, rng);
  auto x = random_tensor({4, 8}, rng);
  run("self_attention",
      {x, w.query.weight, w.query.bias, w.key.weight, w.key.bias, w.value.weight, w.value.bias,
       w.output.weight, w.output.bias},
      [&] { return self_attention(x, w, 4); });
  return out;
}

// A plausible observation with n intruders, features in their natural ranges.
inline features::EgoObservation synthetic_observation(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0), s(-1.0, 1.0);
  features::EgoObservation obs;
  obs.v_cas = u(rng);
  obs.speed_deviation = 0.5 * u(rng);
  for (std::size_t i = 0; i < n; ++i) {
    features::IntruderFeature f;
    f.d_nmac = u(rng);
    f.d_pz = f.d_nmac - 0.08;
    const double th = 3.14159 * s(rng);
    f.sin_theta = std::sin(th);
    f.cos_theta = std::cos(th);
    f.b_los = f.d_pz <= 0.0 ? 1.0 : 0.0;
    f.v_radial = s(rng);
    f.v_tangential = s(rng);
    obs.intruders.push_back(f);
  }
  return obs;
}

// Scalar probe through both heads: weighted log-probabilities plus value.
inline Tensor network_probe(const std::vector<const features::EgoObservation*>& batch,
                            const policy::PolicyParams& p, std::uint64_t seed) {
  const auto out = policy::forward_batch(batch, p);
  return nn::add(project(nn::log_softmax(out.logits), seed), project(out.values, seed + 1));
}

// Gradient check of every parameter tensor of a freshly initialized network
// on one observation with `intruders` intruders. max_coords = 0 checks every
// coordinate.
inline Entry network_check(const policy::PolicyConfig& cfg, std::uint64_t seed,
                           std::size_t intruders = 3, std::size_t max_coords = 0) {
  auto params = policy::make_policy(cfg, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const auto obs = synthetic_observation(rng, intruders);
  auto tensors = params.parameters();
  GradCheckOptions opt;
  opt.max_coords_per_tensor = max_coords;
  opt.seed = seed;
  auto res = nn::finite_diff_check([&] { return network_probe({&obs}, params, seed); }, tensors, opt);
  return {"policy d" + std::to_string(cfg.d_emb) + " ff" + std::to_string(cfg.d_ff) + " h" +
              std::to_string(cfg.heads) + " M" + std::to_string(cfg.layers),
          res.max_rel_error, res.coords_checked};
}

}  // namespace sepassure::gradsuite
