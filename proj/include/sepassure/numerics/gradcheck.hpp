#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "sepassure/numerics/tensor.hpp"

namespace sepassure::nn {

struct GradCheckOptions {
  double step = 1e-5;
  // 0 checks every coordinate; otherwise a seeded sample of at most this
  // many coordinates per tensor.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
};

// Compares supplied analytic gradients with central differences of `value`.
// Error per coordinate is |analytic - numeric| / max(1, |analytic|).
inline GradCheckResult compare_with_finite_differences(
    const std::function<double()>& value, std::vector<Tensor>& params,
    const std::vector<std::vector<double>>& analytic, const GradCheckOptions& opt = {}) {
  GradCheckResult res;
  std::mt19937_64 rng(opt.seed);
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto w = params[t].mutable_data();
    std::vector<std::size_t> coords(w.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opt.max_coords_per_tensor && coords.size() > opt.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opt.max_coords_per_tensor);
    }
    for (std::size_t i : coords) {
      const double saved = w[i];
      w[i] = saved + opt.step;
      const double up = value();
      w[i] = saved - opt.step;
      const double down = value();
      w[i] = saved;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double a = analytic[t][i];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      ++res.coords_checked;
      if (err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst_tensor = t;
        res.worst_index = i;
      }
    }
  }
  return res;
}

// Runs backward on loss() for the analytic side, then checks every (or a
// sampled subset of) parameter coordinate against central differences.
inline GradCheckResult finite_diff_check(const std::function<Tensor()>& loss,
                                         std::vector<Tensor>& params,
                                         const GradCheckOptions& opt = {}) {
  for (auto& p : params) p.zero_grad();
  backward(loss());
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());
  auto value = [&] {
    NoGradGuard ng;
    return loss().item();
  };
  return compare_with_finite_differences(value, params, analytic, opt);
}

}  // namespace sepassure::nn
