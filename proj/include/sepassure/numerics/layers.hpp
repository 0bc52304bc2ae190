#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "sepassure/numerics/tensor.hpp"

namespace sepassure::nn {

struct Affine {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]

  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

struct Norm {
  Tensor gain;  // [d]
  Tensor bias;  // [d]
  double eps = 1e-5;

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias, eps); }
};

struct AttentionWeights {
  Affine query, key, value, output;
};

// Weights uniform in +-1/sqrt(fan_in), zero bias.
template <typename Rng>
Affine make_affine(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> w(in * out);
  for (auto& x : w) x = u(rng);
  return {Tensor(Shape{in, out}, std::move(w), true), Tensor::zeros(Shape{out}, true)};
}

inline Norm make_norm(std::size_t d, double eps = 1e-5) {
  return {Tensor::filled(Shape{d}, 1.0, true), Tensor::zeros(Shape{d}, true), eps};
}

template <typename Rng>
AttentionWeights make_attention(std::size_t d, Rng& rng) {
  AttentionWeights w;
  w.query = make_affine(d, d, rng);
  w.key = make_affine(d, d, rng);
  w.value = make_affine(d, d, rng);
  w.output = make_affine(d, d, rng);
  return w;
}

// Multi-head self-attention over groups of `group` consecutive token rows;
// group == 0 means the whole input is one token set. No positional terms.
inline Tensor self_attention(const Tensor& tokens, const AttentionWeights& w, std::size_t heads,
                             std::size_t group = 0) {
  detail::require_matrix(tokens, "self_attention");
  const std::size_t d = tokens.cols();
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("self_attention: width " + std::to_string(d) +
                      " not divisible by " + std::to_string(heads) + " heads");
  }
  if (group == 0) group = tokens.rows();
  const Tensor ctx = attention_core(w.query(tokens), w.key(tokens), w.value(tokens), group, heads);
  return w.output(ctx);
}

}  // namespace sepassure::nn
