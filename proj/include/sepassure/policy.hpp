#pragma once

// Transformer-encoder policy/value network over a variable-size intruder set.
//
//   cls      = LN(GELU(A_own [cls_base | ownship]))
//   tokens   = LN(A_intr intruder)             one per intruder
//   x        = [cls, tokens...]                no positional terms
//   M x      x += MHA(LN(x));  x += FFN(LN(x))  (pre-norm)
//   logits   = A_pi x[0],  value = A_v x[0]

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "sepassure/airspace/sector.hpp"
#include "sepassure/errors.hpp"
#include "sepassure/featurize.hpp"
#include "sepassure/numerics/checkpoint.hpp"
#include "sepassure/numerics/layers.hpp"
#include "sepassure/numerics/tensor.hpp"

namespace sepassure::policy {

using features::EgoObservation;
using features::kIntruderFeatures;
using features::kOwnshipFeatures;
using nn::Affine;
using nn::Norm;
using nn::Tensor;

inline constexpr std::size_t kNumActions = airspace::kNumAdvisories;

struct PolicyConfig {
  std::size_t d_emb = 128;
  std::size_t d_ff = 512;
  std::size_t heads = 16;
  std::size_t layers = 1;

  void validate() const {
    if (d_emb == 0 || d_ff == 0 || heads == 0 || layers == 0)
      throw ConfigError("policy dimensions must be positive");
    if (d_emb % heads != 0)
      throw ConfigError("d_emb " + std::to_string(d_emb) + " not divisible by " +
                        std::to_string(heads) + " heads");
  }
  bool operator==(const PolicyConfig&) const = default;
};

inline nlohmann::json policy_config_to_json(const PolicyConfig& c) {
  return {{"d_emb", c.d_emb}, {"d_ff", c.d_ff}, {"heads", c.heads}, {"layers", c.layers}};
}

inline PolicyConfig policy_config_from_json(const nlohmann::json& j, PolicyConfig c = {}) {
  c.d_emb = j.value("d_emb", c.d_emb);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.heads = j.value("heads", c.heads);
  c.layers = j.value("layers", c.layers);
  c.validate();
  return c;
}

struct EncoderLayer {
  Norm attn_norm;
  nn::AttentionWeights attn;
  Norm ff_norm;
  Affine ff_in;
  Affine ff_out;
};

struct PolicyParams {
  PolicyConfig config;
  Tensor cls_base;
  Affine ownship_adapter;
  Norm ownship_norm;
  Affine intruder_adapter;
  Norm intruder_norm;
  std::vector<EncoderLayer> encoder;
  Affine policy_head;
  Affine value_head;

  // Stable names, in a fixed order shared by checkpoints and optimizers.
  std::vector<nn::NamedTensor> named_parameters() const {
    std::vector<nn::NamedTensor> out;
    auto aff = [&](const std::string& n, const Affine& a) {
      out.push_back({n + ".weight", a.weight});
      out.push_back({n + ".bias", a.bias});
    };
    auto norm = [&](const std::string& n, const Norm& a) {
      out.push_back({n + ".gain", a.gain});
      out.push_back({n + ".bias", a.bias});
    };
    out.push_back({"cls_base", cls_base});
    aff("ownship_adapter", ownship_adapter);
    norm("ownship_norm", ownship_norm);
    aff("intruder_adapter", intruder_adapter);
    norm("intruder_norm", intruder_norm);
    for (std::size_t l = 0; l < encoder.size(); ++l) {
      const std::string p = "encoder." + std::to_string(l) + ".";
      const auto& e = encoder[l];
      norm(p + "attn_norm", e.attn_norm);
      aff(p + "attn.query", e.attn.query);
      aff(p + "attn.key", e.attn.key);
      aff(p + "attn.value", e.attn.value);
      aff(p + "attn.output", e.attn.output);
      norm(p + "ff_norm", e.ff_norm);
      aff(p + "ff_in", e.ff_in);
      aff(p + "ff_out", e.ff_out);
    }
    aff("policy_head", policy_head);
    aff("value_head", value_head);
    return out;
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> out;
    for (auto& nt : named_parameters()) out.push_back(nt.tensor);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& nt : named_parameters()) n += nt.tensor.size();
    return n;
  }

  // Deep copy with fresh leaf tensors.
  PolicyParams clone() const;
};

// Closed form for the number of scalars in PolicyParams.
inline std::size_t parameter_count(const PolicyConfig& c) {
  const std::size_t d = c.d_emb, f = c.d_ff;
  const std::size_t adapters = d                        // cls_base
                               + (d + kOwnshipFeatures) * d + d + 2 * d
                               + kIntruderFeatures * d + d + 2 * d;
  const std::size_t layer = 2 * d + 4 * (d * d + d) + 2 * d + (d * f + f) + (f * d + d);
  const std::size_t heads = (d * kNumActions + kNumActions) + (d + 1);
  return adapters + c.layers * layer + heads;
}

inline PolicyParams make_policy(const PolicyConfig& c, std::uint64_t seed) {
  c.validate();
  std::mt19937_64 rng(seed);
  PolicyParams p;
  p.config = c;
  const std::size_t d = c.d_emb;
  {
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<double> v(d);
    for (auto& x : v) x = n01(rng);
    p.cls_base = Tensor(nn::Shape{d}, std::move(v), true);
  }
  p.ownship_adapter = nn::make_affine(d + kOwnshipFeatures, d, rng);
  p.ownship_norm = nn::make_norm(d);
  p.intruder_adapter = nn::make_affine(kIntruderFeatures, d, rng);
  p.intruder_norm = nn::make_norm(d);
  for (std::size_t l = 0; l < c.layers; ++l) {
    EncoderLayer e;
    e.attn_norm = nn::make_norm(d);
    e.attn = nn::make_attention(d, rng);
    e.ff_norm = nn::make_norm(d);
    e.ff_in = nn::make_affine(d, c.d_ff, rng);
    e.ff_out = nn::make_affine(c.d_ff, d, rng);
    p.encoder.push_back(std::move(e));
  }
  p.policy_head = nn::make_affine(d, kNumActions, rng);
  p.value_head = nn::make_affine(d, 1, rng);
  // Small policy logits at init keep the first rollouts near uniform.
  for (auto& w : p.policy_head.weight.mutable_data()) w *= 0.01;
  return p;
}

// Copies values from `src` into `dst` by name; shapes must match.
inline void assign_parameters(PolicyParams& dst, const std::vector<nn::NamedTensor>& src) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& nt : src) by_name[nt.name] = &nt.tensor;
  for (auto& nt : dst.named_parameters()) {
    auto it = by_name.find(nt.name);
    if (it == by_name.end()) throw IoError("missing parameter " + nt.name);
    if (it->second->shape() != nt.tensor.shape())
      throw IoError("shape mismatch for parameter " + nt.name);
    auto out = nt.tensor.mutable_data();
    std::copy(it->second->data().begin(), it->second->data().end(), out.begin());
  }
}

inline PolicyParams PolicyParams::clone() const {
  PolicyParams p = make_policy(config, 0);
  assign_parameters(p, named_parameters());
  return p;
}

// ---------------------------------------------------------------------------
// Forward pieces

// ownship: [B x 2] -> [B x d]
inline Tensor make_cls_token(const Tensor& ownship, const PolicyParams& p) {
  const Tensor base = nn::repeat_rows(p.cls_base, ownship.rows());
  return p.ownship_norm(nn::gelu(p.ownship_adapter(nn::concat_cols(base, ownship))));
}

// intruders: [n x 7] -> [n x d]; n = 0 gives an empty [0 x d] tensor.
inline Tensor make_intruder_tokens(const Tensor& intruders, const PolicyParams& p) {
  if (intruders.size() == 0) return Tensor::zeros(nn::Shape{0, p.config.d_emb});
  return p.intruder_norm(p.intruder_adapter(intruders));
}

// tokens: [G*n x d], independent sets of n consecutive rows.
inline Tensor encode(Tensor x, const PolicyParams& p, std::size_t group) {
  for (const auto& e : p.encoder) {
    x = nn::add(x, nn::self_attention(e.attn_norm(x), e.attn, p.config.heads, group));
    x = nn::add(x, e.ff_out(nn::gelu(e.ff_in(e.ff_norm(x)))));
  }
  return x;
}

struct PolicyOutput {
  Tensor logits;  // [B x 3]
  Tensor values;  // [B]
};

// Batched forward over observations with heterogeneous intruder counts.
// Samples are grouped by count; no padding. Rows of the outputs follow the
// input order.
inline PolicyOutput forward_batch(const std::vector<const EgoObservation*>& batch,
                                  const PolicyParams& p) {
  if (batch.empty()) throw ContractError("forward on an empty batch");
  std::map<std::size_t, std::vector<std::size_t>> by_count;
  for (std::size_t i = 0; i < batch.size(); ++i) by_count[batch[i]->intruder_count()].push_back(i);

  std::vector<Tensor> cls_parts;
  std::vector<std::size_t> order;  // original index of each concatenated row
  for (const auto& [n, members] : by_count) {
    const std::size_t G = members.size();
    std::vector<double> own, intr;
    own.reserve(G * kOwnshipFeatures);
    intr.reserve(G * n * kIntruderFeatures);
    for (std::size_t i : members) {
      const auto o = batch[i]->ownship();
      own.insert(own.end(), o.begin(), o.end());
      const auto m = batch[i]->intruder_matrix();
      intr.insert(intr.end(), m.begin(), m.end());
      order.push_back(i);
    }
    const Tensor cls = make_cls_token(Tensor::matrix(G, kOwnshipFeatures, std::move(own)), p);
    Tensor seq = cls;
    if (n > 0) {
      const Tensor tok = make_intruder_tokens(Tensor::matrix(G * n, kIntruderFeatures, std::move(intr)), p);
      // Interleave into per-sample sets: [cls_g, tok_g0 .. tok_g(n-1)].
      std::vector<std::size_t> idx;
      idx.reserve(G * (n + 1));
      for (std::size_t g = 0; g < G; ++g) {
        idx.push_back(g);
        for (std::size_t j = 0; j < n; ++j) idx.push_back(G + g * n + j);
      }
      seq = nn::gather_rows(nn::concat_rows({cls, tok}), std::move(idx));
    }
    const Tensor enc = encode(seq, p, n + 1);
    if (n > 0) {
      std::vector<std::size_t> cls_rows(G);
      for (std::size_t g = 0; g < G; ++g) cls_rows[g] = g * (n + 1);
      cls_parts.push_back(nn::gather_rows(enc, std::move(cls_rows)));
    } else {
      cls_parts.push_back(enc);
    }
  }
  Tensor cls = cls_parts.size() == 1 ? cls_parts.front() : nn::concat_rows(cls_parts);
  std::vector<std::size_t> inverse(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) inverse[order[r]] = r;
  bool identity = true;
  for (std::size_t r = 0; r < inverse.size(); ++r) identity &= inverse[r] == r;
  if (!identity) cls = nn::gather_rows(cls, std::move(inverse));
  PolicyOutput out;
  out.logits = p.policy_head(cls);
  out.values = nn::reshape(p.value_head(cls), nn::Shape{batch.size()});
  return out;
}

inline PolicyOutput forward(const EgoObservation& obs, const PolicyParams& p) {
  return forward_batch({&obs}, p);
}

// ---------------------------------------------------------------------------
// Acting

enum class ActMode { Sample, Greedy };

struct ActResult {
  airspace::Advisory advisory = airspace::Advisory::Hold;
  double log_prob = 0.0;
  double value = 0.0;
  std::array<double, kNumActions> probs{};
};

inline std::size_t argmax3(const double* logits) {
  return static_cast<std::size_t>(std::max_element(logits, logits + kNumActions) - logits);
}

// Action selection from precomputed logits. Sampling uses one uniform draw
// and the cumulative distribution.
template <typename Rng>
ActResult select_action(const double* logits, double value, Rng& rng, ActMode mode) {
  ActResult r;
  r.value = value;
  const double mx = *std::max_element(logits, logits + kNumActions);
  double z = 0.0;
  for (std::size_t a = 0; a < kNumActions; ++a) z += (r.probs[a] = std::exp(logits[a] - mx));
  for (auto& q : r.probs) q /= z;
  std::size_t a = 0;
  if (mode == ActMode::Greedy) {
    a = argmax3(logits);
  } else {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double c = 0.0;
    a = kNumActions - 1;
    for (std::size_t k = 0; k < kNumActions; ++k) {
      c += r.probs[k];
      if (u < c) {
        a = k;
        break;
      }
    }
  }
  r.advisory = airspace::advisory_from_index(a);
  r.log_prob = logits[a] - mx - std::log(z);
  return r;
}

template <typename Rng>
std::vector<ActResult> act_batch(const std::vector<const EgoObservation*>& batch,
                                 const PolicyParams& p, Rng& rng, ActMode mode) {
  nn::NoGradGuard guard;
  const auto out = forward_batch(batch, p);
  std::vector<ActResult> res;
  res.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    res.push_back(select_action(out.logits.data().data() + i * kNumActions, out.values[i], rng, mode));
  return res;
}

template <typename Rng>
ActResult act(const EgoObservation& obs, const PolicyParams& p, Rng& rng, ActMode mode) {
  return act_batch({&obs}, p, rng, mode).front();
}

struct ActionEvaluation {
  Tensor log_probs;  // [B]
  Tensor entropies;  // [B]
  Tensor values;     // [B]
};

inline ActionEvaluation evaluate_actions(const std::vector<const EgoObservation*>& batch,
                                         const std::vector<std::size_t>& actions,
                                         const PolicyParams& p) {
  if (actions.size() != batch.size()) throw DimensionError("one action per observation required");
  const auto out = forward_batch(batch, p);
  const Tensor logp = nn::log_softmax(out.logits);
  ActionEvaluation ev;
  ev.log_probs = nn::pick(logp, actions);
  ev.entropies = nn::scale(nn::row_sum(nn::mul(nn::softmax(out.logits), logp)), -1.0);
  ev.values = out.values;
  return ev;
}

// ---------------------------------------------------------------------------
// Checkpoints

// Metadata carries the architecture plus whatever the caller adds (feature
// scales, reward weights, seed, training progress).
inline void save_policy(const std::string& path, const PolicyParams& p,
                        nlohmann::json metadata = nlohmann::json::object(),
                        std::vector<nn::NamedTensor> extra = {}) {
  metadata["policy"] = policy_config_to_json(p.config);
  nn::Checkpoint ck;
  ck.metadata = metadata.dump();
  ck.tensors = p.named_parameters();
  for (auto& e : extra) ck.tensors.push_back(std::move(e));
  nn::save_checkpoint(path, ck);
}

struct LoadedPolicy {
  PolicyParams params;
  nlohmann::json metadata;
  nn::Checkpoint raw;
};

inline LoadedPolicy load_policy(const std::string& path) {
  LoadedPolicy out;
  out.raw = nn::load_checkpoint(path);
  try {
    out.metadata = nlohmann::json::parse(out.raw.metadata);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("checkpoint metadata is not JSON: " + std::string(e.what()));
  }
  if (!out.metadata.contains("policy")) throw IoError("checkpoint has no policy config");
  out.params = make_policy(policy_config_from_json(out.metadata.at("policy")), 0);
  assign_parameters(out.params, out.raw.tensors);
  return out;
}

}  // namespace sepassure::policy
