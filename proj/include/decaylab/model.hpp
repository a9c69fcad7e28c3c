// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Decay Linear Transformer. Each block is
//
//   x = x + TokenMixer(RMSNorm(x))
//   x = x + GLU(RMSNorm(x))
//
// and the token mixer, per head j, computes
//
//   q = silu(x Wq_j), k = silu(x Wk_j) or 1 - lambda, v = x Wv_j
//   o_j = recurrence(q, k, v, lambda_j)
//   out = RMSNorm(concat(o_1..o_h) * sigmoid(x Wu1 Wu2))
//
// Parameter names are stable; checkpoints and the optimizer key on them.
// Layer and head indices inside names are 0-based.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "decaylab/decay.hpp"
#include "decaylab/tape.hpp"

namespace decaylab::model {

using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

enum class PosEnc { kNone, kRope, kLrpe, kTpe };
enum class Transition { kDiagonal, kDplr };

std::string_view to_string(PosEnc p);
std::string_view to_string(Transition t);
std::optional<PosEnc> parse_posenc(std::string_view name);
std::optional<Transition> parse_transition(std::string_view name);

struct ModelConfig {
  int layers = 2;
  int hidden = 64;
  int heads = 4;
  int value_dim = 0;  // 0 means hidden; any other value must equal hidden
  int vocab = 256;
  decay::DecayConfig decay;
  PosEnc posenc = PosEnc::kNone;
  Transition transition = Transition::kDiagonal;
  bool tie_embeddings = false;
  std::uint64_t seed = 0;
  double glu_ratio = 2.0;
  double rope_base = 10000.0;
  int tpe_states = 4;
  double norm_eps = 1e-6;
  double init_std = 0.02;

  std::size_t head_dim() const { return static_cast<std::size_t>(hidden / heads); }
  std::size_t glu_hidden() const;
  int value_width() const { return value_dim == 0 ? hidden : value_dim; }
  /// Throws ConfigError naming the offending field.
  void validate() const;
};

struct Parameter {
  std::string name;
  Tensor value;
  bool weight_decay = true;

  bool operator==(const Parameter&) const = default;
};

/// Ordered, name-addressable parameter collection.
class ParameterSet {
 public:
  Parameter& add(std::string name, Tensor value, bool weight_decay);
  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);
  std::size_t index_of(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t element_count() const;
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }

  bool operator==(const ParameterSet& other) const { return params_ == other.params_; }

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Draws every parameter in a fixed order from one mt19937_64 stream:
/// matrices ~ Normal(0, init_std^2) truncated at 2 sigma, norm gains 1,
/// decay scalars from the decay module's init rules.
ParameterSet init_params(const ModelConfig& config, std::uint64_t seed);

/// Closed-form parameter counts.
///   q, v            h * d * d/h each
///   k               h * d * d/h, absent under sharing
///   decay weights   scalar: h*d; vector/independent: d*d/h + h*(d/h)^2;
///                   vector/shared: h*d*d/h; none for tnl, tnl_l, none
///   decay scalars   one per head for each of A, delta, tnl_l logit in use
///   gate            d*d/h + d/h*d
///   norms           3d per layer (pre-mixer, pre-GLU, mixer output) + d final
///   GLU             3 * d * r d
///   DPLR            h * (d*d/h + d)
///   embedding       V*d, plus d*V for an untied head; TPE adds 3*d*m
struct ParameterCount {
  std::size_t embedding = 0;
  std::size_t lm_head = 0;
  std::size_t tpe = 0;
  std::size_t final_norm = 0;
  std::size_t query_value = 0;    // all layers
  std::size_t key = 0;            // all layers
  std::size_t decay_weights = 0;  // all layers
  std::size_t decay_scalars = 0;  // all layers
  std::size_t gate = 0;
  std::size_t norms = 0;
  std::size_t glu = 0;
  std::size_t dplr = 0;

  std::size_t total() const;
};

ParameterCount parameter_count_formula(const ModelConfig& config);

/// Binds a ParameterSet onto a tape, one node per parameter.
class BoundParams {
 public:
  /// `trainable` creates leaves (gradients kept); otherwise constants.
  BoundParams(Tape& tape, const ParameterSet& params, bool trainable);
  /// Uses existing nodes, one per parameter in ParameterSet order.
  BoundParams(const ParameterSet& params, std::vector<Var> vars);

  Var operator[](std::string_view name) const;
  std::optional<Var> find(std::string_view name) const;
  /// Same order as the ParameterSet.
  const std::vector<Var>& vars() const { return vars_; }
  Tape& tape() const { return *tape_; }

 private:
  Tape* tape_;
  const ParameterSet* params_;
  std::vector<Var> vars_;
};

/// lambda exactly as fed to the recurrence for one (layer, head); layer and
/// head are 1-based. n x 1 for scalar decay, n x d/h for vector decay.
struct LambdaRecord {
  int layer = 0;
  int head = 0;
  Tensor lambda;
};
using LambdaTrace = std::vector<LambdaRecord>;

/// `layer` is 0-based. x is n x d.
Var token_mixer_forward(Var x, const BoundParams& params, const ModelConfig& config, int layer,
                        LambdaTrace* trace = nullptr);

/// wo(sigmoid(x wg) * (x wu)).
Var glu_forward(Var x, Var wg, Var wu, Var wo);

/// Logits n x V.
Var lm_forward(std::span<const int> tokens, const BoundParams& params, const ModelConfig& config,
               LambdaTrace* trace = nullptr);

/// Gradient-free convenience wrapper around lm_forward.
Tensor logits(const ModelConfig& config, const ParameterSet& params, std::span<const int> tokens,
              LambdaTrace* trace = nullptr);

/// Name helpers shared with tests and tools.
std::string layer_param(int layer, std::string_view name);
std::string head_param(int layer, std::string_view name, int head);

}  // namespace decaylab::model
