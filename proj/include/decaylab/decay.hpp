// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Decay parameterizations for linear attention.
//
//   mamba2            lambda = sigmoid(-f - delta)^exp(A)
//   mamba2_no_a       lambda = sigmoid(-f - delta)
//   mamba2_no_delta   lambda = sigmoid(-f)^exp(A)
//   mamba2_no_a_delta lambda = sigmoid(-f)
//   gla               lambda = sigmoid(f)^(1/tau)
//   hgrn2             lambda = lb + (1 - lb) * sigmoid(f)
//   lightnet          lambda_t = exp(lse(f_{<=t-1}) - lse(f_{<=t})), lambda_1 = 0
//   tnl               lambda = exp(-8 j/h * (1 - l/L)), frozen
//   tnl_l             lambda = exp(-softplus(g)), g learnable, starts at the tnl value
//   simple            lambda = sigmoid(f + delta), delta starts at logit(p)
//   none              lambda = 1
//
// Head index j and layer index l are 1-based throughout this module.

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "decaylab/tape.hpp"

namespace decaylab::decay {

using numerics::Tensor;
using numerics::Var;

enum class Strategy {
  kMamba2,
  kMamba2NoA,
  kMamba2NoDelta,
  kMamba2NoADelta,
  kGla,
  kHgrn2,
  kLightNet,
  kTnl,
  kTnlL,
  kSimple,
  kNone,
};

enum class Granularity { kScalar, kVector };
enum class Sharing { kIndependent, kShared };

std::string_view to_string(Strategy s);
std::string_view to_string(Granularity g);
std::string_view to_string(Sharing s);
std::optional<Strategy> parse_strategy(std::string_view name);
std::optional<Granularity> parse_granularity(std::string_view name);
std::optional<Sharing> parse_sharing(std::string_view name);

/// Human-readable decay formula for summaries.
std::string_view formula(Strategy s);

/// lambda is an elementwise function of F (everything data-dependent except lightnet).
bool is_pointwise(Strategy s);
/// lambda depends on the input sequence through a projection F.
bool uses_projection(Strategy s);
bool has_log_a(Strategy s);
bool has_delta(Strategy s);

struct DecayConfig {
  Strategy strategy = Strategy::kMamba2;
  Granularity granularity = Granularity::kVector;
  Sharing sharing = Sharing::kIndependent;
  double tau = 16.0;                        // gla temperature
  std::optional<double> hgrn2_lower_bound;  // unset: l / (L + 1)
  double p = 0.99;                          // simple decay initial median
  double mamba2_a_min = 1.0;                // exp(A) log-spaced in [a_min, a_max]
  double mamba2_a_max = 16.0;
  double mamba2_base_decay = 0.9;           // sigmoid(-delta) at init

  /// Throws ConfigError on violated invariants.
  void validate() const;
};

/// Frozen tnl decay for head j of h in layer l of L.
double tnl_decay(int head, int heads, int layer, int layers);
/// Inverse sigmoid of p; DomainError unless 0 < p < 1.
double simple_decay_init(double p);
/// Lower bound used by hgrn2 in layer l of L.
double hgrn2_lower_bound(const DecayConfig& config, int layer, int layers);
/// Initial A for mamba2 head j of h.
double mamba2_init_log_a(const DecayConfig& config, int head, int heads);
/// Initial delta for mamba2 (all heads).
double mamba2_init_delta(const DecayConfig& config);
/// Initial logit g of tnl_l so that exp(-softplus(g)) matches the tnl constant.
/// A constant of exactly 1 cannot be represented; it is clamped to
/// exp(-kTnlLMinRate).
double tnl_l_init_logit(int head, int heads, int layer, int layers);
inline constexpr double kTnlLMinRate = 1e-4;

/// Projection weights producing the decay activation F per head.
/// Exactly one group is populated, selected by (granularity, sharing):
///   scalar             scalar_w[j]      d x 1
///   vector/independent down (d x d/h) and up[j] (d/h x d/h)
///   vector/shared      shared_w[j]      d x d/h
struct DecayProjection {
  std::vector<Var> scalar_w;
  std::optional<Var> down;
  std::vector<Var> up;
  std::vector<Var> shared_w;
};

/// F per head: n x 1 (scalar) or n x d/h (vector).
std::vector<Var> decay_activations(Var x, const DecayProjection& proj, const DecayConfig& config,
                                   int heads);

/// Per-head scalar inputs of the pointwise formulas, each a single element.
/// Frozen values are tape constants; learnable ones are leaves.
struct HeadScalars {
  std::optional<Var> log_a;        // mamba2 A
  std::optional<Var> delta;        // mamba2 / simple delta
  std::optional<Var> inv_tau;      // gla 1/tau
  std::optional<Var> lower_bound;  // hgrn2 lambda^j
};

/// Elementwise decay for pointwise strategies. Missing scalars the strategy
/// needs raise ConfigError; non-pointwise strategies raise ContractError.
Var pointwise_decay(Var f, Strategy strategy, const HeadScalars& scalars);

/// Cumulative-softmax decay along rows, independently per column.
Var lightnet_decay(Var f);

/// k = 1 - lambda.
Var shared_key(Var lambda);

/// Data-independent decay (tnl, tnl_l, none) as an n x 1 column.
/// `tnl_logit` is required for tnl_l.
Var constant_decay(numerics::Tape& tape, Strategy strategy, std::size_t n, int head, int heads,
                   int layer, int layers, std::optional<Var> tnl_logit = std::nullopt);

}  // namespace decaylab::decay
