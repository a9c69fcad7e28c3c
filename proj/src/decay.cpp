// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0

#include "decaylab/decay.hpp"

#include <array>
#include <cmath>
#include <string>
#include <utility>

#include "decaylab/errors.hpp"

namespace decaylab::decay {

namespace {

struct StrategyName {
  Strategy strategy;
  std::string_view name;
};

constexpr std::array kStrategyNames = {
    StrategyName{Strategy::kMamba2, "mamba2"},
    StrategyName{Strategy::kMamba2NoA, "mamba2_no_a"},
    StrategyName{Strategy::kMamba2NoDelta, "mamba2_no_delta"},
    StrategyName{Strategy::kMamba2NoADelta, "mamba2_no_a_delta"},
    StrategyName{Strategy::kGla, "gla"},
    StrategyName{Strategy::kHgrn2, "hgrn2"},
    StrategyName{Strategy::kLightNet, "lightnet"},
    StrategyName{Strategy::kTnl, "tnl"},
    StrategyName{Strategy::kTnlL, "tnl_l"},
    StrategyName{Strategy::kSimple, "simple"},
    StrategyName{Strategy::kNone, "none"},
};

double logaddexp(double a, double b) {
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

Var require(const std::optional<Var>& v, const char* what, Strategy s) {
  if (!v) {
    throw ConfigError(std::string("pointwise_decay: strategy '") + std::string(to_string(s)) +
                      "' needs " + what);
  }
  return *v;
}

}  // namespace

std::string_view to_string(Strategy s) {
  for (const auto& entry : kStrategyNames) {
    if (entry.strategy == s) return entry.name;
  }
  return "unknown";
}

std::string_view to_string(Granularity g) {
  return g == Granularity::kScalar ? "scalar" : "vector";
}

std::string_view to_string(Sharing s) {
  return s == Sharing::kShared ? "shared" : "independent";
}

std::optional<Strategy> parse_strategy(std::string_view name) {
  for (const auto& entry : kStrategyNames) {
    if (entry.name == name) return entry.strategy;
  }
  return std::nullopt;
}

std::optional<Granularity> parse_granularity(std::string_view name) {
  if (name == "scalar") return Granularity::kScalar;
  if (name == "vector") return Granularity::kVector;
  return std::nullopt;
}

std::optional<Sharing> parse_sharing(std::string_view name) {
  if (name == "independent") return Sharing::kIndependent;
  if (name == "shared") return Sharing::kShared;
  return std::nullopt;
}

std::string_view formula(Strategy s) {
  switch (s) {
    case Strategy::kMamba2: return "sigmoid(-f - delta)^exp(A)";
    case Strategy::kMamba2NoA: return "sigmoid(-f - delta)";
    case Strategy::kMamba2NoDelta: return "sigmoid(-f)^exp(A)";
    case Strategy::kMamba2NoADelta: return "sigmoid(-f)";
    case Strategy::kGla: return "sigmoid(f)^(1/tau)";
    case Strategy::kHgrn2: return "lb + (1 - lb) * sigmoid(f)";
    case Strategy::kLightNet: return "exp(lse(f[<t-1]) - lse(f[<t]))";
    case Strategy::kTnl: return "exp(-8j/h * (1 - l/L))";
    case Strategy::kTnlL: return "exp(-softplus(g)), g from tnl";
    case Strategy::kSimple: return "sigmoid(f + delta), delta = logit(p)";
    case Strategy::kNone: return "1";
  }
  return "?";
}

bool is_pointwise(Strategy s) {
  switch (s) {
    case Strategy::kMamba2:
    case Strategy::kMamba2NoA:
    case Strategy::kMamba2NoDelta:
    case Strategy::kMamba2NoADelta:
    case Strategy::kGla:
    case Strategy::kHgrn2:
    case Strategy::kSimple:
      return true;
    default:
      return false;
  }
}

bool uses_projection(Strategy s) { return is_pointwise(s) || s == Strategy::kLightNet; }

bool has_log_a(Strategy s) { return s == Strategy::kMamba2 || s == Strategy::kMamba2NoDelta; }

bool has_delta(Strategy s) {
  return s == Strategy::kMamba2 || s == Strategy::kMamba2NoA || s == Strategy::kSimple;
}

void DecayConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("decay: tau must be positive");
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("decay: p must lie in (0, 1)");
  if (hgrn2_lower_bound && !(*hgrn2_lower_bound >= 0.0 && *hgrn2_lower_bound < 1.0)) {
    throw ConfigError("decay: hgrn2_lower_bound must lie in [0, 1)");
  }
  if (!(mamba2_a_min > 0.0 && mamba2_a_max >= mamba2_a_min)) {
    throw ConfigError("decay: need 0 < mamba2_a_min <= mamba2_a_max");
  }
  if (!(mamba2_base_decay > 0.0 && mamba2_base_decay < 1.0)) {
    throw ConfigError("decay: mamba2_base_decay must lie in (0, 1)");
  }
  const bool data_independent =
      strategy == Strategy::kTnl || strategy == Strategy::kTnlL || strategy == Strategy::kNone;
  if ((strategy == Strategy::kTnl || strategy == Strategy::kTnlL) &&
      granularity != Granularity::kScalar) {
    throw ConfigError("decay: strategy '" + std::string(to_string(strategy)) +
                      "' is scalar-only (granularity must be scalar)");
  }
  if (sharing == Sharing::kShared) {
    if (data_independent) {
      throw ConfigError("decay: strategy '" + std::string(to_string(strategy)) +
                        "' cannot share parameters with the key");
    }
    if (granularity != Granularity::kVector) {
      throw ConfigError("decay: parameter sharing (k = 1 - lambda) requires vector granularity");
    }
  }
}

double tnl_decay(int head, int heads, int layer, int layers) {
  if (heads < 1 || layers < 1 || head < 1 || head > heads || layer < 1 || layer > layers) {
    throw DomainError("tnl_decay: index out of range (head " + std::to_string(head) + "/" +
                      std::to_string(heads) + ", layer " + std::to_string(layer) + "/" +
                      std::to_string(layers) + ")");
  }
  const double rate = 8.0 * head / heads * (1.0 - static_cast<double>(layer) / layers);
  return std::exp(-rate);
}

double simple_decay_init(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("simple_decay_init: p = " + std::to_string(p) + " is outside (0, 1)");
  }
  return std::log(p / (1.0 - p));
}

double hgrn2_lower_bound(const DecayConfig& config, int layer, int layers) {
  if (config.hgrn2_lower_bound) return *config.hgrn2_lower_bound;
  return static_cast<double>(layer) / (layers + 1);
}

double mamba2_init_log_a(const DecayConfig& config, int head, int heads) {
  if (heads <= 1) return std::log(config.mamba2_a_min);
  const double frac = static_cast<double>(head - 1) / (heads - 1);
  const double log_min = std::log(config.mamba2_a_min);
  const double log_max = std::log(config.mamba2_a_max);
  return log_min + frac * (log_max - log_min);
}

double mamba2_init_delta(const DecayConfig& config) {
  // sigmoid(-delta) = base  <=>  delta = -logit(base)
  return -simple_decay_init(config.mamba2_base_decay);
}

double tnl_l_init_logit(int head, int heads, int layer, int layers) {
  const double rate = std::max(-std::log(tnl_decay(head, heads, layer, layers)), kTnlLMinRate);
  // softplus(g) = rate  <=>  g = log(exp(rate) - 1)
  return std::log(std::expm1(rate));
}

std::vector<Var> decay_activations(Var x, const DecayProjection& proj, const DecayConfig& config,
                                   int heads) {
  const auto h = static_cast<std::size_t>(heads);
  const bool has_scalar = !proj.scalar_w.empty();
  const bool has_indep = proj.down.has_value() || !proj.up.empty();
  const bool has_shared = !proj.shared_w.empty();
  std::vector<Var> out;
  if (!uses_projection(config.strategy)) {
    if (has_scalar || has_indep || has_shared) {
      throw ConfigError("decay_activations: strategy '" + std::string(to_string(config.strategy)) +
                        "' takes no projection weights");
    }
    return out;
  }
  if (config.granularity == Granularity::kScalar) {
    if (has_indep || has_shared || proj.scalar_w.size() != h) {
      throw ConfigError("decay_activations: scalar granularity needs exactly one d x 1 weight per head");
    }
    for (const Var& w : proj.scalar_w) out.push_back(numerics::matmul(x, w));
  } else if (config.sharing == Sharing::kIndependent) {
    if (has_scalar || has_shared || !proj.down || proj.up.size() != h) {
      throw ConfigError("decay_activations: independent vector decay needs W_down and one W_up per head");
    }
    const Var low = numerics::matmul(x, *proj.down);
    for (const Var& w : proj.up) out.push_back(numerics::matmul(low, w));
  } else {
    if (has_scalar || has_indep || proj.shared_w.size() != h) {
      throw ConfigError("decay_activations: shared vector decay needs one d x d/h weight per head");
    }
    for (const Var& w : proj.shared_w) out.push_back(numerics::matmul(x, w));
  }
  return out;
}

Var pointwise_decay(Var f, Strategy strategy, const HeadScalars& s) {
  using namespace numerics;
  switch (strategy) {
    case Strategy::kMamba2: {
      const Var z = shift_by(scale(f, -1.0), scale(require(s.delta, "delta", strategy), -1.0));
      return exp(scale_by(log_sigmoid(z), exp(require(s.log_a, "A", strategy))));
    }
    case Strategy::kMamba2NoA: {
      const Var z = shift_by(scale(f, -1.0), scale(require(s.delta, "delta", strategy), -1.0));
      return sigmoid(z);
    }
    case Strategy::kMamba2NoDelta:
      return exp(scale_by(log_sigmoid(scale(f, -1.0)), exp(require(s.log_a, "A", strategy))));
    case Strategy::kMamba2NoADelta:
      return sigmoid(scale(f, -1.0));
    case Strategy::kGla:
      return exp(scale_by(log_sigmoid(f), require(s.inv_tau, "1/tau", strategy)));
    case Strategy::kHgrn2: {
      const Var lb = require(s.lower_bound, "a lower bound", strategy);
      return shift_by(scale_by(sigmoid(f), one_minus(lb)), lb);
    }
    case Strategy::kSimple:
      return sigmoid(shift_by(f, require(s.delta, "delta", strategy)));
    default:
      throw ContractError("pointwise_decay: strategy '" + std::string(to_string(strategy)) +
                          "' is not pointwise");
  }
}

Var lightnet_decay(Var f) {
  const Tensor& fv = f.value();
  const std::size_t n = fv.rows(), c = fv.cols();
  Tensor lambda({n, c});
  Tensor running({n, c});  // running logsumexp of f over rows <= t
  for (std::size_t j = 0; j < c; ++j) {
    running[j] = fv[j];
    lambda[j] = 0.0;  // empty prefix
    for (std::size_t t = 1; t < n; ++t) {
      const double prev = running[(t - 1) * c + j];
      const double cur = logaddexp(prev, fv[t * c + j]);
      running[t * c + j] = cur;
      lambda[t * c + j] = std::exp(prev - cur);
    }
  }
  numerics::Tape* tape = &f.tape();
  const std::size_t fid = f.id();
  const std::size_t self = tape->size();
  const Var inputs[] = {f};
  return tape->record(
      numerics::OpKind::kLightNetDecay, std::move(lambda), inputs,
      [tape, fid, self, n, c, running = std::move(running)](const Tensor& g,
                                                            std::span<Tensor* const> gin) {
        const Tensor& fv = tape->value(fid);
        const Tensor& lam = tape->value(self);
        // With w_i = exp(f_i - m_i) and c_t = g_t * lambda_t:
        //   dL/df_i = w_i * (R_i - Q_i)
        //   Q_i = c_i + lambda_{i+1} Q_{i+1},  R_i = c_{i+1} + lambda_{i+1} R_{i+1}
        for (std::size_t j = 0; j < c; ++j) {
          double q = 0.0, r = 0.0;
          for (std::size_t i = n; i-- > 0;) {
            if (i + 1 < n) {
              const double next_lambda = lam[(i + 1) * c + j];
              const double next_c = g[(i + 1) * c + j] * next_lambda;
              r = next_c + next_lambda * r;
              q = q * next_lambda;
            }
            q += g[i * c + j] * lam[i * c + j];
            const double w = std::exp(fv[i * c + j] - running[i * c + j]);
            (*gin[0])[i * c + j] += w * (r - q);
          }
        }
      });
}

Var shared_key(Var lambda) { return numerics::one_minus(lambda); }

Var constant_decay(numerics::Tape& tape, Strategy strategy, std::size_t n, int head, int heads,
                   int layer, int layers, std::optional<Var> tnl_logit) {
  switch (strategy) {
    case Strategy::kTnl:
      return tape.constant(Tensor({n, 1}, tnl_decay(head, heads, layer, layers)));
    case Strategy::kTnlL: {
      if (!tnl_logit) throw ConfigError("constant_decay: tnl_l needs its learnable logit");
      const Var lambda = numerics::exp(numerics::scale(numerics::softplus(*tnl_logit), -1.0));
      return numerics::broadcast(lambda, n, 1);
    }
    case Strategy::kNone:
      return tape.constant(Tensor({n, 1}, 1.0));
    default:
      throw ContractError("constant_decay: strategy '" + std::string(to_string(strategy)) +
                          "' is data-dependent");
  }
}

}  // namespace decaylab::decay
