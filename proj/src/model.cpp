// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0

#include "decaylab/model.hpp"

#include <cmath>
#include <random>
#include <string>

#include "decaylab/errors.hpp"
#include "decaylab/posenc.hpp"
#include "decaylab/recurrence.hpp"

namespace decaylab::model {

using decay::Strategy;

std::string_view to_string(PosEnc p) {
  switch (p) {
    case PosEnc::kNone: return "none";
    case PosEnc::kRope: return "rope";
    case PosEnc::kLrpe: return "lrpe";
    case PosEnc::kTpe: return "tpe";
  }
  return "unknown";
}

std::string_view to_string(Transition t) {
  return t == Transition::kDiagonal ? "diagonal" : "dplr";
}

std::optional<PosEnc> parse_posenc(std::string_view name) {
  for (PosEnc p : {PosEnc::kNone, PosEnc::kRope, PosEnc::kLrpe, PosEnc::kTpe}) {
    if (to_string(p) == name) return p;
  }
  return std::nullopt;
}

std::optional<Transition> parse_transition(std::string_view name) {
  if (name == "diagonal") return Transition::kDiagonal;
  if (name == "dplr") return Transition::kDplr;
  return std::nullopt;
}

std::size_t ModelConfig::glu_hidden() const {
  return static_cast<std::size_t>(std::llround(glu_ratio * hidden));
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (layers < 1) fail("layers must be >= 1, got " + std::to_string(layers));
  if (hidden < 1) fail("hidden must be >= 1, got " + std::to_string(hidden));
  if (heads < 1) fail("heads must be >= 1, got " + std::to_string(heads));
  if (hidden % heads != 0) {
    fail("hidden " + std::to_string(hidden) + " is not divisible by heads " + std::to_string(heads));
  }
  if (value_width() % heads != 0) {
    fail("value_dim " + std::to_string(value_width()) + " is not divisible by heads " +
         std::to_string(heads));
  }
  // The output gate is n x d and multiplies the concatenated n x e heads.
  if (value_width() != hidden) {
    fail("value_dim must equal hidden (" + std::to_string(hidden) + "), got " +
         std::to_string(value_width()));
  }
  if (vocab < 2) fail("vocab must be >= 2, got " + std::to_string(vocab));
  if (!(glu_ratio > 0.0) || glu_hidden() < 1) fail("glu_ratio must give at least one GLU unit");
  if (!(norm_eps >= 0.0)) fail("norm_eps must be >= 0");
  if (!(init_std > 0.0)) fail("init_std must be > 0");
  if (!(rope_base > 1.0)) fail("rope_base must be > 1");
  if (posenc == PosEnc::kTpe && tpe_states < 1) fail("tpe_states must be >= 1");
  if (posenc == PosEnc::kRope && head_dim() % 2 != 0) {
    fail("rope needs an even head dimension, got " + std::to_string(head_dim()));
  }
  if (posenc == PosEnc::kLrpe && transition == Transition::kDplr) {
    fail("lrpe doubles the key width and cannot be combined with the dplr transition");
  }
  decay.validate();
}

// ---- parameters ------------------------------------------------------------

Parameter& ParameterSet::add(std::string name, Tensor value, bool weight_decay) {
  if (index_.contains(name)) throw ContractError("ParameterSet: duplicate parameter '" + name + "'");
  index_.emplace(name, params_.size());
  params_.push_back({std::move(name), std::move(value), weight_decay});
  return params_.back();
}

bool ParameterSet::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

std::size_t ParameterSet::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ContractError("ParameterSet: no parameter '" + std::string(name) + "'");
  return it->second;
}

const Tensor& ParameterSet::at(std::string_view name) const { return params_[index_of(name)].value; }
Tensor& ParameterSet::at(std::string_view name) { return params_[index_of(name)].value; }

std::size_t ParameterSet::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::string layer_param(int layer, std::string_view name) {
  return "layers." + std::to_string(layer) + "." + std::string(name);
}

std::string head_param(int layer, std::string_view name, int head) {
  return layer_param(layer, name) + "." + std::to_string(head);
}

namespace {

class Initializer {
 public:
  Initializer(std::uint64_t seed, double std) : rng_(seed), std_(std) {}

  Tensor normal(std::size_t rows, std::size_t cols) { return normal(rows, cols, std_); }

  // Rejection sampling keeps the draw count data-dependent but seed-determined.
  Tensor normal(std::size_t rows, std::size_t cols, double std) {
    Tensor t({rows, cols});
    for (double& x : t.storage()) {
      double z = unit_(rng_);
      while (std::abs(z) > 2.0) z = unit_(rng_);
      x = z * std;
    }
    return t;
  }

  Tensor uniform(std::size_t rows, std::size_t cols, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t({rows, cols});
    for (double& x : t.storage()) x = dist(rng_);
    return t;
  }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> unit_{0.0, 1.0};
  double std_;
};

Tensor ones(std::size_t n) { return Tensor({n}, 1.0); }

}  // namespace

ParameterSet init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t d = static_cast<std::size_t>(config.hidden);
  const std::size_t dh = config.head_dim();
  const std::size_t vocab = static_cast<std::size_t>(config.vocab);
  const std::size_t r = config.glu_hidden();
  const int h = config.heads;
  const auto& dc = config.decay;
  const Strategy s = dc.strategy;
  Initializer init(seed, config.init_std);
  ParameterSet ps;

  ps.add("embed", init.normal(vocab, d), true);
  if (!config.tie_embeddings) ps.add("head", init.normal(d, vocab), true);
  ps.add("final_norm", ones(d), false);
  if (config.posenc == PosEnc::kTpe) {
    const auto m = static_cast<std::size_t>(config.tpe_states);
    // Normal(0, 1/sqrt(m)) read as a variance.
    const double std = std::pow(static_cast<double>(m), -0.25);
    ps.add("tpe.a", init.normal(d, m, std), false);
    ps.add("tpe.b", init.normal(d, m, std), false);
    ps.add("tpe.gate", init.uniform(d, m, 1.0, 3.0), false);
  }

  const bool shared = dc.granularity == decay::Granularity::kVector &&
                      dc.sharing == decay::Sharing::kShared;
  for (int l = 0; l < config.layers; ++l) {
    ps.add(layer_param(l, "norm1"), ones(d), false);
    for (int j = 0; j < h; ++j) {
      ps.add(head_param(l, "attn.wq", j), init.normal(d, dh), true);
      if (!shared) ps.add(head_param(l, "attn.wk", j), init.normal(d, dh), true);
      ps.add(head_param(l, "attn.wv", j), init.normal(d, dh), true);
    }
    if (decay::uses_projection(s)) {
      if (dc.granularity == decay::Granularity::kScalar) {
        for (int j = 0; j < h; ++j) ps.add(head_param(l, "attn.wd1", j), init.normal(d, 1), true);
      } else if (!shared) {
        ps.add(layer_param(l, "attn.wd2"), init.normal(d, dh), true);
        for (int j = 0; j < h; ++j) ps.add(head_param(l, "attn.wd3", j), init.normal(dh, dh), true);
      } else {
        for (int j = 0; j < h; ++j) ps.add(head_param(l, "attn.wd4", j), init.normal(d, dh), true);
      }
    }
    for (int j = 0; j < h; ++j) {
      if (decay::has_log_a(s)) {
        ps.add(head_param(l, "attn.log_a", j), Tensor::scalar(decay::mamba2_init_log_a(dc, j + 1, h)),
               false);
      }
      if (decay::has_delta(s)) {
        const double delta =
            s == Strategy::kSimple ? decay::simple_decay_init(dc.p) : decay::mamba2_init_delta(dc);
        ps.add(head_param(l, "attn.delta", j), Tensor::scalar(delta), false);
      }
      if (s == Strategy::kTnlL) {
        ps.add(head_param(l, "attn.tnl_g", j),
               Tensor::scalar(decay::tnl_l_init_logit(j + 1, h, l + 1, config.layers)), false);
      }
    }
    if (config.transition == Transition::kDplr) {
      for (int j = 0; j < h; ++j) {
        ps.add(head_param(l, "attn.wkappa", j), init.normal(d, dh), true);
        ps.add(head_param(l, "attn.wbeta", j), init.normal(d, 1), true);
      }
    }
    ps.add(layer_param(l, "attn.wu1"), init.normal(d, dh), true);
    ps.add(layer_param(l, "attn.wu2"), init.normal(dh, d), true);
    ps.add(layer_param(l, "attn.out_norm"), ones(d), false);
    ps.add(layer_param(l, "norm2"), ones(d), false);
    ps.add(layer_param(l, "mlp.wg"), init.normal(d, r), true);
    ps.add(layer_param(l, "mlp.wu"), init.normal(d, r), true);
    ps.add(layer_param(l, "mlp.wo"), init.normal(r, d), true);
  }
  return ps;
}

std::size_t ParameterCount::total() const {
  return embedding + lm_head + tpe + final_norm + query_value + key + decay_weights +
         decay_scalars + gate + norms + glu + dplr;
}

ParameterCount parameter_count_formula(const ModelConfig& config) {
  const std::size_t d = static_cast<std::size_t>(config.hidden);
  const std::size_t h = static_cast<std::size_t>(config.heads);
  const std::size_t dh = d / h;
  const std::size_t L = static_cast<std::size_t>(config.layers);
  const std::size_t V = static_cast<std::size_t>(config.vocab);
  const auto& dc = config.decay;
  const bool shared = dc.granularity == decay::Granularity::kVector &&
                      dc.sharing == decay::Sharing::kShared;

  ParameterCount c;
  c.embedding = V * d;
  c.lm_head = config.tie_embeddings ? 0 : d * V;
  c.tpe = config.posenc == PosEnc::kTpe ? 3 * d * static_cast<std::size_t>(config.tpe_states) : 0;
  c.final_norm = d;
  c.query_value = L * 2 * h * d * dh;
  c.key = shared ? 0 : L * h * d * dh;
  if (decay::uses_projection(dc.strategy)) {
    std::size_t per_layer = 0;
    if (dc.granularity == decay::Granularity::kScalar) {
      per_layer = h * d;
    } else if (!shared) {
      per_layer = d * dh + h * dh * dh;
    } else {
      per_layer = h * d * dh;
    }
    c.decay_weights = L * per_layer;
  }
  std::size_t scalars = 0;
  if (decay::has_log_a(dc.strategy)) ++scalars;
  if (decay::has_delta(dc.strategy)) ++scalars;
  if (dc.strategy == Strategy::kTnlL) ++scalars;
  c.decay_scalars = L * h * scalars;
  c.gate = L * 2 * d * dh;
  c.norms = L * 3 * d;
  c.glu = L * 3 * d * config.glu_hidden();
  c.dplr = config.transition == Transition::kDplr ? L * h * (d * dh + d) : 0;
  return c;
}

BoundParams::BoundParams(Tape& tape, const ParameterSet& params, bool trainable)
    : tape_(&tape), params_(&params) {
  vars_.reserve(params.size());
  for (const auto& p : params) vars_.push_back(trainable ? tape.leaf(p.value) : tape.constant(p.value));
}

BoundParams::BoundParams(const ParameterSet& params, std::vector<Var> vars)
    : tape_(nullptr), params_(&params), vars_(std::move(vars)) {
  if (vars_.size() != params.size()) {
    throw DimensionError("BoundParams: " + std::to_string(vars_.size()) + " nodes for " +
                         std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    if (vars_[i].shape() != params[i].value.shape()) {
      throw DimensionError("BoundParams: node for '" + params[i].name + "' has the wrong shape");
    }
  }
  if (!vars_.empty()) tape_ = &vars_.front().tape();
}

Var BoundParams::operator[](std::string_view name) const { return vars_[params_->index_of(name)]; }

std::optional<Var> BoundParams::find(std::string_view name) const {
  if (!params_->contains(name)) return std::nullopt;
  return (*this)[name];
}

// ---- forward ---------------------------------------------------------------

Var token_mixer_forward(Var x, const BoundParams& params, const ModelConfig& config, int layer,
                        LambdaTrace* trace) {
  using namespace numerics;
  const std::size_t n = x.rows();
  const std::size_t d = static_cast<std::size_t>(config.hidden);
  if (x.cols() != d) {
    throw DimensionError("token_mixer_forward: input " + x.value().shape_string() + " has width " +
                         std::to_string(x.cols()) + ", hidden is " + std::to_string(d));
  }
  if (layer < 0 || layer >= config.layers) {
    throw DimensionError("token_mixer_forward: layer " + std::to_string(layer) + " out of range");
  }
  const int h = config.heads;
  const auto& dc = config.decay;
  const Strategy s = dc.strategy;
  const bool shared = dc.granularity == decay::Granularity::kVector &&
                      dc.sharing == decay::Sharing::kShared;
  Tape& tape = x.tape();

  decay::DecayProjection proj;
  if (decay::uses_projection(s)) {
    for (int j = 0; j < h; ++j) {
      if (auto w = params.find(head_param(layer, "attn.wd1", j))) proj.scalar_w.push_back(*w);
      if (auto w = params.find(head_param(layer, "attn.wd3", j))) proj.up.push_back(*w);
      if (auto w = params.find(head_param(layer, "attn.wd4", j))) proj.shared_w.push_back(*w);
    }
    proj.down = params.find(layer_param(layer, "attn.wd2"));
  }
  const std::vector<Var> f = decay::decay_activations(x, proj, dc, h);

  std::optional<posenc::RopeParams> rope;
  std::optional<posenc::LrpeParams> lrpe;
  if (config.posenc == PosEnc::kRope) rope = posenc::RopeParams::make(config.head_dim(), config.rope_base);
  if (config.posenc == PosEnc::kLrpe) lrpe = posenc::LrpeParams::make(config.head_dim(), config.rope_base);

  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(h));
  for (int j = 0; j < h; ++j) {
    Var lambda;
    if (decay::is_pointwise(s)) {
      decay::HeadScalars hs;
      hs.log_a = params.find(head_param(layer, "attn.log_a", j));
      hs.delta = params.find(head_param(layer, "attn.delta", j));
      if (s == Strategy::kGla) hs.inv_tau = tape.constant(Tensor::scalar(1.0 / dc.tau));
      if (s == Strategy::kHgrn2) {
        hs.lower_bound =
            tape.constant(Tensor::scalar(decay::hgrn2_lower_bound(dc, layer + 1, config.layers)));
      }
      lambda = decay::pointwise_decay(f[static_cast<std::size_t>(j)], s, hs);
    } else if (s == Strategy::kLightNet) {
      lambda = decay::lightnet_decay(f[static_cast<std::size_t>(j)]);
    } else {
      lambda = decay::constant_decay(tape, s, n, j + 1, h, layer + 1, config.layers,
                                     params.find(head_param(layer, "attn.tnl_g", j)));
    }
    if (trace) trace->push_back({layer + 1, j + 1, lambda.value()});

    Var q = silu(matmul(x, params[head_param(layer, "attn.wq", j)]));
    Var k = shared ? decay::shared_key(lambda) : silu(matmul(x, params[head_param(layer, "attn.wk", j)]));
    const Var v = matmul(x, params[head_param(layer, "attn.wv", j)]);
    if (rope) {
      q = posenc::rope_apply(q, *rope);
      k = posenc::rope_apply(k, *rope);
    } else if (lrpe) {
      q = posenc::lrpe_apply(q, *lrpe);
      k = posenc::lrpe_apply(k, *lrpe);
      // Both halves of the doubled key decay together.
      if (lambda.cols() != 1) {
        const Var halves[] = {lambda, lambda};
        lambda = concat_cols(halves);
      }
    }
    if (config.transition == Transition::kDplr) {
      const Var kappa = l2_normalize_rows(matmul(x, params[head_param(layer, "attn.wkappa", j)]));
      const Var beta = sigmoid(matmul(x, params[head_param(layer, "attn.wbeta", j)]));
      heads.push_back(recurrence::forward_dplr(q, k, v, lambda, kappa, beta));
    } else {
      heads.push_back(recurrence::forward_sequential(q, k, v, lambda));
    }
  }
  const Var gate =
      sigmoid(matmul(matmul(x, params[layer_param(layer, "attn.wu1")]), params[layer_param(layer, "attn.wu2")]));
  return rmsnorm(mul(concat_cols(heads), gate), params[layer_param(layer, "attn.out_norm")],
                 config.norm_eps);
}

Var glu_forward(Var x, Var wg, Var wu, Var wo) {
  using namespace numerics;
  return matmul(mul(sigmoid(matmul(x, wg)), matmul(x, wu)), wo);
}

Var lm_forward(std::span<const int> tokens, const BoundParams& params, const ModelConfig& config,
               LambdaTrace* trace) {
  using namespace numerics;
  if (tokens.empty()) throw DimensionError("lm_forward: empty token sequence");
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || tokens[i] >= config.vocab) {
      throw DomainError("lm_forward: token " + std::to_string(tokens[i]) + " at position " +
                        std::to_string(i) + " is outside [0, " + std::to_string(config.vocab) + ")");
    }
  }
  const Var embed = params["embed"];
  Var x = gather_rows(embed, tokens);
  if (config.posenc == PosEnc::kTpe) {
    x = add(x, posenc::tpe_apply(x, params["tpe.a"], params["tpe.b"], params["tpe.gate"]));
  }
  for (int l = 0; l < config.layers; ++l) {
    const Var mixed = token_mixer_forward(
        rmsnorm(x, params[layer_param(l, "norm1")], config.norm_eps), params, config, l, trace);
    x = add(x, mixed);
    const Var normed = rmsnorm(x, params[layer_param(l, "norm2")], config.norm_eps);
    x = add(x, glu_forward(normed, params[layer_param(l, "mlp.wg")], params[layer_param(l, "mlp.wu")],
                           params[layer_param(l, "mlp.wo")]));
  }
  x = rmsnorm(x, params["final_norm"], config.norm_eps);
  return matmul(x, config.tie_embeddings ? transpose(embed) : params["head"]);
}

Tensor logits(const ModelConfig& config, const ParameterSet& params, std::span<const int> tokens,
              LambdaTrace* trace) {
  Tape tape;
  const BoundParams bound(tape, params, false);
  return lm_forward(tokens, bound, config, trace).value();
}

}  // namespace decaylab::model
