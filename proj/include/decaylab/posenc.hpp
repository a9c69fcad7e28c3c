// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Relative positional encodings usable with linear attention: RoPE and LRPE
// act on per-head q/k, TPE acts once on the embedded sequence. Positions are
// 0-based row indices plus an optional start offset.

#pragma once

#include <cstddef>
#include <vector>

#include "decaylab/tape.hpp"

namespace decaylab::posenc {

using numerics::Tensor;
using numerics::Var;

struct RopeParams {
  std::size_t head_dim = 0;    // even
  double base = 10000.0;
  std::vector<double> theta;   // theta_k = base^(-2k/head_dim), k = 0..head_dim/2-1

  static RopeParams make(std::size_t head_dim, double base = 10000.0);
};

/// Rotates pair (x_{2k}, x_{2k+1}) of row t by (start + t) * theta_k.
/// `inverse` applies R^T.
Tensor rope_apply(const Tensor& x, const RopeParams& params, std::size_t start = 0,
                  bool inverse = false);
Var rope_apply(Var x, const RopeParams& params);

struct LrpeParams {
  std::vector<double> theta;  // one angle per head dimension

  static LrpeParams make(std::size_t head_dim, double base = 10000.0);
};

/// concat[x cos(t theta), x sin(t theta)], doubling the width.
Tensor lrpe_apply(const Tensor& x, const LrpeParams& params, std::size_t start = 0);
Var lrpe_apply(Var x, const LrpeParams& params);

/// Per-channel SSM kernel r_k = sum_nu a_nu b_nu lambda_nu^k with
/// lambda = sigmoid(gate_logit). All three are d x m.
struct TpeParams {
  Tensor a;
  Tensor b;
  Tensor gate_logit;

  std::size_t states() const { return a.cols(); }
};

/// o_{t,c} = sum_{s<=t} r_{t-s,c} x_{s,c}, evaluated as an m-state linear
/// recurrence per channel.
Tensor tpe_apply(const Tensor& x, const TpeParams& params);
Var tpe_apply(Var x, Var a, Var b, Var gate_logit);

/// Runs (i) the decayed recurrence on RoPE-rotated q, k and (ii) the relative
/// closed form o_t = q_t^T sum_j (gamma_t / gamma_j) R_t^T R_j k_j v_j^T, where
/// R_t^T R_j is a single rotation by (j - t) theta, and
/// returns the largest absolute difference. lambda is n x 1 (scalar decay) or
/// n x d/h with equal entries inside each rotation pair; anything else is a
/// ContractError.
double rope_decay_equivalence(const Tensor& q, const Tensor& k, const Tensor& v,
                              const Tensor& lambda, const RopeParams& params);

}  // namespace decaylab::posenc
