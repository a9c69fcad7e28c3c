// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0
//
// State-update kernels for one (sequence, head):
//
//   s_t = diag(lambda_t) s_{t-1} + k_t v_t^T,   o_t = s_t^T q_t,   s_0 = 0
//
// q, k are n x dk, v is n x dv. lambda is n x dk (vector decay) or n x 1
// (scalar decay, one value per position shared by every key dimension).
// The sequential scan is the reference semantics; the chunked kernel and the
// oracles must agree with it.

#pragma once

#include <cstddef>

#include "decaylab/tape.hpp"

namespace decaylab::recurrence {

using numerics::Tensor;
using numerics::Var;

struct ScanResult {
  Tensor output;       // n x dv
  Tensor final_state;  // dk x dv
};

ScanResult forward_sequential(const Tensor& q, const Tensor& k, const Tensor& v,
                              const Tensor& lambda);

/// O(n^2) double sum o_t = sum_{j<=t} (q_t * prod_{i=j+1..t} lambda_i) . k_j v_j.
/// Test oracle only; uses telescoped products, never 1/cumprod.
Tensor forward_oracle(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& lambda);

/// Chunkwise-parallel form: an inter-chunk state carried with cumulative decay
/// products plus a causally masked quadratic form inside each chunk.
Tensor forward_chunked(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& lambda,
                       std::size_t chunk);

/// Delta-rule member of the DPLR family:
///   s_t = (diag(lambda_t) - beta_t kappa_t kappa_t^T) s_{t-1} + k_t v_t^T
/// i.e. a_t = -beta_t kappa_t, b_t = kappa_t.
struct DplrParams {
  Tensor kappa;           // n x dk
  Tensor beta;            // n x 1, values in [0, 1]
  bool normalize = true;  // L2-normalise kappa rows; otherwise they must be unit already
};

ScanResult forward_dplr(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& lambda,
                        const DplrParams& params);

/// Oracle: builds M_t densely and multiplies.
Tensor forward_dplr_dense(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& lambda,
                          const DplrParams& params);

/// gamma_t = prod_{j<=t} lambda_j, per column.
Tensor cumulative_decay(const Tensor& lambda);

/// Differentiable sequential scan (q, k, v and lambda all receive gradients).
Var forward_sequential(Var q, Var k, Var v, Var lambda);

/// Differentiable DPLR scan. kappa rows must already be unit length.
Var forward_dplr(Var q, Var k, Var v, Var lambda, Var kappa, Var beta);

}  // namespace decaylab::recurrence
