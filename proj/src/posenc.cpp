// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0

#include "decaylab/posenc.hpp"

#include <cmath>
#include <string>

#include "decaylab/errors.hpp"
#include "decaylab/recurrence.hpp"

namespace decaylab::posenc {

RopeParams RopeParams::make(std::size_t head_dim, double base) {
  if (head_dim == 0 || head_dim % 2 != 0) {
    throw DimensionError("rope: head dimension " + std::to_string(head_dim) + " must be even");
  }
  RopeParams p;
  p.head_dim = head_dim;
  p.base = base;
  for (std::size_t k = 0; k < head_dim / 2; ++k) {
    p.theta.push_back(std::pow(base, -2.0 * static_cast<double>(k) / static_cast<double>(head_dim)));
  }
  return p;
}

Tensor rope_apply(const Tensor& x, const RopeParams& params, std::size_t start, bool inverse) {
  const std::size_t n = x.rows(), dh = x.cols();
  if (dh % 2 != 0) throw DimensionError("rope_apply: odd head dimension " + std::to_string(dh));
  if (params.theta.size() != dh / 2) {
    throw DimensionError("rope_apply: params cover " + std::to_string(2 * params.theta.size()) +
                         " dims, input has " + std::to_string(dh));
  }
  Tensor out(x.shape());
  const double sign = inverse ? -1.0 : 1.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double pos = static_cast<double>(start + t);
    for (std::size_t k = 0; k < dh / 2; ++k) {
      const double angle = pos * params.theta[k];
      const double c = std::cos(angle), s = sign * std::sin(angle);
      const double x0 = x[t * dh + 2 * k], x1 = x[t * dh + 2 * k + 1];
      out[t * dh + 2 * k] = c * x0 - s * x1;
      out[t * dh + 2 * k + 1] = s * x0 + c * x1;
    }
  }
  return out;
}

Var rope_apply(Var x, const RopeParams& params) {
  Tensor out = rope_apply(x.value(), params);
  const Var inputs[] = {x};
  return x.tape().record(numerics::OpKind::kRope, std::move(out), inputs,
                         [params](const Tensor& g, std::span<Tensor* const> gin) {
                           numerics::add_inplace(*gin[0], rope_apply(g, params, 0, true));
                         });
}

LrpeParams LrpeParams::make(std::size_t head_dim, double base) {
  LrpeParams p;
  for (std::size_t c = 0; c < head_dim; ++c) {
    p.theta.push_back(std::pow(base, -static_cast<double>(c) / static_cast<double>(head_dim)));
  }
  return p;
}

Tensor lrpe_apply(const Tensor& x, const LrpeParams& params, std::size_t start) {
  const std::size_t n = x.rows(), dh = x.cols();
  if (params.theta.size() != dh) {
    throw DimensionError("lrpe_apply: " + std::to_string(params.theta.size()) +
                         " angles for head dimension " + std::to_string(dh));
  }
  Tensor out({n, 2 * dh});
  for (std::size_t t = 0; t < n; ++t) {
    const double pos = static_cast<double>(start + t);
    for (std::size_t c = 0; c < dh; ++c) {
      const double angle = pos * params.theta[c];
      out[t * 2 * dh + c] = x[t * dh + c] * std::cos(angle);
      out[t * 2 * dh + dh + c] = x[t * dh + c] * std::sin(angle);
    }
  }
  return out;
}

Var lrpe_apply(Var x, const LrpeParams& params) {
  Tensor out = lrpe_apply(x.value(), params);
  const std::size_t n = x.rows(), dh = x.cols();
  const Var inputs[] = {x};
  return x.tape().record(numerics::OpKind::kLrpe, std::move(out), inputs,
                         [params, n, dh](const Tensor& g, std::span<Tensor* const> gin) {
                           for (std::size_t t = 0; t < n; ++t) {
                             for (std::size_t c = 0; c < dh; ++c) {
                               const double angle = static_cast<double>(t) * params.theta[c];
                               (*gin[0])[t * dh + c] += g[t * 2 * dh + c] * std::cos(angle) +
                                                        g[t * 2 * dh + dh + c] * std::sin(angle);
                             }
                           }
                         });
}

namespace {

void check_tpe(const Tensor& x, const Tensor& a, const Tensor& b, const Tensor& gate) {
  if (a.rank() != 2 || a.cols() < 1) throw DomainError("tpe_apply: state expansion m must be >= 1");
  if (!a.same_shape(b) || !a.same_shape(gate) || a.rows() != x.cols()) {
    throw DimensionError("tpe_apply: a" + a.shape_string() + " b" + b.shape_string() + " gate" +
                         gate.shape_string() + " must all be d x m for input " + x.shape_string());
  }
}

// Per channel c: h_{t,v} = lambda_v h_{t-1,v} + x_{t,c};  o_{t,c} = sum_v a_v b_v h_{t,v}.
Tensor tpe_forward(const Tensor& x, const Tensor& a, const Tensor& b, const Tensor& gate,
                   std::vector<double>* states) {
  const std::size_t n = x.rows(), d = x.cols(), m = a.cols();
  Tensor out({n, d});
  if (states) states->assign(n * d * m, 0.0);
  std::vector<double> h(m);
  for (std::size_t c = 0; c < d; ++c) {
    std::fill(h.begin(), h.end(), 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      const double xt = x[t * d + c];
      double o = 0.0;
      for (std::size_t v = 0; v < m; ++v) {
        const double lam = numerics::sigmoid(gate[c * m + v]);
        h[v] = lam * h[v] + xt;
        o += a[c * m + v] * b[c * m + v] * h[v];
        if (states) (*states)[(t * d + c) * m + v] = h[v];
      }
      out[t * d + c] = o;
    }
  }
  return out;
}

}  // namespace

Tensor tpe_apply(const Tensor& x, const TpeParams& params) {
  check_tpe(x, params.a, params.b, params.gate_logit);
  return tpe_forward(x, params.a, params.b, params.gate_logit, nullptr);
}

Var tpe_apply(Var x, Var a, Var b, Var gate_logit) {
  check_tpe(x.value(), a.value(), b.value(), gate_logit.value());
  std::vector<double> states;
  Tensor out = tpe_forward(x.value(), a.value(), b.value(), gate_logit.value(), &states);
  numerics::Tape* tape = &x.tape();
  const std::size_t aid = a.id(), bid = b.id(), gid = gate_logit.id();
  const std::size_t n = x.rows(), d = x.cols(), m = a.value().cols();
  const Var inputs[] = {x, a, b, gate_logit};
  return tape->record(
      numerics::OpKind::kTpe, std::move(out), inputs,
      [tape, aid, bid, gid, n, d, m, states = std::move(states)](const Tensor& g,
                                                                std::span<Tensor* const> gin) {
        const Tensor& av = tape->value(aid);
        const Tensor& bv = tape->value(bid);
        const Tensor& gv = tape->value(gid);
        std::vector<double> carry(m);
        for (std::size_t c = 0; c < d; ++c) {
          std::fill(carry.begin(), carry.end(), 0.0);
          for (std::size_t t = n; t-- > 0;) {
            const double go = g[t * d + c];
            double dx = 0.0;
            for (std::size_t v = 0; v < m; ++v) {
              const std::size_t pv = c * m + v;
              const double lam = numerics::sigmoid(gv[pv]);
              const double h = states[(t * d + c) * m + v];
              const double hp = t > 0 ? states[((t - 1) * d + c) * m + v] : 0.0;
              // carry = dL/dh_t: direct term plus lambda * dL/dh_{t+1}
              carry[v] = av[pv] * bv[pv] * go + lam * carry[v];
              dx += carry[v];
              const double dw = go * h;
              if (gin[1]) (*gin[1])[pv] += dw * bv[pv];
              if (gin[2]) (*gin[2])[pv] += dw * av[pv];
              if (gin[3]) (*gin[3])[pv] += carry[v] * hp * lam * (1.0 - lam);
            }
            if (gin[0]) (*gin[0])[t * d + c] += dx;
          }
        }
      });
}

double rope_decay_equivalence(const Tensor& q, const Tensor& k, const Tensor& v,
                              const Tensor& lambda, const RopeParams& params) {
  const std::size_t n = q.rows(), dh = q.cols(), dv = v.cols();
  if (lambda.rank() != 2 || lambda.rows() != n || (lambda.cols() != 1 && lambda.cols() != dh)) {
    throw DimensionError("rope_decay_equivalence: lambda " + lambda.shape_string() +
                         " must be n x 1 or n x d/h");
  }
  const bool scalar = lambda.cols() == 1;
  if (!scalar) {
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t p = 0; p < dh / 2; ++p) {
        if (lambda[t * dh + 2 * p] != lambda[t * dh + 2 * p + 1]) {
          throw ContractError(
              "rope_decay_equivalence: vector decay must repeat each value across its rotation "
              "pair; unpaired vector decay breaks the relative form");
        }
      }
    }
  }
  // (i) recurrence on rotated q, k
  const Tensor rotated =
      recurrence::forward_sequential(rope_apply(q, params), rope_apply(k, params), v, lambda).output;

  // (ii) relative form with telescoped decay products
  Tensor relative({n, dv});
  std::vector<double> weight(dh), rk(dh);
  for (std::size_t t = 0; t < n; ++t) {
    std::fill(weight.begin(), weight.end(), 1.0);
    for (std::size_t j = t + 1; j-- > 0;) {
      // R_t^T R_j rotates by (j - t) theta: depends only on the offset.
      const double offset = -static_cast<double>(t - j);
      for (std::size_t p = 0; p < dh / 2; ++p) {
        const double angle = offset * params.theta[p];
        const double c = std::cos(angle), s = std::sin(angle);
        const double k0 = k[j * dh + 2 * p], k1 = k[j * dh + 2 * p + 1];
        rk[2 * p] = c * k0 - s * k1;
        rk[2 * p + 1] = s * k0 + c * k1;
      }
      double score = 0.0;
      for (std::size_t c = 0; c < dh; ++c) score += q[t * dh + c] * weight[c] * rk[c];
      for (std::size_t c = 0; c < dv; ++c) relative[t * dv + c] += score * v[j * dv + c];
      for (std::size_t c = 0; c < dh; ++c) weight[c] *= scalar ? lambda[j] : lambda[j * dh + c];
    }
  }
  return numerics::max_abs_diff(rotated, relative);
}

}  // namespace decaylab::posenc
