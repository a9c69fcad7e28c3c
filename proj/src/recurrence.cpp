// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0

#include "decaylab/recurrence.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "decaylab/errors.hpp"

namespace decaylab::recurrence {

namespace {

struct Dims {
  std::size_t n, dk, dv;
  bool scalar;  // lambda is n x 1
};

Dims check_inputs(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& lambda,
                  const char* op) {
  for (const Tensor* t : {&q, &k, &v, &lambda}) {
    if (t->rank() != 2) {
      throw DimensionError(std::string(op) + ": inputs must be matrices, got " + t->shape_string());
    }
  }
  const std::size_t n = q.dim(0), dk = q.dim(1), dv = v.dim(1);
  const bool lambda_ok =
      lambda.dim(0) == n && (lambda.dim(1) == dk || lambda.dim(1) == 1);
  if (!k.same_shape(q) || v.dim(0) != n || !lambda_ok) {
    throw DimensionError(std::string(op) + ": inconsistent shapes q" + q.shape_string() + " k" +
                         k.shape_string() + " v" + v.shape_string() + " lambda" +
                         lambda.shape_string());
  }
  for (const Tensor* t : {&q, &k, &v, &lambda}) {
    if (!t->all_finite()) throw DomainError(std::string(op) + ": non-finite input");
  }
  return {n, dk, dv, lambda.dim(1) == 1 && dk != 1};
}

inline double lam_at(const Tensor& lambda, const Dims& d, std::size_t t, std::size_t i) {
  return d.scalar ? lambda[t] : lambda[t * d.dk + i];
}

// Sequential scan; when `states` is non-null it receives s_t for every t
// (n blocks of dk x dv).
void scan(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& lambda, const Dims& d,
          Tensor& out, std::vector<double>& s, std::vector<double>* states) {
  const std::size_t dk = d.dk, dv = d.dv;
  s.assign(dk * dv, 0.0);
  if (states) states->resize(d.n * dk * dv);
  for (std::size_t t = 0; t < d.n; ++t) {
    const double* vt = v.data().data() + t * dv;
    for (std::size_t i = 0; i < dk; ++i) {
      const double li = lam_at(lambda, d, t, i);
      const double ki = k[t * dk + i];
      double* row = s.data() + i * dv;
      for (std::size_t j = 0; j < dv; ++j) row[j] = li * row[j] + ki * vt[j];
    }
    double* ot = out.data().data() + t * dv;
    for (std::size_t i = 0; i < dk; ++i) {
      const double qi = q[t * dk + i];
      const double* row = s.data() + i * dv;
      for (std::size_t j = 0; j < dv; ++j) ot[j] += qi * row[j];
    }
    if (states) std::copy(s.begin(), s.end(), states->begin() + static_cast<std::ptrdiff_t>(t * dk * dv));
  }
}

Tensor unit_kappa(const DplrParams& p) {
  Tensor kappa = p.kappa;
  const std::size_t n = kappa.rows(), dk = kappa.cols();
  for (std::size_t t = 0; t < n; ++t) {
    double ss = 0.0;
    for (std::size_t i = 0; i < dk; ++i) ss += kappa[t * dk + i] * kappa[t * dk + i];
    const double norm = std::sqrt(ss);
    if (p.normalize) {
      if (norm == 0.0) throw DomainError("forward_dplr: zero kappa row cannot be normalised");
      for (std::size_t i = 0; i < dk; ++i) kappa[t * dk + i] /= norm;
    } else if (std::abs(norm - 1.0) > 1e-10) {
      throw DomainError("forward_dplr: kappa row " + std::to_string(t) + " has norm " +
                        std::to_string(norm) + " but normalisation is disabled");
    }
  }
  return kappa;
}

void check_dplr(const Tensor& kappa, const Tensor& beta, const Dims& d, bool check_range) {
  if (kappa.rank() != 2 || kappa.dim(0) != d.n || kappa.dim(1) != d.dk) {
    throw DimensionError("forward_dplr: kappa " + kappa.shape_string() + " must be n x dk");
  }
  if (beta.rank() != 2 || beta.dim(0) != d.n || beta.dim(1) != 1) {
    throw DimensionError("forward_dplr: beta " + beta.shape_string() + " must be n x 1");
  }
  if (!kappa.all_finite() || !beta.all_finite()) throw DomainError("forward_dplr: non-finite input");
  if (check_range) {
    for (double b : beta.data()) {
      if (b < 0.0 || b > 1.0) throw DomainError("forward_dplr: beta outside [0, 1]");
    }
  }
}

void dplr_scan(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& lambda,
               const Tensor& kappa, const Tensor& beta, const Dims& d, Tensor& out,
               std::vector<double>& s, std::vector<double>* states) {
  const std::size_t dk = d.dk, dv = d.dv;
  s.assign(dk * dv, 0.0);
  std::vector<double> u(dv);
  if (states) states->resize(d.n * dk * dv);
  for (std::size_t t = 0; t < d.n; ++t) {
    const double* kap = kappa.data().data() + t * dk;
    const double bt = beta[t];
    std::fill(u.begin(), u.end(), 0.0);
    for (std::size_t i = 0; i < dk; ++i) {
      const double* row = s.data() + i * dv;
      for (std::size_t j = 0; j < dv; ++j) u[j] += kap[i] * row[j];
    }
    const double* vt = v.data().data() + t * dv;
    for (std::size_t i = 0; i < dk; ++i) {
      const double li = lam_at(lambda, d, t, i);
      const double ki = k[t * dk + i];
      const double ci = bt * kap[i];
      double* row = s.data() + i * dv;
      for (std::size_t j = 0; j < dv; ++j) row[j] = li * row[j] - ci * u[j] + ki * vt[j];
    }
    double* ot = out.data().data() + t * dv;
    for (std::size_t i = 0; i < dk; ++i) {
      const double qi = q[t * dk + i];
      const double* row = s.data() + i * dv;
      for (std::size_t j = 0; j < dv; ++j) ot[j] += qi * row[j];
    }
    if (states) std::copy(s.begin(), s.end(), states->begin() + static_cast<std::ptrdiff_t>(t * dk * dv));
  }
}

}  // namespace

ScanResult forward_sequential(const Tensor& q, const Tensor& k, const Tensor& v,
                              const Tensor& lambda) {
  const Dims d = check_inputs(q, k, v, lambda, "forward_sequential");
  Tensor out({d.n, d.dv});
  std::vector<double> s;
  scan(q, k, v, lambda, d, out, s, nullptr);
  return {std::move(out), Tensor({d.dk, d.dv}, std::move(s))};
}

Tensor forward_oracle(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& lambda) {
  const Dims d = check_inputs(q, k, v, lambda, "forward_oracle");
  Tensor out({d.n, d.dv});
  std::vector<double> weight(d.dk);
  for (std::size_t t = 0; t < d.n; ++t) {
    std::fill(weight.begin(), weight.end(), 1.0);  // prod_{i=j+1..t} lambda_i, empty at j = t
    for (std::size_t j = t + 1; j-- > 0;) {
      double score = 0.0;
      for (std::size_t c = 0; c < d.dk; ++c) score += q[t * d.dk + c] * weight[c] * k[j * d.dk + c];
      for (std::size_t c = 0; c < d.dv; ++c) out[t * d.dv + c] += score * v[j * d.dv + c];
      for (std::size_t c = 0; c < d.dk; ++c) weight[c] *= lam_at(lambda, d, j, c);
    }
  }
  return out;
}

Tensor forward_chunked(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& lambda,
                       std::size_t chunk) {
  if (chunk == 0) throw DomainError("forward_chunked: chunk size must be positive");
  const Dims d = check_inputs(q, k, v, lambda, "forward_chunked");
  const std::size_t dk = d.dk, dv = d.dv;
  Tensor out({d.n, dv});
  std::vector<double> state(dk * dv, 0.0);
  std::vector<double> prefix(dk), weight(dk), scores;
  for (std::size_t c0 = 0; c0 < d.n; c0 += chunk) {
    const std::size_t c1 = std::min(c0 + chunk, d.n);
    const std::size_t len = c1 - c0;
    scores.assign(len * len, 0.0);
    std::fill(prefix.begin(), prefix.end(), 1.0);
    for (std::size_t t = c0; t < c1; ++t) {
      // Inter-chunk: (q_t * prod_{i=c0..t} lambda_i)^T S_{c0-1}.
      for (std::size_t i = 0; i < dk; ++i) prefix[i] *= lam_at(lambda, d, t, i);
      double* ot = out.data().data() + t * dv;
      for (std::size_t i = 0; i < dk; ++i) {
        const double qi = q[t * dk + i] * prefix[i];
        if (qi == 0.0) continue;
        const double* row = state.data() + i * dv;
        for (std::size_t j = 0; j < dv; ++j) ot[j] += qi * row[j];
      }
      // Intra-chunk scores A[t][j] = sum_c q_tc k_jc prod_{i=j+1..t} lambda_ic, j <= t.
      std::fill(weight.begin(), weight.end(), 1.0);
      for (std::size_t j = t + 1; j-- > c0;) {
        double a = 0.0;
        for (std::size_t c = 0; c < dk; ++c) a += q[t * dk + c] * weight[c] * k[j * dk + c];
        scores[(t - c0) * len + (j - c0)] = a;
        for (std::size_t c = 0; c < dk; ++c) weight[c] *= lam_at(lambda, d, j, c);
      }
    }
    // Masked quadratic form: O_chunk += A V_chunk (A is lower triangular).
    for (std::size_t a = 0; a < len; ++a) {
      double* ot = out.data().data() + (c0 + a) * dv;
      for (std::size_t b = 0; b <= a; ++b) {
        const double w = scores[a * len + b];
        const double* vb = v.data().data() + (c0 + b) * dv;
        for (std::size_t j = 0; j < dv; ++j) ot[j] += w * vb[j];
      }
    }
    // Carry: S_{c1-1} = diag(prod_{c0..c1-1} lambda) S + sum_j diag(prod_{j+1..c1-1} lambda) k_j v_j^T.
    for (std::size_t i = 0; i < dk; ++i) {
      double* row = state.data() + i * dv;
      for (std::size_t j = 0; j < dv; ++j) row[j] *= prefix[i];
    }
    std::fill(weight.begin(), weight.end(), 1.0);
    for (std::size_t t = c1; t-- > c0;) {
      const double* vt = v.data().data() + t * dv;
      for (std::size_t i = 0; i < dk; ++i) {
        const double ki = k[t * dk + i] * weight[i];
        double* row = state.data() + i * dv;
        for (std::size_t j = 0; j < dv; ++j) row[j] += ki * vt[j];
        weight[i] *= lam_at(lambda, d, t, i);
      }
    }
  }
  return out;
}

ScanResult forward_dplr(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& lambda,
                        const DplrParams& params) {
  const Dims d = check_inputs(q, k, v, lambda, "forward_dplr");
  check_dplr(params.kappa, params.beta, d, true);
  const Tensor kappa = unit_kappa(params);
  Tensor out({d.n, d.dv});
  std::vector<double> s;
  dplr_scan(q, k, v, lambda, kappa, params.beta, d, out, s, nullptr);
  return {std::move(out), Tensor({d.dk, d.dv}, std::move(s))};
}

Tensor forward_dplr_dense(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& lambda,
                          const DplrParams& params) {
  const Dims d = check_inputs(q, k, v, lambda, "forward_dplr_dense");
  check_dplr(params.kappa, params.beta, d, true);
  const Tensor kappa = unit_kappa(params);
  Tensor state({d.dk, d.dv});
  Tensor out({d.n, d.dv});
  for (std::size_t t = 0; t < d.n; ++t) {
    Tensor m({d.dk, d.dk});
    for (std::size_t i = 0; i < d.dk; ++i) {
      for (std::size_t j = 0; j < d.dk; ++j) {
        m.at(i, j) = (i == j ? lam_at(lambda, d, t, i) : 0.0) -
                     params.beta[t] * kappa[t * d.dk + i] * kappa[t * d.dk + j];
      }
    }
    Tensor kt({d.dk, 1}), vt({1, d.dv}), qt({d.dk, 1});
    for (std::size_t i = 0; i < d.dk; ++i) {
      kt[i] = k[t * d.dk + i];
      qt[i] = q[t * d.dk + i];
    }
    for (std::size_t j = 0; j < d.dv; ++j) vt[j] = v[t * d.dv + j];
    state = numerics::add(numerics::matmul(m, state), numerics::matmul(kt, vt));
    const Tensor ot = numerics::matmul_tn(qt, state);
    for (std::size_t j = 0; j < d.dv; ++j) out[t * d.dv + j] = ot[j];
  }
  return out;
}

Tensor cumulative_decay(const Tensor& lambda) {
  if (lambda.rank() != 2) throw DimensionError("cumulative_decay: expected n x c");
  const std::size_t n = lambda.dim(0), c = lambda.dim(1);
  Tensor gamma({n, c});
  for (std::size_t j = 0; j < c; ++j) {
    double acc = 1.0;
    for (std::size_t t = 0; t < n; ++t) {
      acc *= lambda[t * c + j];
      gamma[t * c + j] = acc;
    }
  }
  return gamma;
}

Var forward_sequential(Var q, Var k, Var v, Var lambda) {
  const Dims d = check_inputs(q.value(), k.value(), v.value(), lambda.value(), "forward_sequential");
  const bool need_grad =
      q.requires_grad() || k.requires_grad() || v.requires_grad() || lambda.requires_grad();
  Tensor out({d.n, d.dv});
  std::vector<double> s;
  std::vector<double> states;
  scan(q.value(), k.value(), v.value(), lambda.value(), d, out, s, need_grad ? &states : nullptr);

  numerics::Tape* tape = &q.tape();
  const std::size_t qid = q.id(), kid = k.id(), vid = v.id(), lid = lambda.id();
  const Var inputs[] = {q, k, v, lambda};
  return tape->record(
      numerics::OpKind::kRecurrence, std::move(out), inputs,
      [tape, qid, kid, vid, lid, d, states = std::move(states)](const Tensor& g,
                                                               std::span<Tensor* const> gin) {
        const Tensor& qv = tape->value(qid);
        const Tensor& kv = tape->value(kid);
        const Tensor& vv = tape->value(vid);
        const Tensor& lv = tape->value(lid);
        const std::size_t dk = d.dk, dv = d.dv;
        std::vector<double> ds(dk * dv, 0.0);
        for (std::size_t t = d.n; t-- > 0;) {
          const double* st = states.data() + t * dk * dv;
          const double* prev = t > 0 ? states.data() + (t - 1) * dk * dv : nullptr;
          const double* gt = g.data().data() + t * dv;
          const double* vt = vv.data().data() + t * dv;
          for (std::size_t i = 0; i < dk; ++i) {
            const double qi = qv[t * dk + i];
            double* dsr = ds.data() + i * dv;
            const double* sr = st + i * dv;
            double dq = 0.0;
            for (std::size_t j = 0; j < dv; ++j) {
              dsr[j] += qi * gt[j];
              dq += sr[j] * gt[j];
            }
            if (gin[0]) (*gin[0])[t * dk + i] += dq;
          }
          for (std::size_t i = 0; i < dk; ++i) {
            const double* dsr = ds.data() + i * dv;
            const double ki = kv[t * dk + i];
            double dk_acc = 0.0, dl = 0.0;
            for (std::size_t j = 0; j < dv; ++j) {
              dk_acc += dsr[j] * vt[j];
              if (gin[2]) (*gin[2])[t * dv + j] += dsr[j] * ki;
              if (prev) dl += dsr[j] * prev[i * dv + j];
            }
            if (gin[1]) (*gin[1])[t * dk + i] += dk_acc;
            if (gin[3]) (*gin[3])[d.scalar ? t : t * dk + i] += dl;
          }
          for (std::size_t i = 0; i < dk; ++i) {
            const double li = lam_at(lv, d, t, i);
            double* dsr = ds.data() + i * dv;
            for (std::size_t j = 0; j < dv; ++j) dsr[j] *= li;
          }
        }
      });
}

Var forward_dplr(Var q, Var k, Var v, Var lambda, Var kappa, Var beta) {
  const Dims d = check_inputs(q.value(), k.value(), v.value(), lambda.value(), "forward_dplr");
  check_dplr(kappa.value(), beta.value(), d, false);
  for (std::size_t t = 0; t < d.n; ++t) {
    double ss = 0.0;
    for (std::size_t i = 0; i < d.dk; ++i) ss += kappa.value()[t * d.dk + i] * kappa.value()[t * d.dk + i];
    if (std::abs(std::sqrt(ss) - 1.0) > 1e-8) {
      throw DomainError("forward_dplr: kappa row " + std::to_string(t) + " is not unit length");
    }
  }
  const bool need_grad = q.requires_grad() || k.requires_grad() || v.requires_grad() ||
                         lambda.requires_grad() || kappa.requires_grad() || beta.requires_grad();
  Tensor out({d.n, d.dv});
  std::vector<double> s;
  std::vector<double> states;
  dplr_scan(q.value(), k.value(), v.value(), lambda.value(), kappa.value(), beta.value(), d, out, s,
            need_grad ? &states : nullptr);

  numerics::Tape* tape = &q.tape();
  const std::size_t ids[] = {q.id(), k.id(), v.id(), lambda.id(), kappa.id(), beta.id()};
  const Var inputs[] = {q, k, v, lambda, kappa, beta};
  return tape->record(
      numerics::OpKind::kDplrRecurrence, std::move(out), inputs,
      [tape, qid = ids[0], kid = ids[1], vid = ids[2], lid = ids[3], kapid = ids[4], bid = ids[5], d,
       states = std::move(states)](const Tensor& g, std::span<Tensor* const> gin) {
        const Tensor& qv = tape->value(qid);
        const Tensor& kv = tape->value(kid);
        const Tensor& vv = tape->value(vid);
        const Tensor& lv = tape->value(lid);
        const Tensor& kap = tape->value(kapid);
        const Tensor& bv = tape->value(bid);
        const std::size_t dk = d.dk, dv = d.dv;
        std::vector<double> ds(dk * dv, 0.0), u(dv), w(dv);
        const std::vector<double> zeros(dk * dv, 0.0);
        for (std::size_t t = d.n; t-- > 0;) {
          const double* st = states.data() + t * dk * dv;
          const double* prev = t > 0 ? states.data() + (t - 1) * dk * dv : zeros.data();
          const double* gt = g.data().data() + t * dv;
          const double* vt = vv.data().data() + t * dv;
          const double* kp = kap.data().data() + t * dk;
          const double bt = bv[t];
          // o_t = s_t^T q_t
          for (std::size_t i = 0; i < dk; ++i) {
            const double qi = qv[t * dk + i];
            double* dsr = ds.data() + i * dv;
            const double* sr = st + i * dv;
            double dq = 0.0;
            for (std::size_t j = 0; j < dv; ++j) {
              dsr[j] += qi * gt[j];
              dq += sr[j] * gt[j];
            }
            if (gin[0]) (*gin[0])[t * dk + i] += dq;
          }
          // u = kappa^T s_{t-1},  w = kappa^T ds
          std::fill(u.begin(), u.end(), 0.0);
          std::fill(w.begin(), w.end(), 0.0);
          for (std::size_t i = 0; i < dk; ++i) {
            for (std::size_t j = 0; j < dv; ++j) {
              u[j] += kp[i] * prev[i * dv + j];
              w[j] += kp[i] * ds[i * dv + j];
            }
          }
          double dbeta = 0.0;
          for (std::size_t j = 0; j < dv; ++j) dbeta -= w[j] * u[j];
          if (gin[5]) (*gin[5])[t] += dbeta;
          for (std::size_t i = 0; i < dk; ++i) {
            const double* dsr = ds.data() + i * dv;
            const double* pr = prev + i * dv;
            const double ki = kv[t * dk + i];
            double dk_acc = 0.0, dl = 0.0, a = 0.0, b = 0.0;
            for (std::size_t j = 0; j < dv; ++j) {
              dk_acc += dsr[j] * vt[j];
              if (gin[2]) (*gin[2])[t * dv + j] += dsr[j] * ki;
              dl += dsr[j] * pr[j];
              a += dsr[j] * u[j];
              b += pr[j] * w[j];
            }
            if (gin[1]) (*gin[1])[t * dk + i] += dk_acc;
            if (gin[3]) (*gin[3])[d.scalar ? t : t * dk + i] += dl;
            if (gin[4]) (*gin[4])[t * dk + i] += -bt * (a + b);
          }
          // ds_{t-1} = M_t^T ds = diag(lambda) ds - beta kappa w^T
          for (std::size_t i = 0; i < dk; ++i) {
            const double li = lam_at(lv, d, t, i);
            const double ci = bt * kp[i];
            double* dsr = ds.data() + i * dv;
            for (std::size_t j = 0; j < dv; ++j) dsr[j] = li * dsr[j] - ci * w[j];
          }
        }
      });
}

}  // namespace decaylab::recurrence
