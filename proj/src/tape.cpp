// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0

#include "decaylab/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "decaylab/errors.hpp"

namespace decaylab::numerics {

std::string_view to_string(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kAddConstant: return "add_constant";
    case OpKind::kScaleBy: return "scale_by";
    case OpKind::kShiftBy: return "shift_by";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kLogSigmoid: return "log_sigmoid";
    case OpKind::kSilu: return "silu";
    case OpKind::kExp: return "exp";
    case OpKind::kSoftplus: return "softplus";
    case OpKind::kSum: return "sum";
    case OpKind::kRmsNorm: return "rmsnorm";
    case OpKind::kLogSumExp: return "logsumexp";
    case OpKind::kSliceCols: return "slice_cols";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kBroadcast: return "broadcast";
    case OpKind::kGatherRows: return "gather_rows";
    case OpKind::kL2NormalizeRows: return "l2_normalize_rows";
    case OpKind::kCrossEntropy: return "cross_entropy";
    case OpKind::kLightNetDecay: return "lightnet_decay";
    case OpKind::kRecurrence: return "recurrence";
    case OpKind::kDplrRecurrence: return "dplr_recurrence";
    case OpKind::kRope: return "rope";
    case OpKind::kLrpe: return "lrpe";
    case OpKind::kTpe: return "tpe";
  }
  return "unknown";
}

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(Tensor value) {
  TapeNode node;
  node.value = std::move(value);
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  TapeNode node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind kind, Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  TapeNode node;
  node.kind = kind;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw ContractError("record: input belongs to another tape");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var root) {
  if (&root.tape() != this) throw ContractError("backward: root belongs to another tape");
  TapeNode& top = nodes_.at(root.id());
  if (top.value.size() != 1) {
    throw ContractError("backward: root must be a scalar, got shape " + top.value.shape_string());
  }
  if (!top.requires_grad) return;
  if (top.grad.empty()) top.grad = Tensor(top.value.shape(), 0.0);
  top.grad[0] += 1.0;

  std::vector<Tensor*> slots;
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    TapeNode& node = nodes_[id];
    if (!node.requires_grad || !node.backward || node.grad.empty()) continue;
    slots.clear();
    for (std::size_t in : node.inputs) {
      TapeNode& src = nodes_[in];
      if (!src.requires_grad) {
        slots.push_back(nullptr);
        continue;
      }
      if (src.grad.empty()) src.grad = Tensor(src.value.shape(), 0.0);
      slots.push_back(&src.grad);
    }
    node.backward(node.grad, slots);
  }
}

Tensor Tape::grad(Var v) const {
  const TapeNode& node = nodes_.at(v.id());
  if (node.grad.empty()) return Tensor(node.value.shape(), 0.0);
  return node.grad;
}

// ---- ops -------------------------------------------------------------------

namespace {

template <typename F>
Var unary(OpKind kind, Var x, F forward, std::function<double(double x, double y)> dydx) {
  const Tensor& in = x.value();
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
  Tape* tape = &x.tape();
  const std::size_t xid = x.id();
  const Var inputs[] = {x};
  const std::size_t self = tape->size();
  return tape->record(kind, std::move(out), inputs,
                      [tape, xid, self, dydx](const Tensor& g, std::span<Tensor* const> gin) {
                        const Tensor& xv = tape->value(xid);
                        const Tensor& yv = tape->value(self);
                        Tensor& gx = *gin[0];
                        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dydx(xv[i], yv[i]);
                      });
}

void require_single(Var s, const char* op) {
  if (s.value().size() != 1) {
    throw DimensionError(std::string(op) + ": expected a single element, got " +
                         s.value().shape_string());
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  Tensor out = matmul(a.value(), b.value());
  Tape* tape = &a.tape();
  const std::size_t aid = a.id(), bid = b.id();
  const Var inputs[] = {a, b};
  return tape->record(OpKind::kMatMul, std::move(out), inputs,
                      [tape, aid, bid](const Tensor& g, std::span<Tensor* const> gin) {
                        if (gin[0]) add_inplace(*gin[0], matmul_nt(g, tape->value(bid)));
                        if (gin[1]) add_inplace(*gin[1], matmul_tn(tape->value(aid), g));
                      });
}

Var transpose(Var x) {
  Tensor out = transpose(x.value());
  const Var inputs[] = {x};
  return x.tape().record(OpKind::kTranspose, std::move(out), inputs,
                         [](const Tensor& g, std::span<Tensor* const> gin) {
                           add_inplace(*gin[0], transpose(g));
                         });
}

Var add(Var a, Var b) {
  Tensor out = add(a.value(), b.value());
  const Var inputs[] = {a, b};
  return a.tape().record(OpKind::kAdd, std::move(out), inputs,
                         [](const Tensor& g, std::span<Tensor* const> gin) {
                           if (gin[0]) add_inplace(*gin[0], g);
                           if (gin[1]) add_inplace(*gin[1], g);
                         });
}

Var sub(Var a, Var b) {
  Tensor out = sub(a.value(), b.value());
  const Var inputs[] = {a, b};
  return a.tape().record(OpKind::kSub, std::move(out), inputs,
                         [](const Tensor& g, std::span<Tensor* const> gin) {
                           if (gin[0]) add_inplace(*gin[0], g);
                           if (gin[1]) {
                             for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] -= g[i];
                           }
                         });
}

Var mul(Var a, Var b) {
  Tensor out = mul(a.value(), b.value());
  Tape* tape = &a.tape();
  const std::size_t aid = a.id(), bid = b.id();
  const Var inputs[] = {a, b};
  return tape->record(OpKind::kMul, std::move(out), inputs,
                      [tape, aid, bid](const Tensor& g, std::span<Tensor* const> gin) {
                        const Tensor& av = tape->value(aid);
                        const Tensor& bv = tape->value(bid);
                        for (std::size_t i = 0; i < g.size(); ++i) {
                          if (gin[0]) (*gin[0])[i] += g[i] * bv[i];
                          if (gin[1]) (*gin[1])[i] += g[i] * av[i];
                        }
                      });
}

Var scale(Var x, double c) {
  Tensor out = scale(x.value(), c);
  const Var inputs[] = {x};
  return x.tape().record(OpKind::kScale, std::move(out), inputs,
                         [c](const Tensor& g, std::span<Tensor* const> gin) {
                           for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += c * g[i];
                         });
}

Var add_constant(Var x, double c) {
  Tensor out(x.value().shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] + c;
  const Var inputs[] = {x};
  return x.tape().record(OpKind::kAddConstant, std::move(out), inputs,
                         [](const Tensor& g, std::span<Tensor* const> gin) { add_inplace(*gin[0], g); });
}

Var one_minus(Var x) {
  Tensor out(x.value().shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 - x.value()[i];
  const Var inputs[] = {x};
  return x.tape().record(OpKind::kAddConstant, std::move(out), inputs,
                         [](const Tensor& g, std::span<Tensor* const> gin) {
                           for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] -= g[i];
                         });
}

Var scale_by(Var x, Var s) {
  require_single(s, "scale_by");
  const double c = s.value()[0];
  Tensor out = scale(x.value(), c);
  Tape* tape = &x.tape();
  const std::size_t xid = x.id(), sid = s.id();
  const Var inputs[] = {x, s};
  return tape->record(OpKind::kScaleBy, std::move(out), inputs,
                      [tape, xid, sid](const Tensor& g, std::span<Tensor* const> gin) {
                        const Tensor& xv = tape->value(xid);
                        const double c = tape->value(sid)[0];
                        double acc = 0.0;
                        for (std::size_t i = 0; i < g.size(); ++i) {
                          if (gin[0]) (*gin[0])[i] += c * g[i];
                          acc += g[i] * xv[i];
                        }
                        if (gin[1]) (*gin[1])[0] += acc;
                      });
}

Var shift_by(Var x, Var s) {
  require_single(s, "shift_by");
  const double c = s.value()[0];
  Tensor out(x.value().shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] + c;
  const Var inputs[] = {x, s};
  return x.tape().record(OpKind::kShiftBy, std::move(out), inputs,
                         [](const Tensor& g, std::span<Tensor* const> gin) {
                           if (gin[0]) add_inplace(*gin[0], g);
                           if (gin[1]) (*gin[1])[0] += sum(g);
                         });
}

Var sigmoid(Var x) {
  return unary(
      OpKind::kSigmoid, x, [](double v) { return sigmoid(v); },
      [](double, double y) { return y * (1.0 - y); });
}

Var log_sigmoid(Var x) {
  // d/dx log sigmoid(x) = sigmoid(-x)
  return unary(
      OpKind::kLogSigmoid, x, [](double v) { return log_sigmoid(v); },
      [](double xv, double) { return sigmoid(-xv); });
}

Var silu(Var x) {
  return unary(
      OpKind::kSilu, x, [](double v) { return v * sigmoid(v); },
      [](double xv, double) {
        const double s = sigmoid(xv);
        return s * (1.0 + xv * (1.0 - s));
      });
}

Var exp(Var x) {
  return unary(
      OpKind::kExp, x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var softplus(Var x) {
  return unary(
      OpKind::kSoftplus, x, [](double v) { return softplus(v); },
      [](double xv, double) { return sigmoid(xv); });
}

Var sum(Var x) {
  Tensor out = Tensor::scalar(sum(x.value()));
  const Var inputs[] = {x};
  return x.tape().record(OpKind::kSum, std::move(out), inputs,
                         [](const Tensor& g, std::span<Tensor* const> gin) {
                           const double gv = g[0];
                           for (auto& v : gin[0]->data()) v += gv;
                         });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var rmsnorm(Var x, Var gamma, double eps) {
  const Tensor& xv = x.value();
  const std::size_t d = xv.shape().back();
  const std::size_t rows = xv.size() / d;
  Tensor out = rmsnorm(xv, gamma.value(), eps);
  std::vector<double> inv(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double ms = 0.0;
    for (std::size_t c = 0; c < d; ++c) ms += xv[r * d + c] * xv[r * d + c];
    const double denom = std::sqrt(ms / static_cast<double>(d) + eps);
    inv[r] = denom > 0.0 ? 1.0 / denom : 0.0;
  }
  Tape* tape = &x.tape();
  const std::size_t xid = x.id(), gid = gamma.id();
  const Var inputs[] = {x, gamma};
  return tape->record(
      OpKind::kRmsNorm, std::move(out), inputs,
      [tape, xid, gid, d, rows, inv = std::move(inv)](const Tensor& g, std::span<Tensor* const> gin) {
        const Tensor& xv = tape->value(xid);
        const Tensor& gv = tape->value(gid);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* xr = xv.data().data() + r * d;
          const double* gr = g.data().data() + r * d;
          const double ir = inv[r];
          if (gin[1]) {
            for (std::size_t c = 0; c < d; ++c) (*gin[1])[c] += gr[c] * xr[c] * ir;
          }
          if (gin[0]) {
            // y_c = x_c * ir * gamma_c, ir = (mean(x^2)+eps)^(-1/2)
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) dot += gr[c] * gv[c] * xr[c];
            const double k = ir * ir * ir * dot / static_cast<double>(d);
            double* gx = gin[0]->data().data() + r * d;
            for (std::size_t c = 0; c < d; ++c) gx[c] += gr[c] * gv[c] * ir - k * xr[c];
          }
        }
      });
}

Var logsumexp_rows(Var x) {
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  Tensor out({r, 1});
  for (std::size_t i = 0; i < r; ++i) out[i] = logsumexp(xv.data().subspan(i * c, c));
  Tape* tape = &x.tape();
  const std::size_t xid = x.id();
  const std::size_t self = tape->size();
  const Var inputs[] = {x};
  return tape->record(OpKind::kLogSumExp, std::move(out), inputs,
                      [tape, xid, self, r, c](const Tensor& g, std::span<Tensor* const> gin) {
                        const Tensor& xv = tape->value(xid);
                        const Tensor& yv = tape->value(self);
                        for (std::size_t i = 0; i < r; ++i) {
                          for (std::size_t j = 0; j < c; ++j) {
                            (*gin[0])[i * c + j] += g[i] * std::exp(xv[i * c + j] - yv[i]);
                          }
                        }
                      });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  if (count == 0 || begin + count > c) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + xv.shape_string());
  }
  Tensor out({r, count});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = xv[i * c + begin + j];
  const Var inputs[] = {x};
  return x.tape().record(OpKind::kSliceCols, std::move(out), inputs,
                         [r, c, begin, count](const Tensor& g, std::span<Tensor* const> gin) {
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < count; ++j)
                               (*gin[0])[i * c + begin + j] += g[i * count + j];
                         });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t r = parts[0].value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.value().rows() != r) {
      throw DimensionError("concat_cols: row mismatch " + parts[0].value().shape_string() +
                           " vs " + p.value().shape_string());
    }
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  Tensor out({r, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) out[i * total + offset + j] = pv[i * widths[k] + j];
    offset += widths[k];
  }
  return parts[0].tape().record(
      OpKind::kConcatCols, std::move(out), parts,
      [r, total, widths](const Tensor& g, std::span<Tensor* const> gin) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
          if (gin[k]) {
            for (std::size_t i = 0; i < r; ++i)
              for (std::size_t j = 0; j < widths[k]; ++j)
                (*gin[k])[i * widths[k] + j] += g[i * total + offset + j];
          }
          offset += widths[k];
        }
      });
}

Var broadcast(Var x, std::size_t rows, std::size_t cols) {
  const Tensor& xv = x.value();
  const bool single = xv.size() == 1;
  if (!single && !(xv.rank() == 2 && xv.dim(0) == rows && xv.dim(1) == 1)) {
    throw DimensionError("broadcast: cannot expand " + xv.shape_string() + " to [" +
                         std::to_string(rows) + "x" + std::to_string(cols) + "]");
  }
  Tensor out({rows, cols});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = single ? xv[0] : xv[i];
  const Var inputs[] = {x};
  return x.tape().record(OpKind::kBroadcast, std::move(out), inputs,
                         [rows, cols, single](const Tensor& g, std::span<Tensor* const> gin) {
                           for (std::size_t i = 0; i < rows; ++i) {
                             double acc = 0.0;
                             for (std::size_t j = 0; j < cols; ++j) acc += g[i * cols + j];
                             (*gin[0])[single ? 0 : i] += acc;
                           }
                         });
}

Var gather_rows(Var table, std::span<const int> ids) {
  const Tensor& tv = table.value();
  const std::size_t n = tv.rows(), d = tv.cols();
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= n) {
      throw DomainError("gather_rows: index " + std::to_string(ids[i]) + " outside [0, " +
                        std::to_string(n) + ")");
    }
    std::copy_n(tv.data().begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  std::vector<int> idx(ids.begin(), ids.end());
  const Var inputs[] = {table};
  return table.tape().record(OpKind::kGatherRows, std::move(out), inputs,
                             [idx = std::move(idx), d](const Tensor& g, std::span<Tensor* const> gin) {
                               for (std::size_t i = 0; i < idx.size(); ++i) {
                                 double* dst = gin[0]->data().data() + static_cast<std::size_t>(idx[i]) * d;
                                 for (std::size_t c = 0; c < d; ++c) dst[c] += g[i * d + c];
                               }
                             });
}

Var l2_normalize_rows(Var x, double eps) {
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  Tensor out({r, c});
  std::vector<double> inv(r);
  for (std::size_t i = 0; i < r; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < c; ++j) ss += xv[i * c + j] * xv[i * c + j];
    inv[i] = 1.0 / std::sqrt(ss + eps);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = xv[i * c + j] * inv[i];
  }
  Tape* tape = &x.tape();
  const std::size_t self = tape->size();
  const Var inputs[] = {x};
  return tape->record(OpKind::kL2NormalizeRows, std::move(out), inputs,
                      [tape, self, r, c, inv = std::move(inv)](const Tensor& g, std::span<Tensor* const> gin) {
                        const Tensor& y = tape->value(self);
                        for (std::size_t i = 0; i < r; ++i) {
                          double dot = 0.0;
                          for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
                          for (std::size_t j = 0; j < c; ++j)
                            (*gin[0])[i * c + j] += inv[i] * (g[i * c + j] - dot * y[i * c + j]);
                        }
                      });
}

}  // namespace decaylab::numerics
