// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode gradient tape. Nodes are appended in creation order, which is
// a topological order of the computation DAG; backward() walks it in reverse
// so gradient accumulation order is fixed and runs are bitwise reproducible.
//
// A tape belongs to one thread. Independent tapes may run concurrently.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "decaylab/tensor.hpp"

namespace decaylab::numerics {

class Tape;

enum class OpKind : std::uint8_t {
  kLeaf,
  kMatMul,
  kTranspose,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddConstant,
  kScaleBy,
  kShiftBy,
  kSigmoid,
  kLogSigmoid,
  kSilu,
  kExp,
  kSoftplus,
  kSum,
  kRmsNorm,
  kLogSumExp,
  kSliceCols,
  kConcatCols,
  kBroadcast,
  kGatherRows,
  kL2NormalizeRows,
  kCrossEntropy,
  kLightNetDecay,
  kRecurrence,
  kDplrRecurrence,
  kRope,
  kLrpe,
  kTpe,
};

std::string_view to_string(OpKind kind);

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Tensor::Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Receives the output gradient and a gradient slot per input. A slot is null
/// when that input does not require a gradient.
using BackwardFn = std::function<void(const Tensor& grad_out, std::span<Tensor* const> grad_in)>;

struct TapeNode {
  OpKind kind = OpKind::kLeaf;
  std::vector<std::size_t> inputs;
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;
  BackwardFn backward;  // captures whatever forward values the rule needs
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Trainable input. Gradients are accumulated for it.
  Var leaf(Tensor value);
  /// Input that never receives a gradient.
  Var constant(Tensor value);

  /// Appends an op node. `backward` is only kept when some input needs a
  /// gradient.
  Var record(OpKind kind, Tensor value, std::span<const Var> inputs, BackwardFn backward);

  /// Reverse sweep from a single-element root. Gradients accumulate into the
  /// existing slots, so calling twice doubles them.
  void backward(Var root);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  /// Gradient of a node after backward(); zeros when nothing reached it.
  Tensor grad(Var v) const;
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  const TapeNode& node(std::size_t id) const { return nodes_.at(id); }

 private:
  std::vector<TapeNode> nodes_;
};

// ---- differentiable ops --------------------------------------------------

Var matmul(Var a, Var b);
Var transpose(Var x);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double c);
/// x + c elementwise.
Var add_constant(Var x, double c);
/// 1 - x elementwise.
Var one_minus(Var x);
/// x * s where s holds a single element.
Var scale_by(Var x, Var s);
/// x + s where s holds a single element.
Var shift_by(Var x, Var s);
Var sigmoid(Var x);
Var log_sigmoid(Var x);
Var silu(Var x);
Var exp(Var x);
Var softplus(Var x);
/// Sum of all elements, shape {1}.
Var sum(Var x);
Var mean(Var x);
Var rmsnorm(Var x, Var gamma, double eps);
/// logsumexp along the last axis of a matrix; result is rows x 1.
Var logsumexp_rows(Var x);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);
/// Repeats a single element or a rows x 1 column to rows x cols.
Var broadcast(Var x, std::size_t rows, std::size_t cols);
/// Row lookup table[ids[i]].
Var gather_rows(Var table, std::span<const int> ids);
/// Each row divided by its L2 norm (plus eps inside the square root).
Var l2_normalize_rows(Var x, double eps = 1e-12);

}  // namespace decaylab::numerics
