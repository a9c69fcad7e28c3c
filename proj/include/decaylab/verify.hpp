// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Self-check suites behind `decaylab verify`: kernel equivalence against
// oracles, finite-difference gradients, decay identities and the RoPE/decay
// relative-form check.

#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "decaylab/decay.hpp"
#include "decaylab/tape.hpp"

namespace decaylab::verify {

using numerics::Tensor;
using numerics::Var;

enum class Level { kQuick, kFull };

struct Options {
  Level level = Level::kQuick;
  std::uint64_t seed = 1;
  /// Test fixture: perturbs the chunked kernel's carried state.
  bool inject_chunked_fault = false;
};

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

std::vector<SuiteResult> run_all(const Options& options);

/// Random decay values of shape n x 1 (scalar) or n x width for a
/// strategy/granularity pair, produced through the decay module itself.
Tensor sample_lambda(const decay::DecayConfig& config, std::size_t n, std::size_t width,
                     std::mt19937_64& rng);

Tensor random_normal(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double std = 1.0);

/// Norm-wise relative error between the tape gradient and central finite
/// differences, per input; the worst one is returned. `f` must build a
/// single-element output from the given leaves.
using Builder = std::function<Var(numerics::Tape&, std::span<const Var>)>;
double gradient_error(const Builder& f, const std::vector<Tensor>& inputs, double h = 1e-5);

}  // namespace decaylab::verify
