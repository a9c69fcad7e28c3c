// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared test utilities: random tensors, an independent finite-difference
// gradient oracle and a synthetic English-like corpus.

#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "decaylab/model.hpp"
#include "decaylab/tape.hpp"

namespace testing {

using decaylab::numerics::Tape;
using decaylab::numerics::Tensor;
using decaylab::numerics::Var;

Tensor randn(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double std = 1.0);
Tensor uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo, double hi);

/// Builds a scalar from leaves created for each input.
using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

struct GradReport {
  double worst = 0.0;          // largest per-input relative error
  std::size_t worst_input = 0;
};

/// Central differences per element; relative error is
/// ||analytic - numeric|| / max(||analytic||, ||numeric||, floor).
GradReport check_gradients(const ScalarFn& f, const std::vector<Tensor>& inputs, double h = 1e-5,
                           double floor = 1e-8);

/// Deterministic pseudo-English text of at least `bytes` bytes.
std::string synthetic_corpus(std::size_t bytes, std::uint64_t seed = 7);

/// Corpus from $DECAYLAB_CORPUS when set, else synthetic_corpus(bytes).
std::string corpus_text(std::size_t bytes);

/// 2-layer, d = 16, h = 2, V = 17 toy model.
decaylab::model::ModelConfig tiny_model();

/// Copy of scalar-granularity parameters laid out for the vector path with
/// every dimension tied: wd2 carries wd1^j in column j, wd3^j routes that
/// column to all outputs. Requires d/h >= h.
decaylab::model::ParameterSet tie_scalar_to_vector(const decaylab::model::ModelConfig& scalar_config,
                                                   const decaylab::model::ParameterSet& scalar_params);

}  // namespace testing
