// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Decay-value instrumentation: run one forward pass with lambda capture and
// summarise the samples per layer. Each layer pools every position, head and
// key dimension into one sample set.

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "decaylab/model.hpp"

namespace decaylab::probe {

struct LayerStats {
  int layer = 0;  // 1-based
  std::size_t count = 0;
  double min = 0.0;
  double median = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

struct DecayTrace {
  std::vector<LayerStats> layers;
  model::LambdaTrace raw;  // samples per (layer, head)
};

/// Odd count: middle order statistic; even: mean of the two middle ones.
/// DomainError on empty input.
double median(std::span<const double> values);

/// Summary of one layer's pooled samples.
LayerStats summarize(int layer, std::span<const double> values);

/// ContractError when the model has no decay (strategy none).
DecayTrace capture_trace(const model::ModelConfig& config, const model::ParameterSet& params,
                         std::span<const int> tokens);

/// Header `layer,count,min,median,mean,max`, values with 9 significant digits.
void export_table(const DecayTrace& trace, const std::filesystem::path& path);
std::string format_table(const DecayTrace& trace);
/// Parses what format_table writes.
std::vector<LayerStats> parse_table(const std::string& text);

/// `layer,position,head,dim,value` with full precision.
void export_raw(const DecayTrace& trace, const std::filesystem::path& path);

/// SVG line chart of layer index vs median, one series per named trace,
/// y fixed to [0, 1].
void export_plot(std::span<const std::pair<std::string, DecayTrace>> traces,
                 const std::filesystem::path& path);
std::string render_plot(std::span<const std::pair<std::string, DecayTrace>> traces);

}  // namespace decaylab::probe
