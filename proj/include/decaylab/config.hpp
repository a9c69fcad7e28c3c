// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration in a small INI dialect:
//
//   # comment
//   [model]
//   layers = 2
//   [decay]
//   strategy = mamba2
//
// Sections are [model], [decay], [train] and [probe]. Absent keys keep their
// defaults; unknown keys, malformed values and violated invariants are
// ConfigErrors that name the key and line.

#pragma once

#include <filesystem>
#include <string>

#include "decaylab/model.hpp"
#include "decaylab/train.hpp"

namespace decaylab::config {

struct ProbeConfig {
  int seq_len = 2048;
  std::string table = "decay_table.csv";
  std::string plot = "decay_plot.svg";
  bool raw_dump = false;
  std::string raw = "decay_raw.csv";
};

struct ExperimentConfig {
  model::ModelConfig model;
  train::TrainConfig train;
  ProbeConfig probe;

  void validate() const;
};

ExperimentConfig parse_config_text(const std::string& text);
/// IoError when the file cannot be read.
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Full resolved config; parse_config_text(to_ini(c)) reproduces c exactly.
std::string to_ini(const ExperimentConfig& config);

}  // namespace decaylab::config
