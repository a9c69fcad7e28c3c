// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Byte-level language-model training: batching, loss, AdamW and the
// warmup-stable-decay schedule.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "decaylab/model.hpp"

namespace decaylab::train {

using numerics::Tensor;
using numerics::Var;

struct TrainConfig {
  double peak_lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.1;
  int total_steps = 1000;
  double warmup_fraction = 0.05;
  double stable_fraction = 0.75;
  double final_lr_ratio = 0.1;
  int batch_size = 8;
  int seq_len = 128;
  std::uint64_t seed = 0;
  double grad_clip_norm = 1.0;  // <= 0 disables clipping
  double val_fraction = 0.1;    // tail of the corpus held out
  int eval_every = 50;          // 0 disables validation
  int eval_batches = 2;
  int checkpoint_every = 0;     // 0: final checkpoint only
  int threads = 0;              // 0: hardware concurrency

  int warmup_steps() const;
  int decay_steps() const;
  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Raw bytes split into a training prefix and a validation tail.
class Corpus {
 public:
  static Corpus from_bytes(std::string bytes, double val_fraction);
  /// IoError naming the path when it cannot be read.
  static Corpus from_file(const std::filesystem::path& path, double val_fraction);

  std::span<const std::uint8_t> train() const { return {data_.data(), split_}; }
  std::span<const std::uint8_t> validation() const {
    return {data_.data() + split_, data_.size() - split_};
  }
  std::size_t size() const { return data_.size(); }

 private:
  std::vector<std::uint8_t> data_;
  std::size_t split_ = 0;
};

struct Batch {
  std::vector<std::vector<int>> inputs;   // batch x seq
  std::vector<std::vector<int>> targets;  // inputs shifted by one
};

/// Window offsets come from a counter-based hash of (seed, stream, step, row),
/// so any batch can be regenerated without replaying earlier ones.
/// DomainError when the text is shorter than batch_size * (seq_len + 1).
Batch next_batch(std::span<const std::uint8_t> text, const TrainConfig& config, std::uint64_t step,
                 std::uint64_t stream = 0);

/// Mean over rows of -log softmax(logits)[target].
double cross_entropy(const Tensor& logits, std::span<const int> targets);
Var cross_entropy(Var logits, std::span<const int> targets);

/// DomainError unless 0 <= step < total_steps.
double wsd_lr(int step, const TrainConfig& config);

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// One decoupled-weight-decay Adam update, `step` counted from 1. Weight
/// decay is skipped for parameters flagged without it.
void adamw_step(model::ParameterSet& params, std::span<const Tensor> grads, AdamState& state,
                int step, double lr, const TrainConfig& config);

double global_norm(std::span<const Tensor> grads);
/// Rescales to max_norm when the global norm exceeds it; returns the norm
/// before clipping.
double clip_gradients(std::span<Tensor> grads, double max_norm);

/// Mean loss and its gradient over a batch. Sequences run on independent
/// tapes in parallel; gradients are reduced in sequence order.
double loss_and_grad(const model::ModelConfig& model_config, const model::ParameterSet& params,
                     const Batch& batch, std::vector<Tensor>& grads, int threads = 1);
double batch_loss(const model::ModelConfig& model_config, const model::ParameterSet& params,
                  const Batch& batch, int threads = 1);

struct StepRecord {
  int step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
};

struct TrainResult {
  std::vector<StepRecord> records;
  model::ParameterSet params;
};

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: no files written
  std::string config_text;        // echoed into checkpoints
  std::function<void(const StepRecord&)> on_step;
};

/// Writes metrics.csv (one `step,lr,train_loss[,val_loss]` line per step),
/// checkpoint_<step>.bin every checkpoint_every steps and checkpoint.bin at
/// the end.
TrainResult train_loop(const model::ModelConfig& model_config, const TrainConfig& config,
                       const Corpus& corpus, const TrainOptions& options = {});

}  // namespace decaylab::train
