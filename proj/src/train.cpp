// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0

#include "decaylab/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <system_error>
#include <thread>

#include "decaylab/checkpoint.hpp"
#include "decaylab/errors.hpp"

namespace decaylab::train {

int TrainConfig::warmup_steps() const {
  return std::max(1, static_cast<int>(std::llround(warmup_fraction * total_steps)));
}

int TrainConfig::decay_steps() const {
  const int d = static_cast<int>(std::llround((1.0 - warmup_fraction - stable_fraction) * total_steps));
  return std::clamp(d, 0, total_steps - std::min(total_steps, warmup_steps()));
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (!(peak_lr > 0.0)) fail("peak_lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2 must be in [0, 1)");
  if (!(eps >= 0.0)) fail("eps must be >= 0");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (total_steps < 1) fail("total_steps must be >= 1");
  if (!(warmup_fraction > 0.0)) fail("warmup_fraction must be > 0");
  if (!(stable_fraction >= 0.0)) fail("stable_fraction must be >= 0");
  if (warmup_fraction + stable_fraction > 1.0 + 1e-12) {
    fail("warmup_fraction + stable_fraction must be <= 1");
  }
  if (!(final_lr_ratio > 0.0 && final_lr_ratio <= 1.0)) fail("final_lr_ratio must be in (0, 1]");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (seq_len < 1) fail("seq_len must be >= 1");
  if (!std::isfinite(grad_clip_norm)) fail("grad_clip_norm must be finite");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) fail("val_fraction must be in [0, 1)");
  if (eval_every < 0) fail("eval_every must be >= 0");
  if (eval_batches < 1) fail("eval_batches must be >= 1");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
  if (threads < 0) fail("threads must be >= 0");
}

Corpus Corpus::from_bytes(std::string bytes, double val_fraction) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw ConfigError("corpus: val_fraction must be in [0, 1)");
  }
  Corpus c;
  c.data_.assign(bytes.begin(), bytes.end());
  const auto held = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(bytes.size())));
  c.split_ = c.data_.size() - held;
  return c;
}

Corpus Corpus::from_file(const std::filesystem::path& path, double val_fraction) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read corpus: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading corpus: " + path.string());
  return from_bytes(std::move(bytes), val_fraction);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Batch next_batch(std::span<const std::uint8_t> text, const TrainConfig& config, std::uint64_t step,
                 std::uint64_t stream) {
  const auto b = static_cast<std::size_t>(config.batch_size);
  const auto n = static_cast<std::size_t>(config.seq_len);
  if (text.size() < b * (n + 1)) {
    throw DomainError("corpus too small: " + std::to_string(text.size()) + " bytes, need at least " +
                      std::to_string(b * (n + 1)) + " (batch_size x (seq_len + 1))");
  }
  const std::uint64_t windows = text.size() - n;  // valid start offsets
  const std::uint64_t key = splitmix64(splitmix64(config.seed) ^ stream) ^ splitmix64(step);
  Batch batch;
  batch.inputs.resize(b);
  batch.targets.resize(b);
  for (std::size_t i = 0; i < b; ++i) {
    const std::uint64_t offset = splitmix64(key + i) % windows;
    auto& in = batch.inputs[i];
    auto& tg = batch.targets[i];
    in.resize(n);
    tg.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
      in[t] = text[offset + t];
      tg[t] = text[offset + t + 1];
    }
  }
  return batch;
}

namespace {

void check_targets(std::size_t rows, std::size_t vocab, std::span<const int> targets) {
  if (targets.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(rows) + " rows");
  }
  for (std::size_t i = 0; i < rows; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= vocab) {
      throw DomainError("cross_entropy: target " + std::to_string(targets[i]) + " at row " +
                        std::to_string(i) + " outside [0, " + std::to_string(vocab) + ")");
    }
  }
}

// Per-row log-normaliser.
std::vector<double> row_lse(const Tensor& logits) {
  const std::size_t n = logits.rows(), v = logits.cols();
  std::vector<double> lse(n);
  for (std::size_t i = 0; i < n; ++i) lse[i] = numerics::logsumexp(logits.data().subspan(i * v, v));
  return lse;
}

}  // namespace

double cross_entropy(const Tensor& logits, std::span<const int> targets) {
  const std::size_t n = logits.rows(), v = logits.cols();
  check_targets(n, v, targets);
  const std::vector<double> lse = row_lse(logits);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += lse[i] - logits[i * v + static_cast<std::size_t>(targets[i])];
  }
  return total / static_cast<double>(n);
}

Var cross_entropy(Var logits, std::span<const int> targets) {
  const Tensor& x = logits.value();
  const std::size_t n = x.rows(), v = x.cols();
  check_targets(n, v, targets);
  std::vector<double> lse = row_lse(x);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += lse[i] - x[i * v + static_cast<std::size_t>(targets[i])];
  numerics::Tape* tape = &logits.tape();
  const std::size_t xid = logits.id();
  const Var inputs[] = {logits};
  return tape->record(
      numerics::OpKind::kCrossEntropy, Tensor::scalar(total / static_cast<double>(n)), inputs,
      [tape, xid, n, v, lse = std::move(lse), tg = std::vector<int>(targets.begin(), targets.end())](
          const Tensor& g, std::span<Tensor* const> gin) {
        const Tensor& xv = tape->value(xid);
        Tensor& gx = *gin[0];
        const double scale = g[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t c = 0; c < v; ++c) {
            gx[i * v + c] += scale * std::exp(xv[i * v + c] - lse[i]);
          }
          gx[i * v + static_cast<std::size_t>(tg[i])] -= scale;
        }
      });
}

double wsd_lr(int step, const TrainConfig& config) {
  const int total = config.total_steps;
  if (step < 0 || step >= total) {
    throw DomainError("wsd_lr: step " + std::to_string(step) + " outside [0, " +
                      std::to_string(total) + ")");
  }
  const double peak = config.peak_lr;
  const int warmup = config.warmup_steps();
  const int decay = config.decay_steps();
  if (step < warmup) return peak * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const int decay_start = total - decay;
  if (step < decay_start) return peak;
  const double frac = static_cast<double>(step - decay_start + 1) / static_cast<double>(decay);
  return peak - (peak - config.final_lr_ratio * peak) * frac;
}

void adamw_step(model::ParameterSet& params, std::span<const Tensor> grads, AdamState& state,
                int step, double lr, const TrainConfig& config) {
  if (step < 1) throw DomainError("adamw_step: step counts from 1, got " + std::to_string(step));
  if (grads.size() != params.size()) {
    throw DimensionError("adamw_step: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value.shape(), 0.0);
      state.v.emplace_back(p.value.shape(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adamw_step: moment count mismatch");
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, step);
  const double c2 = 1.0 - std::pow(b2, step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    model::Parameter& p = params[i];
    const Tensor& g = grads[i];
    if (!g.same_shape(p.value) || !state.m[i].same_shape(p.value)) {
      throw DimensionError("adamw_step: shape mismatch for '" + p.name + "': param " +
                           p.value.shape_string() + ", grad " + g.shape_string());
    }
    const double wd = p.weight_decay ? config.weight_decay : 0.0;
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t k = 0; k < g.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      const double mh = m[k] / c1;
      const double denom = std::sqrt(v[k] / c2) + config.eps;
      const double update = denom > 0.0 ? mh / denom : 0.0;
      p.value[k] -= lr * (update + wd * p.value[k]);
    }
  }
}

double global_norm(std::span<const Tensor> grads) {
  double sq = 0.0;
  for (const Tensor& g : grads) {
    for (double x : g.data()) sq += x * x;
  }
  return std::sqrt(sq);
}

double clip_gradients(std::span<Tensor> grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Tensor& g : grads) {
      for (double& x : g.storage()) x *= s;
    }
  }
  return norm;
}

namespace {

int resolve_threads(int threads, std::size_t jobs) {
  int t = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  return std::clamp(t, 1, static_cast<int>(std::max<std::size_t>(jobs, 1)));
}

// Runs fn(i) for i in [0, jobs) on up to `threads` workers.
template <typename F>
void parallel_for(std::size_t jobs, int threads, F fn) {
  const int workers = resolve_threads(threads, jobs);
  if (workers == 1) {
    for (std::size_t i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(jobs);
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < jobs; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

double loss_and_grad(const model::ModelConfig& model_config, const model::ParameterSet& params,
                     const Batch& batch, std::vector<Tensor>& grads, int threads) {
  const std::size_t b = batch.inputs.size();
  if (b == 0) throw DimensionError("loss_and_grad: empty batch");
  std::vector<double> losses(b);
  std::vector<std::vector<Tensor>> per_seq(b);
  parallel_for(b, threads, [&](std::size_t i) {
    numerics::Tape tape;
    const model::BoundParams bound(tape, params, true);
    const Var logits = model::lm_forward(batch.inputs[i], bound, model_config);
    const Var loss = cross_entropy(logits, batch.targets[i]);
    tape.backward(loss);
    losses[i] = loss.value().item();
    auto& g = per_seq[i];
    g.reserve(params.size());
    for (const Var& v : bound.vars()) g.push_back(tape.grad(v));
  });
  grads.clear();
  const double inv = 1.0 / static_cast<double>(b);
  double total = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor acc(params[p].value.shape(), 0.0);
    for (std::size_t i = 0; i < b; ++i) numerics::add_inplace(acc, per_seq[i][p]);
    for (double& x : acc.storage()) x *= inv;
    grads.push_back(std::move(acc));
  }
  for (double l : losses) total += l;
  return total * inv;
}

double batch_loss(const model::ModelConfig& model_config, const model::ParameterSet& params,
                  const Batch& batch, int threads) {
  const std::size_t b = batch.inputs.size();
  if (b == 0) throw DimensionError("batch_loss: empty batch");
  std::vector<double> losses(b);
  parallel_for(b, threads, [&](std::size_t i) {
    losses[i] = cross_entropy(model::logits(model_config, params, batch.inputs[i]), batch.targets[i]);
  });
  double total = 0.0;
  for (double l : losses) total += l;
  return total * (1.0 / static_cast<double>(b));
}

namespace {

std::string format_record(const StepRecord& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g", r.step, r.lr, r.train_loss);
  std::string line = buf;
  if (r.val_loss) {
    std::snprintf(buf, sizeof buf, ",%.17g", *r.val_loss);
    line += buf;
  }
  return line;
}

}  // namespace

TrainResult train_loop(const model::ModelConfig& model_config, const TrainConfig& config,
                       const Corpus& corpus, const TrainOptions& options) {
  model_config.validate();
  config.validate();
  const auto need = static_cast<std::size_t>(config.batch_size) * (static_cast<std::size_t>(config.seq_len) + 1);
  if (corpus.train().size() < need) {
    throw DomainError("corpus too small: training split has " + std::to_string(corpus.train().size()) +
                      " bytes, need at least " + std::to_string(need));
  }
  const bool validate = config.eval_every > 0 && corpus.validation().size() >= need;
  const bool write = !options.out_dir.empty();

  std::ofstream metrics;
  if (write) {
    std::error_code ec;
    std::filesystem::create_directories(options.out_dir, ec);
    if (ec) {
      throw IoError("cannot create output directory " + options.out_dir.string() + ": " + ec.message() +
                    "; nothing was trained");
    }
    metrics.open(options.out_dir / "metrics.csv", std::ios::trunc);
    if (!metrics) throw IoError("cannot open " + (options.out_dir / "metrics.csv").string());
  }

  TrainResult result;
  result.params = model::init_params(model_config, model_config.seed);
  AdamState state;
  std::vector<Tensor> grads;

  auto save = [&](const std::filesystem::path& path, int steps_done) {
    model::Checkpoint ckpt{options.config_text, model_config.seed, static_cast<std::uint64_t>(steps_done),
                           result.params};
    try {
      model::save_checkpoint(path, ckpt);
    } catch (const IoError& e) {
      throw IoError(std::string(e.what()) + " (aborted after " + std::to_string(steps_done) +
                    " steps; metrics.csv holds the completed steps)");
    }
  };

  for (int step = 0; step < config.total_steps; ++step) {
    const Batch batch = next_batch(corpus.train(), config, static_cast<std::uint64_t>(step));
    StepRecord rec;
    rec.step = step;
    rec.lr = wsd_lr(step, config);
    rec.train_loss = loss_and_grad(model_config, result.params, batch, grads, config.threads);
    if (!std::isfinite(rec.train_loss)) {
      throw DomainError("training diverged: non-finite loss at step " + std::to_string(step));
    }
    clip_gradients(grads, config.grad_clip_norm);
    adamw_step(result.params, grads, state, step + 1, rec.lr, config);

    const bool last = step + 1 == config.total_steps;
    if (validate && ((step + 1) % config.eval_every == 0 || last)) {
      double total = 0.0;
      for (int k = 0; k < config.eval_batches; ++k) {
        total += batch_loss(model_config, result.params,
                            next_batch(corpus.validation(), config, static_cast<std::uint64_t>(k), 1),
                            config.threads);
      }
      rec.val_loss = total / config.eval_batches;
    }
    result.records.push_back(rec);
    if (write) {
      metrics << format_record(rec) << '\n';
      metrics.flush();
      if (!metrics) {
        throw IoError("failed writing metrics.csv at step " + std::to_string(step) +
                      " (earlier steps are on disk)");
      }
      if (config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 && !last) {
        save(options.out_dir / ("checkpoint_" + std::to_string(step + 1) + ".bin"), step + 1);
      }
    }
    if (options.on_step) options.on_step(rec);
  }
  if (write) save(options.out_dir / "checkpoint.bin", config.total_steps);
  return result;
}

}  // namespace decaylab::train
