// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0
//
// decaylab command-line entry point.
//
//   decaylab train  --corpus FILE --out DIR [--config FILE] [--seed N]
//   decaylab probe  --checkpoint FILE --corpus FILE --out DIR [--config FILE]
//   decaylab verify [--level quick|full]
//   decaylab export --checkpoint FILE --out DIR
//
// Exit codes: 0 ok, 1 verification failure, 2 IO/config error,
// 3 checkpoint/config compatibility error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "decaylab/checkpoint.hpp"
#include "decaylab/config.hpp"
#include "decaylab/errors.hpp"
#include "decaylab/probe.hpp"
#include "decaylab/train.hpp"
#include "decaylab/verify.hpp"

namespace fs = std::filesystem;
using namespace decaylab;

namespace {

constexpr int kOk = 0;
constexpr int kVerifyFailed = 1;
constexpr int kIoOrConfig = 2;
constexpr int kIncompatible = 3;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("failed writing: " + path.string());
}

void make_out_dir(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw IoError("cannot create output directory: " + out.string());
}

config::ExperimentConfig load_config(const std::string& path) {
  return path.empty() ? config::parse_config_text("") : config::parse_config(path);
}

int cmd_train(const std::string& config_path, const std::string& corpus_path, const fs::path& out,
              std::optional<std::uint64_t> seed) {
  config::ExperimentConfig cfg = load_config(config_path);
  if (seed) {
    cfg.model.seed = *seed;
    cfg.train.seed = *seed;
  }
  if (!fs::is_regular_file(corpus_path)) throw IoError("corpus not found: " + corpus_path);
  const train::Corpus corpus = train::Corpus::from_file(corpus_path, cfg.train.val_fraction);
  make_out_dir(out);
  const std::string resolved = config::to_ini(cfg);
  write_text(out / "config.ini", resolved);
  std::cout << resolved << "\n";

  train::TrainOptions opts;
  opts.out_dir = out;
  opts.config_text = resolved;
  const int every = std::max(1, cfg.train.total_steps / 20);
  opts.on_step = [&](const train::StepRecord& r) {
    if (r.step % every == 0 || r.step + 1 == cfg.train.total_steps || r.val_loss) {
      std::printf("step %5d  lr %.3e  loss %.4f", r.step, r.lr, r.train_loss);
      if (r.val_loss) std::printf("  val %.4f", *r.val_loss);
      std::printf("\n");
      std::fflush(stdout);
    }
  };
  const train::TrainResult result = train::train_loop(cfg.model, cfg.train, corpus, opts);
  std::printf("done: %zu steps, final loss %.4f, outputs in %s\n", result.records.size(),
              result.records.back().train_loss, out.string().c_str());
  return kOk;
}

// Resolves the model config of a checkpoint; an explicit --config must agree.
config::ExperimentConfig checkpoint_config(const model::Checkpoint& ckpt, const std::string& config_path) {
  config::ExperimentConfig cfg;
  try {
    cfg = config::parse_config_text(ckpt.config_text);
  } catch (const ConfigError& e) {
    throw CompatibilityError(std::string("checkpoint carries an unusable config: ") + e.what());
  }
  if (!config_path.empty()) {
    const config::ExperimentConfig user = config::parse_config(config_path);
    model::check_compatible(user.model, ckpt.params);
    if (config::to_ini({user.model, {}, {}}) != config::to_ini({cfg.model, {}, {}})) {
      throw CompatibilityError("--config model/decay settings differ from the checkpoint's");
    }
    cfg.probe = user.probe;
  }
  model::check_compatible(cfg.model, ckpt.params);
  return cfg;
}

int cmd_probe(const std::string& ckpt_path, const std::string& config_path,
              const std::string& text_path, const fs::path& out, int seq_len_override) {
  const model::Checkpoint ckpt = model::load_checkpoint(ckpt_path);
  config::ExperimentConfig cfg = checkpoint_config(ckpt, config_path);
  if (cfg.model.decay.strategy == decay::Strategy::kNone) {
    throw ContractError("checkpoint uses decay strategy 'none'; there are no decay values to probe");
  }
  if (seq_len_override > 0) cfg.probe.seq_len = seq_len_override;
  cfg.validate();
  if (!fs::is_regular_file(text_path)) throw IoError("probe text not found: " + text_path);
  const train::Corpus text = train::Corpus::from_file(text_path, 0.0);
  if (text.size() == 0) throw IoError("probe text is empty: " + text_path);
  const std::size_t n = std::min<std::size_t>(text.size(), static_cast<std::size_t>(cfg.probe.seq_len));
  std::vector<int> tokens(text.train().begin(), text.train().begin() + static_cast<std::ptrdiff_t>(n));

  const probe::DecayTrace trace = probe::capture_trace(cfg.model, ckpt.params, tokens);
  make_out_dir(out);
  write_text(out / "config.ini", config::to_ini(cfg));
  probe::export_table(trace, out / cfg.probe.table);
  const std::string name(decay::to_string(cfg.model.decay.strategy));
  const std::vector<std::pair<std::string, probe::DecayTrace>> series = {{name, trace}};
  probe::export_plot(series, out / cfg.probe.plot);
  if (cfg.probe.raw_dump) probe::export_raw(trace, out / cfg.probe.raw);
  write_text(out / "probe_meta.txt",
             "aggregation = positions x heads x key dimensions per layer\n"
             "median = middle order statistic; mean of the two middle values for even counts\n"
             "tokens = " + std::to_string(n) + "\n"
             "checkpoint_step = " + std::to_string(ckpt.step) + "\n");
  std::cout << probe::format_table(trace);
  return kOk;
}

int cmd_verify(const std::string& level, const std::string& fault) {
  verify::Options opt;
  if (level == "quick") {
    opt.level = verify::Level::kQuick;
  } else if (level == "full") {
    opt.level = verify::Level::kFull;
  } else {
    throw ConfigError("--level must be quick or full, got '" + level + "'");
  }
  if (fault == "chunked") {
    opt.inject_chunked_fault = true;
  } else if (!fault.empty()) {
    throw ConfigError("--inject-fault supports only 'chunked'");
  }
  const auto results = verify::run_all(opt);
  std::vector<std::string> failed;
  for (const auto& r : results) {
    std::printf("%-24s %s  (%.2fs)%s%s\n", r.name.c_str(), r.passed ? "PASS" : "FAIL", r.seconds,
                r.detail.empty() ? "" : "  ", r.detail.c_str());
    if (!r.passed) failed.push_back(r.name);
  }
  if (failed.empty()) {
    std::printf("all %zu suites passed\n", results.size());
    return kOk;
  }
  std::printf("failed suites:");
  for (const auto& f : failed) std::printf(" %s", f.c_str());
  std::printf("\n");
  return kVerifyFailed;
}

int cmd_export(const std::string& ckpt_path, const fs::path& out) {
  const model::Checkpoint ckpt = model::load_checkpoint(ckpt_path);
  const config::ExperimentConfig cfg = checkpoint_config(ckpt, "");
  const auto& m = cfg.model;
  const auto& d = m.decay;
  const model::ParameterCount count = model::parameter_count_formula(m);

  auto scalars = [&](std::string_view name, bool exp_it) {
    std::string s;
    for (int l = 0; l < m.layers; ++l) {
      for (int j = 0; j < m.heads; ++j) {
        const std::string key = model::head_param(l, name, j);
        if (!ckpt.params.contains(key)) return std::string("-");
        const double x = ckpt.params.at(key).item();
        char buf[32];
        std::snprintf(buf, sizeof buf, "%s%.4g", s.empty() ? "" : " ", exp_it ? std::exp(x) : x);
        s += buf;
      }
    }
    return s;
  };
  std::string text;
  text += "| method | decay | granularity | sharing | key+decay params | total params | exp(A) | delta |\n";
  text += "|---|---|---|---|---|---|---|---|\n";
  text += "| " + std::string(decay::to_string(d.strategy)) + " | " + std::string(decay::formula(d.strategy)) +
          " | " + std::string(decay::to_string(d.granularity)) + " | " + std::string(decay::to_string(d.sharing)) +
          " | " + std::to_string(count.key + count.decay_weights + count.decay_scalars) + " | " +
          std::to_string(count.total()) + " | " + scalars("attn.log_a", true) + " | " +
          scalars("attn.delta", false) + " |\n";
  make_out_dir(out);
  write_text(out / "strategy_summary.md", text);
  std::cout << text;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"decaylab: decay mechanisms in linear attention"};
  app.require_subcommand(1);

  std::string config_path, corpus_path, out_dir, checkpoint, level = "quick", fault;
  std::uint64_t seed = 0;
  int seq_len = 0;

  auto* train_cmd = app.add_subcommand("train", "train a model on a byte corpus");
  train_cmd->add_option("--config", config_path, "experiment config (INI)");
  train_cmd->add_option("--corpus", corpus_path, "training text")->required();
  train_cmd->add_option("--out", out_dir, "output directory")->required();
  auto* seed_opt = train_cmd->add_option("--seed", seed, "overrides model and train seeds");

  auto* probe_cmd = app.add_subcommand("probe", "record decay values of a checkpoint");
  probe_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  probe_cmd->add_option("--corpus", corpus_path, "probe text")->required();
  probe_cmd->add_option("--out", out_dir, "output directory")->required();
  probe_cmd->add_option("--config", config_path, "must match the checkpoint's model; supplies [probe]");
  probe_cmd->add_option("--seq-len", seq_len, "probe length override");

  auto* verify_cmd = app.add_subcommand("verify", "run the self-check suites");
  verify_cmd->add_option("--level", level, "quick or full");
  verify_cmd->add_option("--inject-fault", fault)->group("");

  auto* export_cmd = app.add_subcommand("export", "summarise a checkpoint's decay strategy");
  export_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  export_cmd->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kIoOrConfig;
  }

  try {
    if (*train_cmd) {
      return cmd_train(config_path, corpus_path, out_dir,
                       seed_opt->count() ? std::optional<std::uint64_t>(seed) : std::nullopt);
    }
    if (*probe_cmd) return cmd_probe(checkpoint, config_path, corpus_path, out_dir, seq_len);
    if (*verify_cmd) return cmd_verify(level, fault);
    if (*export_cmd) return cmd_export(checkpoint, out_dir);
  } catch (const CompatibilityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIncompatible;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIncompatible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoOrConfig;
  }
  return kIoOrConfig;
}
