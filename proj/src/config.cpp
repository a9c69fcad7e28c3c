// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0

#include "decaylab/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <sstream>

#include "decaylab/errors.hpp"

namespace decaylab::config {

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  if (probe.seq_len < 1) throw ConfigError("probe: seq_len must be >= 1");
  for (const std::string* name : {&probe.table, &probe.plot, &probe.raw}) {
    const std::filesystem::path p(*name);
    if (name->empty() || p.is_absolute() || p.has_parent_path()) {
      throw ConfigError("probe: output name '" + *name + "' must be a plain file name");
    }
  }
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(int line, const std::string& key, const std::string& want,
                            const std::string& got) {
  throw ConfigError("line " + std::to_string(line) + ": key '" + key + "' expects " + want +
                    ", got '" + got + "'");
}

template <typename T>
T parse_number(int line, const std::string& key, const std::string& value, const char* want) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(line, key, want, value);
  return out;
}

bool parse_bool(int line, const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad_value(line, key, "a boolean", value);
}

template <typename E>
E parse_enum(int line, const std::string& key, const std::string& value,
             std::optional<E> (*parse)(std::string_view), const char* choices) {
  const auto e = parse(value);
  if (!e) bad_value(line, key, std::string("one of ") + choices, value);
  return *e;
}

using Setter = std::function<void(ExperimentConfig&, int line, const std::string& key,
                                  const std::string& value)>;

std::map<std::string, Setter> setters() {
  std::map<std::string, Setter> s;
  auto int_field = [](auto member) {
    return [member](ExperimentConfig& c, int line, const std::string& k, const std::string& v) {
      member(c) = parse_number<int>(line, k, v, "an integer");
    };
  };
  auto u64_field = [](auto member) {
    return [member](ExperimentConfig& c, int line, const std::string& k, const std::string& v) {
      member(c) = parse_number<std::uint64_t>(line, k, v, "a non-negative integer");
    };
  };
  auto real_field = [](auto member) {
    return [member](ExperimentConfig& c, int line, const std::string& k, const std::string& v) {
      member(c) = parse_number<double>(line, k, v, "a number");
    };
  };
  auto bool_field = [](auto member) {
    return [member](ExperimentConfig& c, int line, const std::string& k, const std::string& v) {
      member(c) = parse_bool(line, k, v);
    };
  };
  auto text_field = [](auto member) {
    return [member](ExperimentConfig& c, int, const std::string&, const std::string& v) { member(c) = v; };
  };
#define M(expr) [](ExperimentConfig& c) -> auto& { return c.expr; }
  s["model.layers"] = int_field(M(model.layers));
  s["model.hidden"] = int_field(M(model.hidden));
  s["model.heads"] = int_field(M(model.heads));
  s["model.value_dim"] = int_field(M(model.value_dim));
  s["model.vocab"] = int_field(M(model.vocab));
  s["model.posenc"] = [](ExperimentConfig& c, int line, const std::string& k, const std::string& v) {
    c.model.posenc = parse_enum(line, k, v, &model::parse_posenc, "none, rope, lrpe, tpe");
  };
  s["model.transition"] = [](ExperimentConfig& c, int line, const std::string& k, const std::string& v) {
    c.model.transition = parse_enum(line, k, v, &model::parse_transition, "diagonal, dplr");
  };
  s["model.tie_embeddings"] = bool_field(M(model.tie_embeddings));
  s["model.seed"] = u64_field(M(model.seed));
  s["model.glu_ratio"] = real_field(M(model.glu_ratio));
  s["model.rope_base"] = real_field(M(model.rope_base));
  s["model.tpe_states"] = int_field(M(model.tpe_states));
  s["model.norm_eps"] = real_field(M(model.norm_eps));
  s["model.init_std"] = real_field(M(model.init_std));

  s["decay.strategy"] = [](ExperimentConfig& c, int line, const std::string& k, const std::string& v) {
    c.model.decay.strategy = parse_enum(
        line, k, v, &decay::parse_strategy,
        "mamba2, mamba2_no_a, mamba2_no_delta, mamba2_no_a_delta, gla, hgrn2, lightnet, tnl, tnl_l, "
        "simple, none");
  };
  s["decay.granularity"] = [](ExperimentConfig& c, int line, const std::string& k, const std::string& v) {
    c.model.decay.granularity = parse_enum(line, k, v, &decay::parse_granularity, "scalar, vector");
  };
  s["decay.sharing"] = [](ExperimentConfig& c, int line, const std::string& k, const std::string& v) {
    c.model.decay.sharing = parse_enum(line, k, v, &decay::parse_sharing, "independent, shared");
  };
  s["decay.tau"] = real_field(M(model.decay.tau));
  s["decay.hgrn2_lower_bound"] = [](ExperimentConfig& c, int line, const std::string& k,
                                    const std::string& v) {
    if (v == "auto") {
      c.model.decay.hgrn2_lower_bound.reset();
    } else {
      c.model.decay.hgrn2_lower_bound = parse_number<double>(line, k, v, "a number or 'auto'");
    }
  };
  s["decay.p"] = real_field(M(model.decay.p));
  s["decay.mamba2_a_min"] = real_field(M(model.decay.mamba2_a_min));
  s["decay.mamba2_a_max"] = real_field(M(model.decay.mamba2_a_max));
  s["decay.mamba2_base_decay"] = real_field(M(model.decay.mamba2_base_decay));

  s["train.peak_lr"] = real_field(M(train.peak_lr));
  s["train.beta1"] = real_field(M(train.beta1));
  s["train.beta2"] = real_field(M(train.beta2));
  s["train.eps"] = real_field(M(train.eps));
  s["train.weight_decay"] = real_field(M(train.weight_decay));
  s["train.total_steps"] = int_field(M(train.total_steps));
  s["train.warmup_fraction"] = real_field(M(train.warmup_fraction));
  s["train.stable_fraction"] = real_field(M(train.stable_fraction));
  s["train.final_lr_ratio"] = real_field(M(train.final_lr_ratio));
  s["train.batch_size"] = int_field(M(train.batch_size));
  s["train.seq_len"] = int_field(M(train.seq_len));
  s["train.seed"] = u64_field(M(train.seed));
  s["train.grad_clip_norm"] = real_field(M(train.grad_clip_norm));
  s["train.val_fraction"] = real_field(M(train.val_fraction));
  s["train.eval_every"] = int_field(M(train.eval_every));
  s["train.eval_batches"] = int_field(M(train.eval_batches));
  s["train.checkpoint_every"] = int_field(M(train.checkpoint_every));
  s["train.threads"] = int_field(M(train.threads));

  s["probe.seq_len"] = int_field(M(probe.seq_len));
  s["probe.table"] = text_field(M(probe.table));
  s["probe.plot"] = text_field(M(probe.plot));
  s["probe.raw_dump"] = bool_field(M(probe.raw_dump));
  s["probe.raw"] = text_field(M(probe.raw));
#undef M
  return s;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  static const std::map<std::string, Setter> table = setters();
  ExperimentConfig cfg;
  std::map<std::string, int> seen;  // key -> line
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = trim(std::string_view(raw).substr(0, hash));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') throw ConfigError("line " + std::to_string(line) + ": malformed section header");
      section = trim(std::string_view(body).substr(1, body.size() - 2));
      if (section != "model" && section != "decay" && section != "train" && section != "probe") {
        throw ConfigError("line " + std::to_string(line) + ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line) + ": expected 'key = value', got '" + body + "'");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (section.empty()) {
      throw ConfigError("line " + std::to_string(line) + ": key '" + key + "' appears before any section");
    }
    const std::string full = section + "." + key;
    auto it = table.find(full);
    if (it == table.end()) {
      throw ConfigError("line " + std::to_string(line) + ": unknown key '" + key + "' in [" + section + "]");
    }
    if (seen.contains(full)) {
      throw ConfigError("line " + std::to_string(line) + ": key '" + key + "' already set on line " +
                        std::to_string(seen[full]));
    }
    seen[full] = line;
    it->second(cfg, line, key, value);
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    std::string where;
    for (const auto& [full, at] : seen) {
      const std::string key = full.substr(full.find('.') + 1);
      if (msg.find(key) != std::string::npos) {
        where += (where.empty() ? " (" : ", ") + std::string("'") + key + "' on line " + std::to_string(at);
      }
    }
    if (!where.empty()) msg += where + ")";
    throw ConfigError(msg);
  }
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config: " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

namespace {

std::string real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

std::string to_ini(const ExperimentConfig& c) {
  std::ostringstream o;
  const auto& m = c.model;
  const auto& d = m.decay;
  const auto& t = c.train;
  auto b = [](bool x) { return x ? "true" : "false"; };
  o << "[model]\n"
    << "layers = " << m.layers << "\n"
    << "hidden = " << m.hidden << "\n"
    << "heads = " << m.heads << "\n"
    << "value_dim = " << m.value_dim << "\n"
    << "vocab = " << m.vocab << "\n"
    << "posenc = " << model::to_string(m.posenc) << "\n"
    << "transition = " << model::to_string(m.transition) << "\n"
    << "tie_embeddings = " << b(m.tie_embeddings) << "\n"
    << "seed = " << m.seed << "\n"
    << "glu_ratio = " << real(m.glu_ratio) << "\n"
    << "rope_base = " << real(m.rope_base) << "\n"
    << "tpe_states = " << m.tpe_states << "\n"
    << "norm_eps = " << real(m.norm_eps) << "\n"
    << "init_std = " << real(m.init_std) << "\n\n";
  o << "[decay]\n"
    << "strategy = " << decay::to_string(d.strategy) << "\n"
    << "granularity = " << decay::to_string(d.granularity) << "\n"
    << "sharing = " << decay::to_string(d.sharing) << "\n"
    << "tau = " << real(d.tau) << "\n"
    << "hgrn2_lower_bound = " << (d.hgrn2_lower_bound ? real(*d.hgrn2_lower_bound) : "auto") << "\n"
    << "p = " << real(d.p) << "\n"
    << "mamba2_a_min = " << real(d.mamba2_a_min) << "\n"
    << "mamba2_a_max = " << real(d.mamba2_a_max) << "\n"
    << "mamba2_base_decay = " << real(d.mamba2_base_decay) << "\n\n";
  o << "[train]\n"
    << "peak_lr = " << real(t.peak_lr) << "\n"
    << "beta1 = " << real(t.beta1) << "\n"
    << "beta2 = " << real(t.beta2) << "\n"
    << "eps = " << real(t.eps) << "\n"
    << "weight_decay = " << real(t.weight_decay) << "\n"
    << "total_steps = " << t.total_steps << "\n"
    << "warmup_fraction = " << real(t.warmup_fraction) << "\n"
    << "stable_fraction = " << real(t.stable_fraction) << "\n"
    << "final_lr_ratio = " << real(t.final_lr_ratio) << "\n"
    << "batch_size = " << t.batch_size << "\n"
    << "seq_len = " << t.seq_len << "\n"
    << "seed = " << t.seed << "\n"
    << "grad_clip_norm = " << real(t.grad_clip_norm) << "\n"
    << "val_fraction = " << real(t.val_fraction) << "\n"
    << "eval_every = " << t.eval_every << "\n"
    << "eval_batches = " << t.eval_batches << "\n"
    << "checkpoint_every = " << t.checkpoint_every << "\n"
    << "threads = " << t.threads << "\n\n";
  o << "[probe]\n"
    << "seq_len = " << c.probe.seq_len << "\n"
    << "table = " << c.probe.table << "\n"
    << "plot = " << c.probe.plot << "\n"
    << "raw_dump = " << b(c.probe.raw_dump) << "\n"
    << "raw = " << c.probe.raw << "\n";
  return o.str();
}

}  // namespace decaylab::config
