// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: prints one line per criterion. Exit status is 0 when
// criteria 1-10 pass; criterion 11 is reported but does not gate.
//
// Set DECAYLAB_CORPUS to train on a real text file (at least 100 KB);
// otherwise a synthetic English-like corpus is generated.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "decaylab/decay.hpp"
#include "decaylab/probe.hpp"
#include "decaylab/recurrence.hpp"
#include "decaylab/train.hpp"
#include "decaylab/verify.hpp"
#include "support/helpers.hpp"

using namespace decaylab;
using decay::Granularity;
using decay::Strategy;
using numerics::Tape;
using numerics::Tensor;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, double x) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

std::vector<int> random_tokens(std::mt19937_64& rng, std::size_t n, int vocab) {
  std::uniform_int_distribution<int> u(0, vocab - 1);
  std::vector<int> t(n);
  for (int& x : t) x = u(rng);
  return t;
}

// ---- criteria 1-5: the self-check suites at full size ----

std::vector<verify::SuiteResult> g_suites;

Outcome suite(const std::string& name, const std::string& extra = "") {
  if (g_suites.empty()) {
    verify::Options opt;
    opt.level = verify::Level::kFull;
    g_suites = verify::run_all(opt);
  }
  for (const auto& s : g_suites) {
    if (s.name == name) {
      return {s.passed, name + " suite " + fmt("%.2fs", s.seconds) + (s.detail.empty() ? "" : "; " + s.detail) + extra};
    }
  }
  return {false, "suite " + name + " missing"};
}

Outcome criterion1() {
  Outcome o = suite("oracle-equivalence", "; 200 cases per cell, n<=64, d/h<=8, tol 1e-10");
  for (const auto& s : g_suites) {
    if (s.name == "oracle-equivalence" && s.seconds >= 60.0) o = {false, "took " + fmt("%.1fs", s.seconds)};
  }
  return o;
}

// ---- criterion 6 ----

Outcome criterion6() {
  std::mt19937_64 rng(6);
  std::vector<std::string> bad;
  Tape tape;

  const Tensor f = testing::randn(200, 4, rng, 3.0);
  const Tensor lam = decay::lightnet_decay(tape.constant(f)).value();
  double ln_err = 0.0;
  for (std::size_t c = 0; c < 4; ++c) {
    if (lam.at(0, c) != 0.0) bad.push_back("lightnet lambda_1 != 0");
    double z = 0.0;
    for (std::size_t t = 0; t < 200; ++t) {
      z += std::exp(f.at(t, c));
      ln_err = std::max(ln_err, std::abs((1.0 - lam.at(t, c)) - std::exp(f.at(t, c)) / z));
    }
  }
  if (ln_err > 1e-12) bad.push_back("lightnet weight error " + fmt("%.3g", ln_err));

  if (decay::tnl_decay(1, 2, 1, 2) != std::exp(-2.0) || decay::tnl_decay(2, 2, 1, 2) != std::exp(-4.0)) {
    bad.push_back("tnl spot values");
  }
  for (int L = 1; L <= 6; ++L) {
    for (int l = 1; l <= L; ++l) {
      for (int h = 1; h <= 8; ++h) {
        for (int j = 1; j <= h; ++j) {
          const double want = std::exp(-8.0 * j / h * (1.0 - static_cast<double>(l) / L));
          if (decay::tnl_decay(j, h, l, L) != want) bad.push_back("tnl formula");
        }
      }
    }
  }

  double simple_err = 0.0;
  for (double p : {0.8, 0.9, 0.95, 0.99}) {
    simple_err = std::max(simple_err, std::abs(1.0 / (1.0 + std::exp(-decay::simple_decay_init(p))) - p));
  }
  if (simple_err > 1e-12) bad.push_back("simple decay error " + fmt("%.3g", simple_err));

  const Tensor l2 = testing::uniform(50, 8, rng, 0.0, 1.0);
  const Tensor k = decay::shared_key(tape.constant(l2)).value();
  for (std::size_t i = 0; i < l2.size(); ++i) {
    if (k[i] != 1.0 - l2[i]) {
      bad.push_back("shared key");
      break;
    }
  }

  decay::HeadScalars hs;
  hs.lower_bound = tape.constant(Tensor::scalar(0.6));
  const Tensor hg = decay::pointwise_decay(tape.constant(testing::randn(100, 100, rng, 3.0)), Strategy::kHgrn2, hs).value();
  const double hmin = *std::min_element(hg.data().begin(), hg.data().end());
  if (hmin < 0.6) bad.push_back("hgrn2 below bound");

  if (!bad.empty()) return {false, bad.front()};
  return {true, "lightnet err " + fmt("%.2g", ln_err) + ", tnl exact, simple err " + fmt("%.2g", simple_err) +
                    ", shared key exact, hgrn2 min " + fmt("%.4f", hmin) + " >= 0.6 over 1e4 draws"};
}

// ---- criterion 7 ----

Outcome criterion7() {
  std::mt19937_64 rng(7);
  const std::size_t n = 40, dk = 6;
  const Tensor q = testing::randn(n, dk, rng), k = testing::randn(n, dk, rng), v = testing::randn(n, 5, rng);
  const Tensor ls = testing::uniform(n, 1, rng, 0.0, 1.0);
  Tensor lv({n, dk});
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < dk; ++c) lv.at(t, c) = ls[t];
  }
  if (!(recurrence::forward_sequential(q, k, v, ls).output == recurrence::forward_sequential(q, k, v, lv).output)) {
    return {false, "recurrence broadcast differs"};
  }
  double worst = 0.0;
  for (Strategy s : {Strategy::kMamba2, Strategy::kGla, Strategy::kHgrn2, Strategy::kLightNet, Strategy::kSimple,
                     Strategy::kMamba2NoA, Strategy::kMamba2NoDelta, Strategy::kMamba2NoADelta}) {
    model::ModelConfig sc = testing::tiny_model();
    sc.init_std = 0.3;
    sc.decay.strategy = s;
    sc.decay.granularity = Granularity::kScalar;
    const model::ParameterSet sp = model::init_params(sc, 7);
    model::ModelConfig vc = sc;
    vc.decay.granularity = Granularity::kVector;
    const auto tokens = random_tokens(rng, 16, sc.vocab);
    worst = std::max(worst, numerics::max_abs_diff(model::logits(sc, sp, tokens),
                                                   model::logits(vc, testing::tie_scalar_to_vector(sc, sp), tokens)));
  }
  return {worst <= 1e-10, "op-level bitwise; model max diff " + fmt("%.3g", worst) + " (tol 1e-10)"};
}

// ---- criterion 8 ----

Outcome criterion8() {
  std::mt19937_64 rng(8);
  int configs = 0;
  for (Strategy s : {Strategy::kMamba2, Strategy::kGla, Strategy::kHgrn2, Strategy::kLightNet, Strategy::kTnl,
                     Strategy::kSimple}) {
    for (auto pe : {model::PosEnc::kNone, model::PosEnc::kRope, model::PosEnc::kTpe}) {
      model::ModelConfig c = testing::tiny_model();
      c.decay.strategy = s;
      if (s == Strategy::kTnl) c.decay.granularity = Granularity::kScalar;
      c.posenc = pe;
      c.init_std = 0.3;
      const model::ParameterSet ps = model::init_params(c, 8);
      const auto tokens = random_tokens(rng, 12, c.vocab);
      const Tensor base = model::logits(c, ps, tokens);
      if (!(base == model::logits(c, model::init_params(c, 8), tokens))) return {false, "logits not reproducible"};
      for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
        auto changed = tokens;
        for (std::size_t u = t + 1; u < tokens.size(); ++u) changed[u] = (changed[u] + 5) % c.vocab;
        const Tensor other = model::logits(c, ps, changed);
        for (std::size_t r = 0; r <= t; ++r) {
          for (std::size_t j = 0; j < base.cols(); ++j) {
            if (other.at(r, j) != base.at(r, j)) return {false, "future token changed position " + std::to_string(r)};
          }
        }
      }
      ++configs;
    }
  }
  model::ModelConfig mc;
  train::TrainConfig tc;
  tc.total_steps = 10;
  tc.eval_every = 5;
  tc.peak_lr = 3e-3;
  const train::Corpus corpus = train::Corpus::from_bytes(testing::corpus_text(120000), tc.val_fraction);
  const auto a = train::train_loop(mc, tc, corpus), b = train::train_loop(mc, tc, corpus);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    if (a.records[i].train_loss != b.records[i].train_loss || a.records[i].val_loss != b.records[i].val_loss) {
      return {false, "loss trajectory differs at step " + std::to_string(i)};
    }
  }
  if (!(a.params == b.params)) return {false, "final parameters differ"};
  return {true, std::to_string(configs) + " configs causal (exact); logits and 10-step loss trajectory bitwise"};
}

// ---- criteria 9 and 11 ----

struct SmokeRun {
  std::string name;
  model::ModelConfig model;
  train::TrainResult result;
  double seconds = 0.0;
};

std::vector<SmokeRun> g_runs;
std::string g_corpus;

train::TrainConfig smoke_train_config() {
  train::TrainConfig tc;
  tc.total_steps = 200;
  tc.batch_size = 8;
  tc.seq_len = 128;
  tc.peak_lr = 3e-3;
  tc.eval_every = 0;
  tc.seed = 0;
  return tc;
}

Outcome criterion9() {
  g_corpus = testing::corpus_text(120000);
  if (g_corpus.size() < 100 * 1024) return {false, "corpus smaller than 100 KB"};
  const train::Corpus corpus = train::Corpus::from_bytes(g_corpus, 0.1);
  const train::TrainConfig tc = smoke_train_config();
  std::string detail;
  bool ok = true;
  for (Strategy s : {Strategy::kMamba2, Strategy::kGla, Strategy::kHgrn2, Strategy::kLightNet, Strategy::kTnl,
                     Strategy::kSimple}) {
    model::ModelConfig mc;  // 2 layers, d = 64, h = 4, V = 256
    mc.decay.strategy = s;
    if (s == Strategy::kTnl) mc.decay.granularity = Granularity::kScalar;
    if (s == Strategy::kSimple) mc.decay.p = 0.99;
    const auto start = std::chrono::steady_clock::now();
    SmokeRun run{std::string(decay::to_string(s)), mc, train::train_loop(mc, tc, corpus), 0.0};
    run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double first = run.result.records.front().train_loss, last = run.result.records.back().train_loss;
    const bool init_ok = std::abs(first - std::log(256.0)) <= 0.02 * std::log(256.0);
    const bool drop_ok = last <= 0.8 * first;
    const bool time_ok = run.seconds <= 600.0;
    ok = ok && init_ok && drop_ok && time_ok;
    char buf[200];
    std::snprintf(buf, sizeof buf, "%s%s %.3f->%.3f (%.2fx) %.0fs%s", detail.empty() ? "" : "; ", run.name.c_str(),
                  first, last, last / first, run.seconds, init_ok && drop_ok && time_ok ? "" : " FAIL");
    detail += buf;
    std::fflush(stdout);
    g_runs.push_back(std::move(run));
  }
  return {ok, detail + "; corpus " + std::to_string(g_corpus.size()) + " bytes"};
}

Outcome criterion11() {
  for (const auto& run : g_runs) {
    if (run.name != "lightnet") continue;
    const train::Corpus corpus = train::Corpus::from_bytes(g_corpus, 0.1);
    const auto val = corpus.validation();
    const std::size_t n = std::min<std::size_t>(2048, val.size());
    const std::vector<int> tokens(val.begin(), val.begin() + static_cast<std::ptrdiff_t>(n));
    const probe::DecayTrace trace = probe::capture_trace(run.model, run.result.params, tokens);
    int above = 0;
    std::string medians;
    for (const auto& s : trace.layers) {
      above += s.median > 0.9;
      medians += (medians.empty() ? "" : ", ") + fmt("%.4f", s.median);
    }
    const bool majority = 2 * above > static_cast<int>(trace.layers.size());
    return {majority, "lightnet layer medians [" + medians + "], " + std::to_string(above) + "/" +
                          std::to_string(trace.layers.size()) + " above 0.9"};
  }
  return {false, "no lightnet run available"};
}

// ---- criterion 10 ----

Outcome criterion10() {
  std::mt19937_64 rng(10);
  for (Strategy s : {Strategy::kMamba2, Strategy::kLightNet, Strategy::kTnl, Strategy::kGla}) {
    model::ModelConfig c = testing::tiny_model();
    c.decay.strategy = s;
    if (s == Strategy::kTnl) c.decay.granularity = Granularity::kScalar;
    const model::ParameterSet ps = model::init_params(c, 10);
    const auto tokens = random_tokens(rng, 32, c.vocab);
    model::LambdaTrace trace;
    if (!(model::logits(c, ps, tokens, &trace) == model::logits(c, ps, tokens))) {
      return {false, "tracing changed logits"};
    }
  }
  model::ModelConfig tnl;
  tnl.layers = 4;
  tnl.decay.strategy = Strategy::kTnl;
  tnl.decay.granularity = Granularity::kScalar;
  const probe::DecayTrace t = probe::capture_trace(tnl, model::init_params(tnl, 1), random_tokens(rng, 64, tnl.vocab));
  for (const auto& s : t.layers) {
    std::vector<double> heads;
    for (int j = 1; j <= tnl.heads; ++j) {
      heads.push_back(std::exp(-8.0 * j / tnl.heads * (1.0 - static_cast<double>(s.layer) / tnl.layers)));
    }
    std::sort(heads.begin(), heads.end());
    const double want = (heads[1] + heads[2]) / 2.0;  // four heads, equal counts
    if (s.median != want) return {false, "tnl layer " + std::to_string(s.layer) + " median " + fmt("%.17g", s.median)};
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t n : {10000u, 10001u}) {
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    const double want = n % 2 ? sorted[n / 2] : (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
    if (probe::median(v) != want) return {false, "median differs from sort oracle"};
  }
  return {true, "tracing bitwise neutral; tnl medians exact over 4 layers; median == sort oracle on 1e4 values"};
}

}  // namespace

int main() {
  struct Entry {
    int id;
    std::function<Outcome()> run;
    bool gating;
  };
  const std::vector<Entry> entries = {
      {1, criterion1, true},
      {2, [] { return suite("chunked-vs-sequential", "; chunks {1,2,16,64,n}, n=257 ragged, tol 1e-8"); }, true},
      {3, [] { return suite("dplr", "; beta=0 <=1e-12, dense <=1e-10, overwrite <=1e-12"); }, true},
      {4, [] { return suite("rope-compatibility", "; 100 seeds, scalar and paired vector, tol 1e-8"); }, true},
      {5, [] { return suite("gradient", "; op tol 1e-4, 2-layer model tol 1e-3"); }, true},
      {6, criterion6, true},
      {7, criterion7, true},
      {8, criterion8, true},
      {9, criterion9, true},
      {10, criterion10, true},
      {11, criterion11, false},
  };
  bool all = true;
  for (const auto& e : entries) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = e.run();
    } catch (const std::exception& ex) {
      o = {false, std::string("exception: ") + ex.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %d: %s (%.1fs)%s  %s\n", e.id, o.passed ? "PASS" : "FAIL", secs,
                e.gating ? "" : " [non-gating]", o.detail.c_str());
    std::fflush(stdout);
    if (e.gating && !o.passed) all = false;
  }
  std::printf("acceptance: %s\n", all ? "PASS" : "FAIL");
  return all ? 0 : 1;
}
