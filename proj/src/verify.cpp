// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0

#include "decaylab/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "decaylab/model.hpp"
#include "decaylab/posenc.hpp"
#include "decaylab/recurrence.hpp"
#include "decaylab/train.hpp"

namespace decaylab::verify {

using decay::Granularity;
using decay::Sharing;
using decay::Strategy;

Tensor random_normal(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double std) {
  std::normal_distribution<double> dist(0.0, std);
  Tensor t({rows, cols});
  for (double& x : t.storage()) x = dist(rng);
  return t;
}

Tensor sample_lambda(const decay::DecayConfig& config, std::size_t n, std::size_t width,
                     std::mt19937_64& rng) {
  const Strategy s = config.strategy;
  const std::size_t cols = config.granularity == Granularity::kScalar ? 1 : width;
  numerics::Tape tape;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (decay::is_pointwise(s) || s == Strategy::kLightNet) {
    const Var f = tape.constant(random_normal(n, cols, rng, 3.0));
    if (s == Strategy::kLightNet) return decay::lightnet_decay(f).value();
    decay::HeadScalars hs;
    hs.log_a = tape.constant(Tensor::scalar(std::log(1.0 + 15.0 * unit(rng))));
    hs.delta = tape.constant(Tensor::scalar(random_normal(1, 1, rng)[0]));
    hs.inv_tau = tape.constant(Tensor::scalar(1.0 / config.tau));
    hs.lower_bound = tape.constant(Tensor::scalar(0.9 * unit(rng)));
    return decay::pointwise_decay(f, s, hs).value();
  }
  std::uniform_int_distribution<int> pick(1, 4);
  const int heads = pick(rng), layers = pick(rng);
  const int head = std::uniform_int_distribution<int>(1, heads)(rng);
  const int layer = std::uniform_int_distribution<int>(1, layers)(rng);
  std::optional<Var> g;
  if (s == Strategy::kTnlL) g = tape.constant(Tensor::scalar(random_normal(1, 1, rng)[0]));
  return decay::constant_decay(tape, s, n, head, heads, layer, layers, g).value();
}

double gradient_error(const Builder& f, const std::vector<Tensor>& inputs, double h) {
  numerics::Tape tape;
  std::vector<Var> leaves;
  for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
  const Var out = f(tape, leaves);
  tape.backward(out);

  auto eval = [&](const std::vector<Tensor>& xs) {
    numerics::Tape t2;
    std::vector<Var> ls;
    for (const Tensor& t : xs) ls.push_back(t2.constant(t));
    return f(t2, ls).value().item();
  };
  double worst = 0.0;
  std::vector<Tensor> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor analytic = tape.grad(leaves[i]);
    double diff = 0.0, norm_a = 0.0, norm_n = 0.0;
    for (std::size_t k = 0; k < inputs[i].size(); ++k) {
      const double x0 = inputs[i][k];
      probe[i][k] = x0 + h;
      const double up = eval(probe);
      probe[i][k] = x0 - h;
      const double down = eval(probe);
      probe[i][k] = x0;
      const double numeric = (up - down) / (2.0 * h);
      diff += (numeric - analytic[k]) * (numeric - analytic[k]);
      norm_a += analytic[k] * analytic[k];
      norm_n += numeric * numeric;
    }
    const double scale = std::max({std::sqrt(norm_a), std::sqrt(norm_n), 1e-8});
    worst = std::max(worst, std::sqrt(diff) / scale);
  }
  return worst;
}

namespace {

struct Check {
  bool ok = true;
  std::string detail;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

std::vector<decay::DecayConfig> all_cells() {
  std::vector<decay::DecayConfig> cells;
  for (int s = 0; s <= static_cast<int>(Strategy::kNone); ++s) {
    for (Granularity g : {Granularity::kScalar, Granularity::kVector}) {
      for (Sharing sh : {Sharing::kIndependent, Sharing::kShared}) {
        decay::DecayConfig c;
        c.strategy = static_cast<Strategy>(s);
        c.granularity = g;
        c.sharing = sh;
        try {
          c.validate();
        } catch (const std::exception&) {
          continue;
        }
        cells.push_back(c);
      }
    }
  }
  return cells;
}

std::string cell_name(const decay::DecayConfig& c) {
  return std::string(decay::to_string(c.strategy)) + "/" + std::string(decay::to_string(c.granularity)) +
         "/" + std::string(decay::to_string(c.sharing));
}

Check oracle_suite(const Options& opt) {
  Check ck;
  std::mt19937_64 rng(opt.seed);
  const int cases = opt.level == Level::kFull ? 200 : 20;
  std::uniform_int_distribution<std::size_t> len(1, 64), width(1, 8);
  for (const auto& cell : all_cells()) {
    double worst = 0.0;
    for (int c = 0; c < cases; ++c) {
      const std::size_t n = len(rng), dk = width(rng), dv = width(rng);
      const Tensor lambda = sample_lambda(cell, n, dk, rng);
      const Tensor q = random_normal(n, dk, rng);
      Tensor k = random_normal(n, dk, rng);
      if (cell.sharing == Sharing::kShared) {
        for (std::size_t i = 0; i < k.size(); ++i) k[i] = 1.0 - lambda[i];
      }
      const Tensor v = random_normal(n, dv, rng);
      const Tensor seq = recurrence::forward_sequential(q, k, v, lambda).output;
      worst = std::max(worst, numerics::max_abs_diff(seq, recurrence::forward_oracle(q, k, v, lambda)));
    }
    ck.expect(worst <= 1e-10, cell_name(cell) + " deviates by " + fmt("%.3g", worst));
  }
  return ck;
}

Tensor chunked(const Options& opt, const Tensor& q, const Tensor& k, const Tensor& v,
               const Tensor& lambda, std::size_t chunk) {
  Tensor out = recurrence::forward_chunked(q, k, v, lambda, chunk);
  if (opt.inject_chunked_fault) {
    // Simulated broken carry: everything after the first chunk drifts.
    for (std::size_t t = chunk; t < out.rows(); ++t) {
      for (std::size_t j = 0; j < out.cols(); ++j) out.at(t, j) += 1e-3;
    }
  }
  return out;
}

Check chunked_suite(const Options& opt) {
  Check ck;
  std::mt19937_64 rng(opt.seed + 1);
  const int cases = opt.level == Level::kFull ? 20 : 4;
  decay::DecayConfig vec;
  vec.strategy = Strategy::kGla;
  decay::DecayConfig sca = vec;
  sca.granularity = Granularity::kScalar;
  double worst = 0.0;
  for (int c = 0; c < cases; ++c) {
    const std::size_t n = c == 0 ? 257 : std::uniform_int_distribution<std::size_t>(1, 130)(rng);
    const std::size_t dk = 8, dv = 8;
    const Tensor lambda = sample_lambda(c % 2 ? sca : vec, n, dk, rng);
    const Tensor q = random_normal(n, dk, rng), k = random_normal(n, dk, rng), v = random_normal(n, dv, rng);
    const Tensor seq = recurrence::forward_sequential(q, k, v, lambda).output;
    for (std::size_t chunk : {std::size_t{1}, std::size_t{2}, std::size_t{16}, std::size_t{64}, n}) {
      worst = std::max(worst, numerics::max_abs_diff(seq, chunked(opt, q, k, v, lambda, chunk)));
    }
  }
  ck.expect(worst <= 1e-8, "chunked deviates from sequential by " + fmt("%.3g", worst));
  return ck;
}

Check dplr_suite(const Options& opt) {
  Check ck;
  std::mt19937_64 rng(opt.seed + 2);
  const int cases = opt.level == Level::kFull ? 50 : 10;
  double zero_beta = 0.0, dense = 0.0;
  for (int c = 0; c < cases; ++c) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 32)(rng), dk = 6, dv = 5;
    decay::DecayConfig cfg;
    const Tensor lambda = sample_lambda(cfg, n, dk, rng);
    const Tensor q = random_normal(n, dk, rng), k = random_normal(n, dk, rng), v = random_normal(n, dv, rng);
    recurrence::DplrParams p{random_normal(n, dk, rng), Tensor({n, 1}, 0.0), true};
    zero_beta = std::max(zero_beta, numerics::max_abs_diff(recurrence::forward_dplr(q, k, v, lambda, p).output,
                                                           recurrence::forward_sequential(q, k, v, lambda).output));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (double& b : p.beta.storage()) b = unit(rng);
    dense = std::max(dense, numerics::max_abs_diff(recurrence::forward_dplr(q, k, v, lambda, p).output,
                                                   recurrence::forward_dplr_dense(q, k, v, lambda, p)));
  }
  ck.expect(zero_beta <= 1e-12, "beta = 0 differs from diagonal by " + fmt("%.3g", zero_beta));
  ck.expect(dense <= 1e-10, "dense oracle differs by " + fmt("%.3g", dense));

  // Overwrite: lambda = 1, beta = 1, repeated unit key.
  const Tensor kappa = Tensor::matrix({{0.6, 0.8}, {0.6, 0.8}});
  const Tensor v = Tensor::matrix({{1.0, -2.0, 3.0}, {4.0, 5.0, -6.0}});
  const Tensor q = Tensor::matrix({{0.0, 0.0}, {0.0, 0.0}});
  const recurrence::ScanResult r =
      recurrence::forward_dplr(q, kappa, v, Tensor({2, 1}, 1.0), {kappa, Tensor({2, 1}, 1.0), false});
  double err = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 3; ++j) err = std::max(err, std::abs(r.final_state.at(i, j) - kappa.at(0, i) * v.at(1, j)));
  }
  ck.expect(err <= 1e-12, "delta-rule overwrite off by " + fmt("%.3g", err));
  return ck;
}

Check rope_suite(const Options& opt) {
  Check ck;
  const int seeds = opt.level == Level::kFull ? 100 : 20;
  double worst = 0.0;
  for (int s = 0; s < seeds; ++s) {
    std::mt19937_64 rng(opt.seed * 1000 + static_cast<std::uint64_t>(s));
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 32)(rng), dh = 8, dv = 4;
    const auto params = posenc::RopeParams::make(dh);
    const Tensor q = random_normal(n, dh, rng), k = random_normal(n, dh, rng), v = random_normal(n, dv, rng);
    decay::DecayConfig sc;
    sc.granularity = Granularity::kScalar;
    worst = std::max(worst, posenc::rope_decay_equivalence(q, k, v, sample_lambda(sc, n, dh, rng), params));
    const Tensor half = sample_lambda(decay::DecayConfig{}, n, dh / 2, rng);
    Tensor paired({n, dh});
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t p = 0; p < dh / 2; ++p) {
        paired[t * dh + 2 * p] = paired[t * dh + 2 * p + 1] = half[t * (dh / 2) + p];
      }
    }
    worst = std::max(worst, posenc::rope_decay_equivalence(q, k, v, paired, params));
  }
  ck.expect(worst <= 1e-8, "relative form deviates by " + fmt("%.3g", worst));
  return ck;
}

Check gradient_suite(const Options& opt) {
  using namespace numerics;
  Check ck;
  std::mt19937_64 rng(opt.seed + 3);
  auto op = [&](const std::string& name, const Builder& f, const std::vector<Tensor>& in, double tol) {
    const double e = gradient_error(f, in);
    ck.expect(e <= tol, name + " gradient error " + fmt("%.3g", e));
  };
  // A random linear readout turns any output into a scalar.
  auto readout = [&](std::size_t rows, std::size_t cols) { return random_normal(rows, cols, rng); };

  for (Strategy s : {Strategy::kMamba2, Strategy::kMamba2NoA, Strategy::kMamba2NoDelta,
                     Strategy::kMamba2NoADelta, Strategy::kGla, Strategy::kHgrn2, Strategy::kSimple}) {
    const Tensor w = readout(5, 3);
    op(std::string(decay::to_string(s)),
       [s, w](Tape& t, std::span<const Var> x) {
         decay::HeadScalars hs{x[1], x[2], x[3], x[4]};
         return sum(mul(decay::pointwise_decay(x[0], s, hs), t.constant(w)));
       },
       {random_normal(5, 3, rng), Tensor::scalar(0.3), Tensor::scalar(-0.4), Tensor::scalar(1.0 / 16),
        Tensor::scalar(0.4)},
       1e-4);
  }
  {
    const Tensor w = readout(6, 3);
    op("lightnet", [w](Tape& t, std::span<const Var> x) { return sum(mul(decay::lightnet_decay(x[0]), t.constant(w))); },
       {random_normal(6, 3, rng)}, 1e-4);
  }
  for (bool scalar : {false, true}) {
    const Tensor w = readout(7, 3);
    std::uniform_real_distribution<double> unit(0.2, 0.95);
    Tensor lambda({7, scalar ? 1u : 4u});
    for (double& x : lambda.storage()) x = unit(rng);
    op(scalar ? "recurrence/scalar" : "recurrence/vector",
       [w](Tape& t, std::span<const Var> x) {
         return sum(mul(recurrence::forward_sequential(x[0], x[1], x[2], x[3]), t.constant(w)));
       },
       {random_normal(7, 4, rng), random_normal(7, 4, rng), random_normal(7, 3, rng), lambda}, 1e-4);
  }
  {
    const Tensor w = readout(5, 4);
    op("glu",
       [w](Tape& t, std::span<const Var> x) {
         return sum(mul(model::glu_forward(x[0], x[1], x[2], x[3]), t.constant(w)));
       },
       {random_normal(5, 4, rng), random_normal(4, 8, rng), random_normal(4, 8, rng), random_normal(8, 4, rng)},
       1e-4);
  }
  {
    const Tensor w = readout(5, 6);
    op("rmsnorm",
       [w](Tape& t, std::span<const Var> x) { return sum(mul(rmsnorm(x[0], x[1], 1e-6), t.constant(w))); },
       {random_normal(5, 6, rng), random_normal(1, 6, rng)}, 1e-4);
  }
  {
    const std::vector<int> targets = {1, 0, 4, 4, 2};
    op("cross_entropy", [targets](Tape&, std::span<const Var> x) { return train::cross_entropy(x[0], targets); },
       {random_normal(5, 5, rng)}, 1e-4);
  }
  if (opt.level == Level::kFull) {
    model::ModelConfig mc;
    mc.layers = 2;
    mc.hidden = 16;
    mc.heads = 2;
    mc.vocab = 17;
    mc.init_std = 0.3;
    const model::ParameterSet ps = model::init_params(mc, opt.seed);
    const std::vector<int> tokens = {3, 16, 0, 7, 7, 2, 11, 5};
    const std::vector<int> targets = {16, 0, 7, 7, 2, 11, 5, 9};
    std::vector<Tensor> values;
    for (const auto& p : ps) values.push_back(p.value);
    op("model",
       [&](Tape&, std::span<const Var> x) {
         const model::BoundParams bound(ps, std::vector<Var>(x.begin(), x.end()));
         return train::cross_entropy(model::lm_forward(tokens, bound, mc), targets);
       },
       values, 1e-3);
  }
  return ck;
}

Check identity_suite(const Options& opt) {
  using namespace numerics;
  Check ck;
  std::mt19937_64 rng(opt.seed + 4);
  {
    Tape tape;
    const Tensor f = random_normal(20, 3, rng, 3.0);
    const Tensor lambda = decay::lightnet_decay(tape.constant(f)).value();
    double err = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      ck.expect(lambda.at(0, c) == 0.0, "lightnet lambda_1 is not 0");
      std::vector<double> prefix;
      for (std::size_t t = 0; t < 20; ++t) {
        prefix.push_back(f.at(t, c));
        const double weight = std::exp(f.at(t, c) - logsumexp(prefix));
        err = std::max(err, std::abs((1.0 - lambda.at(t, c)) - weight));
      }
    }
    ck.expect(err <= 1e-12, "lightnet 1 - lambda off the softmax weight by " + fmt("%.3g", err));
  }
  ck.expect(decay::tnl_decay(1, 2, 1, 2) == std::exp(-2.0), "tnl(1,2,1,2) != exp(-2)");
  ck.expect(decay::tnl_decay(2, 2, 1, 2) == std::exp(-4.0), "tnl(2,2,1,2) != exp(-4)");
  for (double p : {0.8, 0.9, 0.95, 0.99}) {
    const double e = std::abs(sigmoid(decay::simple_decay_init(p)) - p);
    ck.expect(e <= 1e-12, "sigmoid(delta(" + fmt("%g", p) + ")) off by " + fmt("%.3g", e));
  }
  {
    Tape tape;
    const Tensor lambda = Tensor::matrix({{1.0, 0.0, 0.75}});
    const Tensor k = decay::shared_key(tape.constant(lambda)).value();
    ck.expect(k == Tensor::matrix({{0.0, 1.0, 0.25}}), "shared key is not 1 - lambda");
  }
  {
    Tape tape;
    const double lb = 0.6;
    decay::HeadScalars hs;
    hs.lower_bound = tape.constant(Tensor::scalar(lb));
    const Tensor lambda =
        decay::pointwise_decay(tape.constant(random_normal(100, 100, rng, 3.0)), Strategy::kHgrn2, hs).value();
    double low = 1.0;
    for (double x : lambda.data()) low = std::min(low, x);
    ck.expect(low >= lb, "hgrn2 dipped below its lower bound: " + fmt("%.17g", low));
  }
  return ck;
}

}  // namespace

std::vector<SuiteResult> run_all(const Options& options) {
  const std::pair<const char*, Check (*)(const Options&)> suites[] = {
      {"oracle-equivalence", oracle_suite}, {"chunked-vs-sequential", chunked_suite},
      {"dplr", dplr_suite},                 {"rope-compatibility", rope_suite},
      {"gradient", gradient_suite},         {"decay-identities", identity_suite},
  };
  std::vector<SuiteResult> out;
  for (const auto& [name, fn] : suites) {
    const auto t0 = std::chrono::steady_clock::now();
    SuiteResult r;
    r.name = name;
    try {
      const Check ck = fn(options);
      r.passed = ck.ok;
      r.detail = ck.detail;
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace decaylab::verify
