// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "decaylab/decay.hpp"
#include "decaylab/errors.hpp"
#include "doctest.h"
#include "support/helpers.hpp"

using namespace decaylab;
using namespace decaylab::decay;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

namespace {

Tensor eval(Strategy s, const Tensor& f, double log_a = 0.0, double delta = 0.0, double tau = 16.0,
            double lb = 0.5) {
  Tape tape;
  HeadScalars hs;
  hs.log_a = tape.constant(Tensor::scalar(log_a));
  hs.delta = tape.constant(Tensor::scalar(delta));
  hs.inv_tau = tape.constant(Tensor::scalar(1.0 / tau));
  hs.lower_bound = tape.constant(Tensor::scalar(lb));
  return pointwise_decay(tape.constant(f), s, hs).value();
}

const Strategy kPointwise[] = {Strategy::kMamba2, Strategy::kMamba2NoA, Strategy::kMamba2NoDelta,
                               Strategy::kMamba2NoADelta, Strategy::kGla, Strategy::kHgrn2,
                               Strategy::kSimple};

}  // namespace

TEST_CASE("pointwise formulas at spot values") {
  const Tensor zero = Tensor::scalar(0.0);
  CHECK(eval(Strategy::kMamba2, zero)[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(eval(Strategy::kMamba2, zero, std::log(2.0))[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(eval(Strategy::kGla, zero)[0] == doctest::Approx(std::pow(0.5, 1.0 / 16)).epsilon(1e-14));
  CHECK(eval(Strategy::kGla, zero)[0] == doctest::Approx(0.9576).epsilon(1e-4));
  CHECK(eval(Strategy::kHgrn2, zero)[0] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(eval(Strategy::kSimple, zero, 0.0, simple_decay_init(0.99))[0] ==
        doctest::Approx(0.99).epsilon(1e-14));
  CHECK(eval(Strategy::kMamba2NoADelta, Tensor::scalar(1.0))[0] == doctest::Approx(numerics::sigmoid(-1.0)));
}

TEST_CASE("pointwise ranges over random activations") {
  std::mt19937_64 rng(1);
  const Tensor f = testing::randn(100, 100, rng, 3.0);
  for (Strategy s : kPointwise) {
    CAPTURE(to_string(s));
    const Tensor l = eval(s, f, 0.7, 0.3);
    for (double x : l.data()) {
      CHECK(x > 0.0);
      CHECK(x < 1.0);
    }
  }
}

TEST_CASE("monotonicity in f") {
  const Tensor f = Tensor::matrix({{-3, -1, 0, 1, 3}});
  const Tensor gla = eval(Strategy::kGla, f);
  const Tensor m2 = eval(Strategy::kMamba2, f, 0.5, 0.2);
  for (std::size_t i = 1; i < 5; ++i) {
    CHECK(gla[i] > gla[i - 1]);
    CHECK(m2[i] < m2[i - 1]);
  }
}

TEST_CASE("hgrn2 lower bound and limit") {
  std::mt19937_64 rng(2);
  const Tensor l = eval(Strategy::kHgrn2, testing::randn(100, 100, rng, 3.0), 0, 0, 16, 0.3);
  for (double x : l.data()) CHECK(x >= 0.3);
  CHECK(eval(Strategy::kHgrn2, Tensor::scalar(40.0), 0, 0, 16, 0.3)[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("non-pointwise strategies are rejected by pointwise_decay") {
  Tape tape;
  const Var f = tape.constant(Tensor::scalar(0.0));
  for (Strategy s : {Strategy::kLightNet, Strategy::kTnl, Strategy::kTnlL, Strategy::kNone}) {
    CHECK_THROWS_AS(pointwise_decay(f, s, {}), ContractError);
  }
  CHECK_THROWS_AS(pointwise_decay(f, Strategy::kMamba2, {}), ConfigError);
}

TEST_CASE("lightnet cumulative softmax") {
  Tape tape;
  const Tensor l = lightnet_decay(tape.constant(Tensor::matrix({{0}, {0}, {0}}))).value();
  CHECK(l[0] == 0.0);
  CHECK(l[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(l[2] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(lightnet_decay(tape.constant(Tensor::matrix({{1.7}}))).value()[0] == 0.0);

  std::mt19937_64 rng(3);
  const std::size_t n = 30, dims = 4;
  const Tensor f = testing::randn(n, dims, rng, 3.0);
  const Tensor lam = lightnet_decay(tape.constant(f)).value();
  for (std::size_t c = 0; c < dims; ++c) {
    std::vector<double> denom(n);
    double run = 0.0;
    for (std::size_t t = 0; t < n; ++t) denom[t] = run += std::exp(f.at(t, c));
    for (std::size_t t = 0; t < n; ++t) {
      CHECK(std::abs((1.0 - lam.at(t, c)) - std::exp(f.at(t, c)) / denom[t]) <= 1e-12);
      double prod = 1.0;
      for (std::size_t j = t; j-- > 0;) {
        prod *= lam.at(j + 1, c);
        CHECK(std::abs(prod - denom[j] / denom[t]) <= 1e-12);
      }
    }
    // Partition of unity.
    double total = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      double tail = 1.0;
      for (std::size_t i = t + 1; i < n; ++i) tail *= lam.at(i, c);
      total += (1.0 - lam.at(t, c)) * tail;
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("tnl constants") {
  CHECK(tnl_decay(1, 2, 1, 2) == std::exp(-2.0));
  CHECK(tnl_decay(2, 2, 1, 2) == std::exp(-4.0));
  for (int j = 1; j <= 4; ++j) {
    CHECK(tnl_decay(j, 4, 3, 3) == 1.0);
    CHECK(tnl_decay(j, 4, 1, 3) < 1.0);
  }
  CHECK_THROWS_AS(tnl_decay(0, 2, 1, 2), DomainError);
  CHECK_THROWS_AS(tnl_decay(1, 2, 3, 2), DomainError);
}

TEST_CASE("tnl_l starts at the tnl constant") {
  Tape tape;
  const double g = tnl_l_init_logit(1, 2, 1, 2);
  const Var lam = constant_decay(tape, Strategy::kTnlL, 3, 1, 2, 1, 2, tape.constant(Tensor::scalar(g)));
  CHECK(lam.value()[2] == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
  CHECK(lam.cols() == 1);
  const double top = tnl_l_init_logit(1, 2, 2, 2);
  CHECK(std::exp(-numerics::softplus(top)) == doctest::Approx(std::exp(-kTnlLMinRate)).epsilon(1e-12));
}

TEST_CASE("simple decay init") {
  CHECK(simple_decay_init(0.5) == 0.0);
  CHECK(simple_decay_init(0.99) == doctest::Approx(std::log(99.0)).epsilon(1e-14));
  CHECK(simple_decay_init(0.99) == doctest::Approx(4.5951).epsilon(1e-4));
  CHECK(simple_decay_init(0.8) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  for (double p : {0.8, 0.9, 0.95, 0.99}) CHECK(std::abs(numerics::sigmoid(simple_decay_init(p)) - p) <= 1e-12);
  CHECK_THROWS_AS(simple_decay_init(0.0), DomainError);
  CHECK_THROWS_AS(simple_decay_init(1.0), DomainError);
}

TEST_CASE("mamba2 initialization") {
  DecayConfig c;
  CHECK(std::exp(mamba2_init_log_a(c, 1, 4)) == doctest::Approx(1.0));
  CHECK(std::exp(mamba2_init_log_a(c, 4, 4)) == doctest::Approx(16.0));
  CHECK(numerics::sigmoid(-mamba2_init_delta(c)) == doctest::Approx(0.9).epsilon(1e-14));
}

TEST_CASE("hgrn2 lower bound schedule") {
  DecayConfig c;
  CHECK(hgrn2_lower_bound(c, 1, 3) == 0.25);
  CHECK(hgrn2_lower_bound(c, 3, 3) == 0.75);
  c.hgrn2_lower_bound = 0.4;
  CHECK(hgrn2_lower_bound(c, 1, 3) == 0.4);
}

TEST_CASE("shared key") {
  Tape tape;
  CHECK(shared_key(tape.constant(Tensor::matrix({{1.0, 0.0, 0.75}}))).value() ==
        Tensor::matrix({{0.0, 1.0, 0.25}}));
}

TEST_CASE("decay activations") {
  std::mt19937_64 rng(4);
  Tape tape;
  const std::size_t n = 5, d = 8, h = 2, dh = 4;
  const Var x = tape.constant(testing::randn(n, d, rng));
  DecayConfig cfg;

  DecayProjection zero_proj;
  zero_proj.down = tape.constant(testing::randn(d, dh, rng));
  for (std::size_t j = 0; j < h; ++j) zero_proj.up.push_back(tape.constant(Tensor::identity(dh)));
  const auto f = decay_activations(x, zero_proj, cfg, 2);
  REQUIRE(f.size() == 2);
  CHECK(f[0].value() == numerics::matmul(x.value(), zero_proj.down->value()));

  const Var zx = tape.constant(Tensor({n, d}, 0.0));
  for (const Var& fj : decay_activations(zx, zero_proj, cfg, 2)) CHECK(numerics::max_abs(fj.value()) == 0.0);

  DecayProjection lowrank;
  lowrank.down = tape.constant(testing::randn(d, dh, rng));
  lowrank.up = {tape.constant(testing::randn(dh, dh, rng)), tape.constant(testing::randn(dh, dh, rng))};
  const auto g = decay_activations(x, lowrank, cfg, 2);
  CHECK(g[1].value() ==
        numerics::matmul(numerics::matmul(x.value(), lowrank.down->value()), lowrank.up[1].value()));

  DecayConfig scalar = cfg;
  scalar.granularity = Granularity::kScalar;
  CHECK_THROWS_AS(decay_activations(x, lowrank, scalar, 2), ConfigError);
  DecayProjection sp;
  sp.scalar_w = {tape.constant(testing::randn(d, 1, rng)), tape.constant(testing::randn(d, 1, rng))};
  CHECK(decay_activations(x, sp, scalar, 2)[0].cols() == 1);
  DecayConfig tnl;
  tnl.strategy = Strategy::kTnl;
  tnl.granularity = Granularity::kScalar;
  CHECK_THROWS_AS(decay_activations(x, sp, tnl, 2), ConfigError);
}

TEST_CASE("config invariants") {
  DecayConfig c;
  c.strategy = Strategy::kTnl;
  CHECK_THROWS_AS(c.validate(), ConfigError);  // vector by default
  c.granularity = Granularity::kScalar;
  CHECK_NOTHROW(c.validate());
  c.sharing = Sharing::kShared;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  DecayConfig t;
  t.tau = 0.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  DecayConfig p;
  p.p = 1.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  DecayConfig lb;
  lb.hgrn2_lower_bound = 1.0;
  CHECK_THROWS_AS(lb.validate(), ConfigError);
  DecayConfig ln;
  ln.strategy = Strategy::kLightNet;
  ln.sharing = Sharing::kShared;
  CHECK_NOTHROW(ln.validate());
}

TEST_CASE("names round-trip") {
  for (int s = 0; s <= static_cast<int>(Strategy::kNone); ++s) {
    const auto st = static_cast<Strategy>(s);
    CHECK(parse_strategy(to_string(st)) == st);
  }
  CHECK(parse_strategy("mamba2_no_a_delta") == Strategy::kMamba2NoADelta);
  CHECK_FALSE(parse_strategy("Mamba2").has_value());
}

TEST_CASE("scalar path equals a broadcast scalar through the vector path") {
  std::mt19937_64 rng(5);
  const Tensor fs = testing::randn(9, 1, rng, 3.0);
  Tensor fv({9, 6});
  for (std::size_t t = 0; t < 9; ++t) {
    for (std::size_t c = 0; c < 6; ++c) fv.at(t, c) = fs[t];
  }
  for (Strategy s : kPointwise) {
    const Tensor ls = eval(s, fs, 0.4, -0.2), lv = eval(s, fv, 0.4, -0.2);
    for (std::size_t t = 0; t < 9; ++t) {
      for (std::size_t c = 0; c < 6; ++c) CHECK(lv.at(t, c) == ls[t]);
    }
  }
  Tape tape;
  const Tensor a = lightnet_decay(tape.constant(fs)).value();
  const Tensor b = lightnet_decay(tape.constant(fv)).value();
  for (std::size_t t = 0; t < 9; ++t) CHECK(b.at(t, 3) == a[t]);
}

TEST_CASE("decay gradients match finite differences") {
  std::mt19937_64 rng(6);
  const Tensor w = testing::randn(4, 3, rng);
  for (Strategy s : kPointwise) {
    CAPTURE(to_string(s));
    const auto rep = testing::check_gradients(
        [&](Tape& t, std::span<const Var> x) {
          HeadScalars hs{x[1], x[2], x[3], x[4]};
          return numerics::sum(numerics::mul(pointwise_decay(x[0], s, hs), t.constant(w)));
        },
        {testing::randn(4, 3, rng), Tensor::scalar(0.3), Tensor::scalar(0.2), Tensor::scalar(0.125),
         Tensor::scalar(0.35)});
    CHECK(rep.worst <= 1e-4);
  }
  const auto ln = testing::check_gradients(
      [&](Tape& t, std::span<const Var> x) {
        return numerics::sum(numerics::mul(lightnet_decay(x[0]), t.constant(w)));
      },
      {testing::randn(4, 3, rng, 2.0)});
  CHECK(ln.worst <= 1e-4);
  const Tensor w4 = testing::randn(4, 1, rng);
  const auto tl = testing::check_gradients(
      [&](Tape& t, std::span<const Var> x) {
        return numerics::sum(numerics::mul(constant_decay(t, Strategy::kTnlL, 4, 1, 2, 1, 2, x[0]),
                                           t.constant(w4)));
      },
      {Tensor::scalar(0.4)});
  CHECK(tl.worst <= 1e-4);
}
