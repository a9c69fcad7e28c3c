// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numbers>
#include <random>

#include "decaylab/errors.hpp"
#include "decaylab/posenc.hpp"
#include "decaylab/recurrence.hpp"
#include "doctest.h"
#include "support/helpers.hpp"

using namespace decaylab;
using namespace decaylab::posenc;
using numerics::max_abs_diff;
using numerics::Tape;

namespace {

double row_norm(const Tensor& x, std::size_t t) {
  double s = 0.0;
  for (std::size_t c = 0; c < x.cols(); ++c) s += x.at(t, c) * x.at(t, c);
  return std::sqrt(s);
}

// Direct Toeplitz sum with explicit powers.
Tensor toeplitz_oracle(const Tensor& x, const TpeParams& p) {
  const std::size_t n = x.rows(), d = x.cols(), m = p.states();
  Tensor o({n, d});
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t t = 0; t < n; ++t) {
      double acc = 0.0;
      for (std::size_t s = 0; s <= t; ++s) {
        double r = 0.0;
        for (std::size_t v = 0; v < m; ++v) {
          const double lam = 1.0 / (1.0 + std::exp(-p.gate_logit.at(c, v)));
          r += p.a.at(c, v) * p.b.at(c, v) * std::pow(lam, static_cast<double>(t - s));
        }
        acc += r * x.at(s, c);
      }
      o.at(t, c) = acc;
    }
  }
  return o;
}

TpeParams random_tpe(std::mt19937_64& rng, std::size_t d, std::size_t m) {
  return {testing::randn(d, m, rng), testing::randn(d, m, rng), testing::uniform(d, m, rng, -2, 3)};
}

}  // namespace

TEST_CASE("rope params") {
  const RopeParams p = RopeParams::make(8);
  REQUIRE(p.theta.size() == 4);
  CHECK(p.theta[0] == 1.0);
  CHECK(p.theta[1] == doctest::Approx(std::pow(10000.0, -0.25)).epsilon(1e-15));
  for (std::size_t k = 1; k < 4; ++k) CHECK(p.theta[k] < p.theta[k - 1]);
  CHECK_THROWS_AS(RopeParams::make(7), DimensionError);
}

TEST_CASE("rope examples") {
  std::mt19937_64 rng(1);
  const RopeParams p = RopeParams::make(6);
  const Tensor x = testing::randn(1, 6, rng);
  CHECK(rope_apply(x, p) == x);

  RopeParams quarter;
  quarter.head_dim = 2;
  quarter.theta = {std::numbers::pi / 2};
  const Tensor r = rope_apply(Tensor::matrix({{1.0, 0.0}}), quarter, 1);
  CHECK(std::abs(r[0]) <= 1e-15);
  CHECK(r[1] == doctest::Approx(1.0).epsilon(1e-15));

  const Tensor many = testing::randn(40, 6, rng);
  const Tensor rot = rope_apply(many, p, 3);
  for (std::size_t t = 0; t < 40; ++t) CHECK(std::abs(row_norm(rot, t) - row_norm(many, t)) <= 1e-12);
  CHECK(max_abs_diff(rope_apply(rot, p, 3, true), many) <= 1e-12);

  CHECK_THROWS_AS(rope_apply(testing::randn(2, 5, rng), p), DimensionError);
  CHECK_THROWS_AS(rope_apply(testing::randn(2, 4, rng), p), DimensionError);
}

TEST_CASE("rope composes additively") {
  std::mt19937_64 rng(2);
  const RopeParams p = RopeParams::make(8);
  const Tensor x = testing::randn(1, 8, rng);
  for (std::size_t t : {0, 1, 5, 100}) {
    for (std::size_t s : {0, 2, 7, 1000}) {
      CHECK(max_abs_diff(rope_apply(rope_apply(x, p, t), p, s), rope_apply(x, p, t + s)) <= 1e-12);
    }
  }
}

TEST_CASE("lrpe") {
  std::mt19937_64 rng(3);
  const LrpeParams p = LrpeParams::make(4);
  const Tensor x = testing::randn(1, 4, rng);
  const Tensor at0 = lrpe_apply(x, p);
  REQUIRE(at0.cols() == 8);
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(at0[c] == x[c]);
    CHECK(at0[4 + c] == 0.0);
  }
  LrpeParams flat{{0.0, 0.0, 0.0, 0.0}};
  CHECK(lrpe_apply(x, flat, 17) == at0);

  LrpeParams angles{{0.3, 1.1, -0.7, 2.5}};
  for (int i = 0; i < 50; ++i) {
    const Tensor q = testing::randn(1, 4, rng), k = testing::randn(1, 4, rng);
    const std::size_t t = rng() % 100, s = rng() % 100;
    const Tensor lq = lrpe_apply(q, angles, t), lk = lrpe_apply(k, angles, s);
    double inner = 0.0, direct = 0.0;
    for (std::size_t c = 0; c < 8; ++c) inner += lq[c] * lk[c];
    for (std::size_t c = 0; c < 4; ++c) {
      direct += q[c] * k[c] * std::cos((static_cast<double>(t) - static_cast<double>(s)) * angles.theta[c]);
    }
    CHECK(std::abs(inner - direct) <= 1e-12);
  }
  CHECK_THROWS_AS(lrpe_apply(testing::randn(2, 3, rng), p), DimensionError);
}

TEST_CASE("tpe examples") {
  std::mt19937_64 rng(4);
  TpeParams zero_mem{testing::randn(3, 2, rng), testing::randn(3, 2, rng), Tensor({3, 2}, -1e4)};
  const Tensor x = testing::randn(6, 3, rng);
  const Tensor o = tpe_apply(x, zero_mem);
  for (std::size_t c = 0; c < 3; ++c) {
    const double ab = zero_mem.a.at(c, 0) * zero_mem.b.at(c, 0) + zero_mem.a.at(c, 1) * zero_mem.b.at(c, 1);
    for (std::size_t t = 0; t < 6; ++t) CHECK(std::abs(o.at(t, c) - ab * x.at(t, c)) <= 1e-14);
  }

  TpeParams half{Tensor({1, 1}, 1.0), Tensor({1, 1}, 1.0), Tensor({1, 1}, 0.0)};
  const Tensor geo = tpe_apply(Tensor::matrix({{1}, {0}, {0}}), half);
  CHECK(geo == Tensor::matrix({{1}, {0.5}, {0.25}}));

  for (int i = 0; i < 20; ++i) {
    const TpeParams p = random_tpe(rng, 3, 1 + rng() % 5);
    const Tensor xi = testing::randn(1 + rng() % 30, 3, rng);
    CHECK(max_abs_diff(tpe_apply(xi, p), toeplitz_oracle(xi, p)) <= 1e-10);
  }

  CHECK_THROWS_AS(tpe_apply(testing::randn(2, 4, rng), random_tpe(rng, 3, 2)), DimensionError);
}

TEST_CASE("tpe is causal") {
  std::mt19937_64 rng(5);
  const TpeParams p = random_tpe(rng, 4, 3);
  const Tensor x = testing::randn(20, 4, rng);
  const Tensor base = tpe_apply(x, p);
  for (std::size_t t = 0; t < 19; ++t) {
    Tensor y = x;
    for (std::size_t s = t + 1; s < 20; ++s) {
      for (std::size_t c = 0; c < 4; ++c) y.at(s, c) += 10.0 * (c + 1);
    }
    const Tensor changed = tpe_apply(y, p);
    for (std::size_t s = 0; s <= t; ++s) {
      for (std::size_t c = 0; c < 4; ++c) CHECK(changed.at(s, c) == base.at(s, c));
    }
  }
}

TEST_CASE("rope and decay compatibility") {
  std::mt19937_64 rng(6);
  const RopeParams p = RopeParams::make(8);
  double scalar_worst = 0.0, paired_worst = 0.0, plain_worst = 0.0;
  for (int seed = 0; seed < 100; ++seed) {
    const std::size_t n = 1 + rng() % 32;
    const Tensor q = testing::randn(n, 8, rng), k = testing::randn(n, 8, rng), v = testing::randn(n, 3, rng);
    scalar_worst = std::max(scalar_worst, rope_decay_equivalence(q, k, v, testing::uniform(n, 1, rng, 0, 1), p));
    plain_worst = std::max(plain_worst, rope_decay_equivalence(q, k, v, Tensor({n, 1}, 1.0), p));
    Tensor paired({n, 8});
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t pr = 0; pr < 4; ++pr) {
        paired.at(t, 2 * pr) = paired.at(t, 2 * pr + 1) = std::uniform_real_distribution<double>(0, 1)(rng);
      }
    }
    paired_worst = std::max(paired_worst, rope_decay_equivalence(q, k, v, paired, p));
  }
  CHECK(scalar_worst <= 1e-8);
  CHECK(plain_worst <= 1e-10);
  CHECK(paired_worst <= 1e-8);

  const Tensor q = testing::randn(4, 8, rng);
  Tensor unpaired = testing::uniform(4, 8, rng, 0.1, 0.9);
  CHECK_THROWS_AS(rope_decay_equivalence(q, q, q, unpaired, p), ContractError);
}

TEST_CASE("relative form is shift invariant") {
  // Scores computed with rotated q, k depend only on the offset.
  std::mt19937_64 rng(7);
  const RopeParams p = RopeParams::make(4);
  const Tensor q = testing::randn(1, 4, rng), k = testing::randn(1, 4, rng);
  auto score = [&](std::size_t t, std::size_t s) {
    const Tensor a = rope_apply(q, p, t), b = rope_apply(k, p, s);
    double acc = 0.0;
    for (std::size_t c = 0; c < 4; ++c) acc += a[c] * b[c];
    return acc;
  };
  CHECK(std::abs(score(10, 3) - score(107, 100)) <= 1e-10);
}

TEST_CASE("posenc gradients") {
  std::mt19937_64 rng(8);
  const Tensor w6 = testing::randn(5, 6, rng), w12 = testing::randn(5, 12, rng), w3 = testing::randn(7, 3, rng);
  const RopeParams rp = RopeParams::make(6);
  const LrpeParams lp = LrpeParams::make(6);
  CHECK(testing::check_gradients(
            [&](Tape& t, std::span<const Var> x) {
              return numerics::sum(numerics::mul(rope_apply(x[0], rp), t.constant(w6)));
            },
            {testing::randn(5, 6, rng)})
            .worst <= 1e-6);
  CHECK(testing::check_gradients(
            [&](Tape& t, std::span<const Var> x) {
              return numerics::sum(numerics::mul(lrpe_apply(x[0], lp), t.constant(w12)));
            },
            {testing::randn(5, 6, rng)})
            .worst <= 1e-6);
  const TpeParams tp = random_tpe(rng, 3, 2);
  CHECK(testing::check_gradients(
            [&](Tape& t, std::span<const Var> x) {
              return numerics::sum(numerics::mul(tpe_apply(x[0], x[1], x[2], x[3]), t.constant(w3)));
            },
            {testing::randn(7, 3, rng), tp.a, tp.b, tp.gate_logit})
            .worst <= 1e-5);
}
