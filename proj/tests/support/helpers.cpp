// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0

#include "support/helpers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>

namespace testing {

using decaylab::model::ModelConfig;
using decaylab::model::ParameterSet;

Tensor randn(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double std) {
  std::normal_distribution<double> d(0.0, std);
  Tensor t({rows, cols});
  for (double& x : t.storage()) x = d(rng);
  return t;
}

Tensor uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t({rows, cols});
  for (double& x : t.storage()) x = d(rng);
  return t;
}

GradReport check_gradients(const ScalarFn& f, const std::vector<Tensor>& inputs, double h, double floor) {
  Tape tape;
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
  tape.backward(f(tape, leaves));

  std::vector<Tensor> xs = inputs;
  auto value = [&] {
    Tape t2;
    std::vector<Var> c;
    for (const auto& x : xs) c.push_back(t2.constant(x));
    return f(t2, c).value()[0];
  };
  GradReport rep;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor g = tape.grad(leaves[i]);
    double diff = 0, na = 0, nn = 0;
    for (std::size_t k = 0; k < xs[i].size(); ++k) {
      const double x0 = xs[i][k];
      xs[i][k] = x0 + h;
      const double up = value();
      xs[i][k] = x0 - h;
      const double down = value();
      xs[i][k] = x0;
      const double num = (up - down) / (2 * h);
      diff += (num - g[k]) * (num - g[k]);
      na += g[k] * g[k];
      nn += num * num;
    }
    const double rel = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), floor});
    if (rel > rep.worst) {
      rep.worst = rel;
      rep.worst_input = i;
    }
  }
  return rep;
}

std::string synthetic_corpus(std::size_t bytes, std::uint64_t seed) {
  // Pseudo-words from a syllable inventory with Zipf-distributed frequencies,
  // laid out as speaker-tagged verse. Entropy is high enough that the text
  // cannot be memorised in a few hundred steps.
  static const char* kOnsets[] = {"", "b", "c", "d", "f", "g", "h", "l", "m", "n", "p", "r", "s",
                                  "t", "w", "th", "st", "br", "gr", "sh", "wh", "pl"};
  static const char* kNuclei[] = {"a", "e", "i", "o", "u", "ea", "ou", "ai", "ee", "y"};
  static const char* kCodas[] = {"", "", "n", "r", "s", "t", "d", "ng", "ll", "th", "ck"};
  static const char* kNames[] = {"ROMEO", "JULIET", "HAMLET", "OPHELIA", "MACBETH", "PORTIA",
                                 "FIRST CITIZEN", "GLOUCESTER", "KING RICHARD", "NURSE"};
  static const char* kPunct[] = {",", ",", ",", ";", ":"};
  static const char* kEnds[] = {".", ".", ".", "!", "?"};
  std::mt19937_64 rng(seed);
  auto pick = [&](auto& arr) {
    return arr[std::uniform_int_distribution<std::size_t>(0, std::size(arr) - 1)(rng)];
  };

  constexpr std::size_t kLexicon = 3000;
  std::vector<std::string> words;
  std::vector<double> weights;
  for (std::size_t i = 0; i < kLexicon; ++i) {
    const int syllables = i < 100 ? 1 : std::uniform_int_distribution<int>(1, 3)(rng);
    std::string w;
    for (int k = 0; k < syllables; ++k) w += std::string(pick(kOnsets)) + pick(kNuclei) + pick(kCodas);
    words.push_back(w);
    weights.push_back(1.0 / std::pow(static_cast<double>(i + 1), 1.1));
  }
  std::discrete_distribution<std::size_t> zipf(weights.begin(), weights.end());
  std::uniform_int_distribution<int> line_count(1, 4), word_count(4, 11);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::string out;
  while (out.size() < bytes) {
    out += pick(kNames);
    out += ":\n";
    const int lines = line_count(rng);
    for (int l = 0; l < lines; ++l) {
      const int n = word_count(rng);
      std::string line;
      for (int k = 0; k < n; ++k) {
        std::string w = words[zipf(rng)];
        if (k == 0) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
        if (!line.empty()) line += ' ';
        line += w;
        if (k + 1 < n && unit(rng) < 0.08) line += pick(kPunct);
      }
      out += line + (l + 1 == lines ? pick(kEnds) : ",") + "\n";
    }
    out += "\n";
  }
  return out;
}

std::string corpus_text(std::size_t bytes) {
  if (const char* path = std::getenv("DECAYLAB_CORPUS")) {
    std::ifstream in(path, std::ios::binary);
    if (in) return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  }
  return synthetic_corpus(bytes);
}

ModelConfig tiny_model() {
  ModelConfig c;
  c.layers = 2;
  c.hidden = 16;
  c.heads = 2;
  c.vocab = 17;
  return c;
}

ParameterSet tie_scalar_to_vector(const ModelConfig& sc, const ParameterSet& sp) {
  using decaylab::model::head_param;
  using decaylab::model::layer_param;
  ModelConfig vc = sc;
  vc.decay.granularity = decaylab::decay::Granularity::kVector;
  ParameterSet vp = decaylab::model::init_params(vc, 0);
  const std::size_t d = static_cast<std::size_t>(sc.hidden), dh = sc.head_dim();
  const int h = sc.heads;
  for (auto& p : vp) {
    if (sp.contains(p.name)) p.value = sp.at(p.name);
  }
  for (int l = 0; l < sc.layers; ++l) {
    Tensor& down = vp.at(layer_param(l, "attn.wd2"));
    down = Tensor({d, dh}, 0.0);
    for (int j = 0; j < h; ++j) {
      const Tensor& w1 = sp.at(head_param(l, "attn.wd1", j));
      for (std::size_t r = 0; r < d; ++r) down.at(r, static_cast<std::size_t>(j)) = w1[r];
      Tensor& up = vp.at(head_param(l, "attn.wd3", j));
      up = Tensor({dh, dh}, 0.0);
      for (std::size_t c = 0; c < dh; ++c) up.at(static_cast<std::size_t>(j), c) = 1.0;
    }
  }
  return vp;
}

}  // namespace testing
