// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0

#include "decaylab/probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "decaylab/errors.hpp"

namespace decaylab::probe {

double median(std::span<const double> values) {
  if (values.empty()) throw DomainError("median: empty input");
  std::vector<double> v(values.begin(), values.end());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return (lower + upper) / 2.0;
}

LayerStats summarize(int layer, std::span<const double> values) {
  if (values.empty()) throw DomainError("summarize: layer " + std::to_string(layer) + " has no samples");
  LayerStats s;
  s.layer = layer;
  s.count = values.size();
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  s.min = *lo;
  s.max = *hi;
  double total = 0.0;
  for (double x : values) total += x;
  s.mean = total / static_cast<double>(values.size());
  s.median = median(values);
  return s;
}

DecayTrace capture_trace(const model::ModelConfig& config, const model::ParameterSet& params,
                         std::span<const int> tokens) {
  if (config.decay.strategy == decay::Strategy::kNone) {
    throw ContractError("capture_trace: model has no decay (strategy none); nothing to probe");
  }
  DecayTrace trace;
  model::logits(config, params, tokens, &trace.raw);
  std::map<int, std::vector<double>> pooled;
  for (const auto& rec : trace.raw) {
    auto& bucket = pooled[rec.layer];
    bucket.insert(bucket.end(), rec.lambda.data().begin(), rec.lambda.data().end());
  }
  for (const auto& [layer, values] : pooled) {
    for (double x : values) {
      if (!(x >= 0.0 && x <= 1.0)) {
        throw DomainError("capture_trace: decay value " + std::to_string(x) + " in layer " +
                          std::to_string(layer) + " outside [0, 1]");
      }
    }
    trace.layers.push_back(summarize(layer, values));
  }
  return trace;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("failed writing: " + path.string());
}

std::string g9(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

}  // namespace

std::string format_table(const DecayTrace& trace) {
  std::string out = "layer,count,min,median,mean,max\n";
  for (const auto& s : trace.layers) {
    out += std::to_string(s.layer) + "," + std::to_string(s.count) + "," + g9(s.min) + "," +
           g9(s.median) + "," + g9(s.mean) + "," + g9(s.max) + "\n";
  }
  return out;
}

void export_table(const DecayTrace& trace, const std::filesystem::path& path) {
  write_file(path, format_table(trace));
}

std::vector<LayerStats> parse_table(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "layer,count,min,median,mean,max") {
    throw DomainError("parse_table: missing header");
  }
  std::vector<LayerStats> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    LayerStats s;
    unsigned long long count = 0;
    if (std::sscanf(line.c_str(), "%d,%llu,%lf,%lf,%lf,%lf", &s.layer, &count, &s.min, &s.median,
                    &s.mean, &s.max) != 6) {
      throw DomainError("parse_table: malformed line " + std::to_string(lineno));
    }
    s.count = count;
    rows.push_back(s);
  }
  return rows;
}

void export_raw(const DecayTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "layer,position,head,dim,value\n";
  char buf[96];
  for (const auto& rec : trace.raw) {
    const std::size_t n = rec.lambda.rows(), c = rec.lambda.cols();
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t k = 0; k < c; ++k) {
        std::snprintf(buf, sizeof buf, "%d,%zu,%d,%zu,%.17g\n", rec.layer, t, rec.head, k,
                      rec.lambda[t * c + k]);
        out << buf;
      }
    }
  }
  if (!out) throw IoError("failed writing: " + path.string());
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_plot(std::span<const std::pair<std::string, DecayTrace>> traces) {
  if (traces.empty()) throw DomainError("export_plot: no traces");
  constexpr double kW = 640, kH = 400, kLeft = 60, kRight = 160, kTop = 30, kBottom = 50;
  constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                     "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  int max_layer = 1;
  for (const auto& [name, tr] : traces) {
    for (const auto& s : tr.layers) max_layer = std::max(max_layer, s.layer);
  }
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](int layer) {
    return max_layer == 1 ? kLeft + pw / 2 : kLeft + pw * (layer - 1) / (max_layer - 1);
  };
  auto py = [&](double y) { return kTop + ph * (1.0 - std::clamp(y, 0.0, 1.0)); };
  auto num = [](double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return std::string(buf);
  };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kW) + "\" height=\"" + num(kH) +
         "\" viewBox=\"0 0 " + num(kW) + " " + num(kH) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<g class=\"axes\" stroke=\"black\" fill=\"none\">\n";
  svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(py(0)) + "\" x2=\"" + num(kLeft + pw) + "\" y2=\"" +
         num(py(0)) + "\"/>\n";
  svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(py(0)) + "\" x2=\"" + num(kLeft) + "\" y2=\"" +
         num(py(1)) + "\"/>\n</g>\n";
  svg += "<g class=\"ticks\" text-anchor=\"end\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = i / 4.0;
    svg += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(py(y) + 4) + "\">" + num(y) + "</text>\n";
  }
  svg += "</g>\n<g class=\"ticks\" text-anchor=\"middle\">\n";
  for (int l = 1; l <= max_layer; ++l) {
    svg += "<text x=\"" + num(px(l)) + "\" y=\"" + num(py(0) + 18) + "\">" + std::to_string(l) + "</text>\n";
  }
  svg += "</g>\n";
  svg += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kH - 10) +
         "\" text-anchor=\"middle\">layer</text>\n";
  svg += "<text x=\"15\" y=\"" + num(kTop + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 15 " +
         num(kTop + ph / 2) + ")\">median decay</text>\n";

  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& [name, tr] = traces[i];
    const std::string color = kColors[i % std::size(kColors)];
    svg += "<g class=\"series\" data-name=\"" + xml_escape(name) + "\" stroke=\"" + color + "\" fill=\"" + color + "\">\n";
    if (tr.layers.size() > 1) {
      svg += "<polyline fill=\"none\" points=\"";
      for (const auto& s : tr.layers) svg += num(px(s.layer)) + "," + num(py(s.median)) + " ";
      svg.back() = '"';
      svg += "/>\n";
    }
    for (const auto& s : tr.layers) {
      svg += "<circle class=\"marker\" cx=\"" + num(px(s.layer)) + "\" cy=\"" + num(py(s.median)) +
             "\" r=\"4\"/>\n";
    }
    svg += "</g>\n";
    const double ly = kTop + 16.0 * static_cast<double>(i);
    svg += "<g class=\"legend\"><rect x=\"" + num(kW - kRight + 16) + "\" y=\"" + num(ly) +
           "\" width=\"10\" height=\"10\" fill=\"" + color + "\"/><text x=\"" + num(kW - kRight + 32) +
           "\" y=\"" + num(ly + 9) + "\">" + xml_escape(name) + "</text></g>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void export_plot(std::span<const std::pair<std::string, DecayTrace>> traces,
                 const std::filesystem::path& path) {
  write_file(path, render_plot(traces));
}

}  // namespace decaylab::probe
