// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0

#include "decaylab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "decaylab/errors.hpp"

namespace decaylab::model {

namespace {

constexpr char kMagic[8] = {'D', 'C', 'Y', 'L', 'A', 'B', '\0', '\1'};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string& bytes() { return out_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::string where) : in_(bytes), where_(std::move(where)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(le(8)); }
  std::string str() {
    const std::uint32_t n = u32();
    return std::string(take(n), n);
  }
  const char* take(std::size_t n) {
    if (n > in_.size() - pos_) throw IoError(where_ + ": truncated checkpoint");
    const char* p = in_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::uint64_t le(int n) {
    const char* p = take(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
  }
  const std::string& in_;
  std::string where_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.u64(ckpt.seed);
  w.u64(ckpt.step);
  w.str(ckpt.config_text);
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const Parameter& p : ckpt.params) {
    w.str(p.name);
    w.u8(p.weight_decay ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t dim : p.value.shape()) w.u64(dim);
    for (double x : p.value.data()) w.f64(x);
  }
  w.u64(fnv1a64(w.bytes()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = path.string();
  if (bytes.size() < sizeof kMagic + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw IoError(where + ": not a decaylab checkpoint");
  }
  const std::string body = bytes.substr(0, bytes.size() - 8);
  Reader tail(bytes, where);
  tail.take(body.size());
  if (tail.u64() != fnv1a64(body)) throw IoError(where + ": checksum mismatch");

  Reader r(body, where);
  r.take(sizeof kMagic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw IoError(where + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.seed = r.u64();
  ckpt.step = r.u64();
  ckpt.config_text = r.str();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const bool wd = r.u8() != 0;
    const std::uint32_t rank = r.u32();
    numerics::Tensor::Shape shape(rank);
    std::size_t size = 1;
    for (auto& dim : shape) {
      dim = r.u64();
      if (dim == 0 || dim > body.size()) throw IoError(where + ": bad shape for '" + name + "'");
      size *= dim;
    }
    if (size * 8 > body.size() - r.pos()) throw IoError(where + ": truncated checkpoint");
    std::vector<double> data(size);
    for (double& x : data) x = r.f64();
    ckpt.params.add(std::move(name), Tensor(std::move(shape), std::move(data)), wd);
  }
  if (r.pos() != body.size()) throw IoError(where + ": trailing bytes after parameters");
  return ckpt;
}

void check_compatible(const ModelConfig& config, const ParameterSet& params) {
  const ParameterSet expected = init_params(config, 0);
  if (expected.size() != params.size()) {
    throw CompatibilityError("checkpoint holds " + std::to_string(params.size()) +
                             " parameters, config expects " + std::to_string(expected.size()));
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const Parameter& want = expected[i];
    if (!params.contains(want.name)) {
      throw CompatibilityError("checkpoint lacks parameter '" + want.name + "'");
    }
    const Tensor& got = params.at(want.name);
    if (got.shape() != want.value.shape()) {
      throw CompatibilityError("parameter '" + want.name + "' has shape " + got.shape_string() +
                               ", config expects " + want.value.shape_string());
    }
  }
}

}  // namespace decaylab::model
