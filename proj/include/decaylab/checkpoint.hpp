// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container. All integers little-endian.
//
//   bytes 0..7   magic "DCYLAB\0\1"
//   u32          format version (1)
//   u64          seed
//   u64          optimizer step
//   u32 + bytes  resolved config text (INI)
//   u32          parameter count P
//   P times:
//     u32 + bytes  name
//     u8           weight-decay flag
//     u32          rank r, then r x u64 dims
//     f64[...]     values, IEEE-754 binary64, row-major
//   u64          FNV-1a 64 over every preceding byte

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "decaylab/model.hpp"

namespace decaylab::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_text;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  ParameterSet params;
};

/// IoError on write failure.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// IoError on unreadable, truncated or corrupted files (bad magic, version or
/// checksum).
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// CompatibilityError unless `params` has exactly the names and shapes the
/// config would initialize.
void check_compatible(const ModelConfig& config, const ParameterSet& params);

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace decaylab::model
