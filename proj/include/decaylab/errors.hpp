// Copyright 2026 The decaylab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Error types shared by every module. Each maps to one failure family so
// callers (notably the CLI) can translate them into exit codes.

#pragma once

#include <stdexcept>
#include <string>

namespace decaylab {

/// Operand shapes do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A value lies outside the domain of the operation (p outside (0,1), empty
/// reduction, non-finite input, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The caller violated a documented precondition of an API.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// File system failures.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A checkpoint does not fit the configuration it is used with.
class CompatibilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace decaylab
