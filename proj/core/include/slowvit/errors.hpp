// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace slowvit {

/// Invalid or inconsistent configuration (bad geometry, out-of-bounds patch,
/// missing files).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (shape mismatch, missing trace
/// data, empty pool).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Mathematically undefined input (empty mean, degenerate FLOPs range).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Optimization produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace slowvit
