// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace slowvit {

using Rng = std::mt19937_64;

/// Seed of the named substream `stream` under `base`. All randomness in a run
/// flows from one global seed through these derivations.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

/// Uniform double in [0, 1) with 53 random bits (portable across stdlibs).
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform double in the open interval (0, 1).
inline double uniform_open01(Rng& rng) { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; }

/// Uniform integer in [0, n).
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

/// Standard normal via Box-Muller.
double normal(Rng& rng);

}  // namespace slowvit
