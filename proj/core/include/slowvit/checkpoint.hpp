// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "slowvit/vit.hpp"

namespace slowvit {

/// Current checkpoint format version.
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Writes a self-describing checkpoint: magic, version, a JSON header with the
/// model config and tensor directory, then raw little-endian float64 data.
void save_checkpoint(const std::string& path, const VisionTransformer& model);

/// Reads a checkpoint written by save_checkpoint. Throws ConfigError on a bad
/// magic, an unsupported version, or truncated data.
VisionTransformer load_checkpoint(const std::string& path);

}  // namespace slowvit
