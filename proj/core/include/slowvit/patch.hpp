// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "slowvit/image.hpp"

namespace slowvit {

/// A square RGB patch pasted at a fixed top-left location. Pixel values are in
/// [0, 255].
struct Patch {
  int size = 0;
  int row = 0;
  int col = 0;
  Image pixels;

  bool operator==(const Patch&) const = default;
};

/// Fraction of an image_size x image_size image covered by a size x size patch.
double patch_area_fraction(int size, int image_size);

/// Throws ConfigError when the patch does not fit inside a height x width image.
void check_patch_bounds(int size, int row, int col, int height, int width);

/// IID uniform integer pixels in {0, ..., 255}, deterministic per seed.
Patch init_patch(int size, int row, int col, int image_height, int image_width, std::uint64_t seed);

/// Replaces the covered region of `image` with the patch pixels.
Image apply_patch(const Image& image, const Patch& patch);

/// Region [row, row + size) x [col, col + size) of `image`.
Image crop(const Image& image, int row, int col, int size);

/// Clips to [0, 255] and rounds to the nearest integer level.
Patch project_quantize(const Patch& patch);
bool is_quantized(const Patch& patch);

struct PatchMetadata {
  std::string objective;
  std::uint64_t seed = 0;
  std::uint64_t model_checksum = 0;
  int iterations = 0;
};

struct StoredPatch {
  Patch patch;
  PatchMetadata meta;
};

/// Writes `<stem>.ppm` (8-bit RGB) and `<stem>.json`. Throws ConfigError if the
/// patch is not quantized.
void save_patch(const std::string& stem, const Patch& patch, const PatchMetadata& meta);
StoredPatch load_patch(const std::string& stem);

}  // namespace slowvit
