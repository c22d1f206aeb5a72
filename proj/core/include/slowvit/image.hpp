// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace slowvit {

/// RGB image, row-major HWC, values in pixel units [0, 255].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

  double& at(int row, int col, int ch) { return pixels[index(row, col, ch)]; }
  double at(int row, int col, int ch) const { return pixels[index(row, col, ch)]; }
  std::size_t index(int row, int col, int ch) const {
    return (static_cast<std::size_t>(row) * width + col) * 3 + ch;
  }

  bool operator==(const Image&) const = default;
};

/// 8-bit storage used by datasets.
struct ImageU8 {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  Image to_image() const;
};

ImageU8 quantize_u8(const Image& img);

/// Binary PPM (P6) read/write; lossless for 8-bit RGB.
void write_ppm(const std::string& path, const ImageU8& img);
ImageU8 read_ppm(const std::string& path);

}  // namespace slowvit
