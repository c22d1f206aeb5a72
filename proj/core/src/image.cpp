// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "slowvit/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "slowvit/errors.hpp"

namespace slowvit {

Image ImageU8::to_image() const {
  Image img(height, width);
  std::transform(pixels.begin(), pixels.end(), img.pixels.begin(), [](std::uint8_t v) { return double(v); });
  return img;
}

ImageU8 quantize_u8(const Image& img) {
  ImageU8 out{img.height, img.width, std::vector<std::uint8_t>(img.pixels.size())};
  std::transform(img.pixels.begin(), img.pixels.end(), out.pixels.begin(), [](double v) {
    return static_cast<std::uint8_t>(std::clamp(std::nearbyint(v), 0.0, 255.0));
  });
  return out;
}

void write_ppm(const std::string& path, const ImageU8& img) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw ConfigError("short write to '" + path + "'");
}

namespace {

int read_header_int(std::istream& in) {
  int c = in.peek();
  while (c == ' ' || c == '\n' || c == '\r' || c == '\t' || c == '#') {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else {
      in.get();
    }
    c = in.peek();
  }
  int v = -1;
  in >> v;
  return v;
}

}  // namespace

ImageU8 read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  char magic[2] = {};
  in.read(magic, 2);
  if (magic[0] != 'P' || magic[1] != '6') throw ConfigError("'" + path + "' is not a binary PPM");
  ImageU8 img;
  img.width = read_header_int(in);
  img.height = read_header_int(in);
  const int maxval = read_header_int(in);
  if (img.width <= 0 || img.height <= 0 || maxval != 255) throw ConfigError("unsupported PPM header in '" + path + "'");
  in.get();
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw ConfigError("truncated PPM '" + path + "'");
  return img;
}

}  // namespace slowvit
