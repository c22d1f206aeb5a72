// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "slowvit/patch.hpp"

#include <algorithm>
#include <cmath>

#include "json_io.hpp"
#include "slowvit/errors.hpp"
#include "slowvit/random.hpp"

namespace slowvit {

double patch_area_fraction(int size, int image_size) {
  return static_cast<double>(size) * size / (static_cast<double>(image_size) * image_size);
}

void check_patch_bounds(int size, int row, int col, int height, int width) {
  if (size < 1) throw ConfigError("patch size must be >= 1");
  if (row < 0 || col < 0 || row + size > height || col + size > width) {
    throw ConfigError("patch of size " + std::to_string(size) + " at (" + std::to_string(row) + ", " +
                      std::to_string(col) + ") does not fit a " + std::to_string(height) + "x" +
                      std::to_string(width) + " image");
  }
}

Patch init_patch(int size, int row, int col, int image_height, int image_width, std::uint64_t seed) {
  check_patch_bounds(size, row, col, image_height, image_width);
  Patch p{size, row, col, Image(size, size)};
  Rng rng(derive_seed(seed, "patch-init"));
  for (double& v : p.pixels.pixels) v = static_cast<double>(uniform_index(rng, 256));
  return p;
}

Image apply_patch(const Image& image, const Patch& patch) {
  check_patch_bounds(patch.size, patch.row, patch.col, image.height, image.width);
  Image out = image;
  for (int r = 0; r < patch.size; ++r) {
    for (int c = 0; c < patch.size; ++c) {
      for (int ch = 0; ch < 3; ++ch) out.at(patch.row + r, patch.col + c, ch) = patch.pixels.at(r, c, ch);
    }
  }
  return out;
}

Image crop(const Image& image, int row, int col, int size) {
  check_patch_bounds(size, row, col, image.height, image.width);
  Image out(size, size);
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = image.at(row + r, col + c, ch);
    }
  }
  return out;
}

Patch project_quantize(const Patch& patch) {
  Patch out = patch;
  for (double& v : out.pixels.pixels) v = std::round(std::clamp(v, 0.0, 255.0));
  return out;
}

bool is_quantized(const Patch& patch) {
  return std::all_of(patch.pixels.pixels.begin(), patch.pixels.pixels.end(),
                     [](double v) { return v >= 0.0 && v <= 255.0 && v == std::round(v); });
}

void save_patch(const std::string& stem, const Patch& patch, const PatchMetadata& meta) {
  if (!is_quantized(patch)) throw ConfigError("save_patch: patch is not quantized");
  write_ppm(stem + ".ppm", quantize_u8(patch.pixels));
  json j;
  j["size"] = patch.size;
  j["location"] = {patch.row, patch.col};
  j["objective"] = meta.objective;
  j["seed"] = meta.seed;
  j["model_checksum"] = std::to_string(meta.model_checksum);
  j["iterations"] = meta.iterations;
  write_text_file(stem + ".json", j.dump(2) + "\n");
}

StoredPatch load_patch(const std::string& stem) {
  json j;
  try {
    j = json::parse(read_text_file(stem + ".json"));
  } catch (const json::exception& e) {
    throw ConfigError("bad patch sidecar '" + stem + ".json': " + e.what());
  }
  StoredPatch out;
  out.patch.size = j.at("size").get<int>();
  out.patch.row = j.at("location").at(0).get<int>();
  out.patch.col = j.at("location").at(1).get<int>();
  out.patch.pixels = read_ppm(stem + ".ppm").to_image();
  if (out.patch.pixels.height != out.patch.size || out.patch.pixels.width != out.patch.size) {
    throw ConfigError("patch image size does not match its sidecar");
  }
  out.meta.objective = j.value("objective", "");
  out.meta.seed = j.value("seed", std::uint64_t{0});
  out.meta.model_checksum = std::stoull(j.value("model_checksum", std::string("0")));
  out.meta.iterations = j.value("iterations", 0);
  return out;
}

}  // namespace slowvit
