// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "slowvit/image.hpp"

namespace slowvit {

/// Labelled images with pixel values in [0, 255].
struct Dataset {
  std::vector<Image> images;
  std::vector<int> labels;
  int num_classes = 10;

  std::size_t size() const { return images.size(); }
  Dataset subset(const std::vector<std::size_t>& indices) const;
};

enum class DataSource { cifar10, synthetic };

std::string_view to_string(DataSource s);
DataSource parse_data_source(std::string_view name);

/// Environment variable naming the CIFAR-10 binary directory.
inline constexpr const char* kDataRootEnv = "SLOWVIT_DATA_ROOT";

struct DatasetSpec {
  DataSource source = DataSource::cifar10;
  /// Empty means "use $SLOWVIT_DATA_ROOT".
  std::string root;
  int image_size = 32;
  int num_classes = 10;
  int train_count = 5000;
  int eval_count = 1000;
  std::uint64_t split_seed = 0;
  /// Use the synthetic generator when CIFAR-10 files are missing instead of failing.
  bool synthetic_fallback = false;

  void validate() const;
};

struct DatasetSplits {
  Dataset train;
  Dataset eval;
  DataSource source = DataSource::synthetic;
  /// True when CIFAR-10 was requested but the synthetic generator was used.
  bool substituted = false;
  std::string description;
};

/// Seeded Gaussian-blob images: each class has its own blob layout and colours;
/// samples jitter position, colour and add pixel noise.
Dataset make_synthetic(int count, int image_size, int num_classes, std::uint64_t seed);

/// One CIFAR-10 binary batch file (records of 1 label byte + 3072 planar RGB bytes).
Dataset read_cifar_batch(const std::string& path);
void write_cifar_batch(const std::string& path, const Dataset& data);

/// Directory holding data_batch_*.bin and test_batch.bin, if one can be found
/// under `root` (or $SLOWVIT_DATA_ROOT when `root` is empty).
std::optional<std::string> find_cifar_dir(const std::string& root);

/// Train/eval subsets drawn with `split_seed`.
DatasetSplits load_dataset(const DatasetSpec& spec);

}  // namespace slowvit
