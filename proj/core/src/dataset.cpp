// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "slowvit/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "slowvit/errors.hpp"
#include "slowvit/random.hpp"

namespace slowvit {

namespace fs = std::filesystem;

namespace {

constexpr int kCifarSide = 32;
constexpr std::size_t kCifarRecord = 1 + 3 * kCifarSide * kCifarSide;

std::vector<std::size_t> shuffled_prefix(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
  idx.resize(std::min(count, n));
  return idx;
}

}  // namespace

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.num_classes = num_classes;
  out.images.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw ContractError("Dataset::subset: index out of range");
    out.images.push_back(images[i]);
    out.labels.push_back(labels[i]);
  }
  return out;
}

std::string_view to_string(DataSource s) { return s == DataSource::cifar10 ? "cifar10" : "synthetic"; }

DataSource parse_data_source(std::string_view name) {
  if (name == "cifar10") return DataSource::cifar10;
  if (name == "synthetic") return DataSource::synthetic;
  throw ConfigError("unknown dataset source '" + std::string(name) + "'");
}

void DatasetSpec::validate() const {
  if (image_size < 1) throw ConfigError("dataset image_size must be >= 1");
  if (num_classes < 2) throw ConfigError("dataset num_classes must be >= 2");
  if (train_count < 1 || eval_count < 1) throw ConfigError("dataset split counts must be >= 1");
  if (source == DataSource::cifar10 && (image_size != kCifarSide || num_classes != 10)) {
    throw ConfigError("cifar10 images are 32x32 with 10 classes");
  }
}

Dataset make_synthetic(int count, int image_size, int num_classes, std::uint64_t seed) {
  if (count < 0 || image_size < 1 || num_classes < 1) throw ConfigError("make_synthetic: bad arguments");
  struct Blob {
    double cy, cx, sigma;
    double rgb[3];
  };
  constexpr int kBlobs = 2;
  const double s = image_size;
  // Class prototypes depend only on the class count and image size, so train
  // and eval sets drawn with different seeds share them.
  Rng proto_rng(derive_seed(static_cast<std::uint64_t>(num_classes) * 1000003u + image_size, "synthetic-prototypes"));
  std::vector<std::array<Blob, kBlobs>> protos(static_cast<std::size_t>(num_classes));
  for (auto& blobs : protos) {
    for (Blob& b : blobs) {
      b.cy = s * (0.15 + 0.7 * uniform01(proto_rng));
      b.cx = s * (0.15 + 0.7 * uniform01(proto_rng));
      b.sigma = s * (0.08 + 0.1 * uniform01(proto_rng));
      for (double& c : b.rgb) c = 255.0 * uniform01(proto_rng);
    }
  }

  Dataset out;
  out.num_classes = num_classes;
  out.images.reserve(static_cast<std::size_t>(count));
  out.labels.reserve(static_cast<std::size_t>(count));
  Rng rng(derive_seed(seed, "synthetic-samples"));
  for (int n = 0; n < count; ++n) {
    const int label = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(num_classes)));
    Image img(image_size, image_size);
    const double background = 60.0 + 60.0 * uniform01(rng);
    std::array<Blob, kBlobs> blobs = protos[static_cast<std::size_t>(label)];
    for (Blob& b : blobs) {
      b.cy += 0.06 * s * normal(rng);
      b.cx += 0.06 * s * normal(rng);
      for (double& c : b.rgb) c = std::clamp(c + 25.0 * normal(rng), 0.0, 255.0);
    }
    for (int r = 0; r < image_size; ++r) {
      for (int c = 0; c < image_size; ++c) {
        double px[3] = {background, background, background};
        for (const Blob& b : blobs) {
          const double dy = (r + 0.5 - b.cy) / b.sigma;
          const double dx = (c + 0.5 - b.cx) / b.sigma;
          const double w = std::exp(-0.5 * (dy * dy + dx * dx));
          for (int ch = 0; ch < 3; ++ch) px[ch] = (1.0 - w) * px[ch] + w * b.rgb[ch];
        }
        for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = std::round(std::clamp(px[ch] + 12.0 * normal(rng), 0.0, 255.0));
      }
    }
    out.images.push_back(std::move(img));
    out.labels.push_back(label);
  }
  return out;
}

Dataset read_cifar_batch(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open CIFAR batch '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
    throw ConfigError("'" + path + "' is not a CIFAR-10 binary batch");
  }
  Dataset out;
  const std::size_t count = bytes.size() / kCifarRecord;
  out.images.reserve(count);
  out.labels.reserve(count);
  constexpr int plane = kCifarSide * kCifarSide;
  for (std::size_t n = 0; n < count; ++n) {
    const unsigned char* rec = bytes.data() + n * kCifarRecord;
    if (rec[0] > 9) throw ConfigError("CIFAR label out of range in '" + path + "'");
    Image img(kCifarSide, kCifarSide);
    for (int ch = 0; ch < 3; ++ch) {
      for (int i = 0; i < plane; ++i) img.at(i / kCifarSide, i % kCifarSide, ch) = rec[1 + ch * plane + i];
    }
    out.images.push_back(std::move(img));
    out.labels.push_back(rec[0]);
  }
  return out;
}

void write_cifar_batch(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  constexpr int plane = kCifarSide * kCifarSide;
  std::vector<char> rec(kCifarRecord);
  for (std::size_t n = 0; n < data.size(); ++n) {
    const Image& img = data.images[n];
    if (img.height != kCifarSide || img.width != kCifarSide) throw ConfigError("CIFAR images must be 32x32");
    rec[0] = static_cast<char>(data.labels[n]);
    for (int ch = 0; ch < 3; ++ch) {
      for (int i = 0; i < plane; ++i) {
        rec[1 + ch * plane + i] =
            static_cast<char>(static_cast<unsigned char>(std::clamp(img.at(i / kCifarSide, i % kCifarSide, ch), 0.0, 255.0)));
      }
    }
    out.write(rec.data(), static_cast<std::streamsize>(rec.size()));
  }
}

std::optional<std::string> find_cifar_dir(const std::string& root) {
  std::string base = root;
  if (base.empty()) {
    const char* env = std::getenv(kDataRootEnv);
    if (env == nullptr || *env == '\0') return std::nullopt;
    base = env;
  }
  for (const fs::path& dir : {fs::path(base), fs::path(base) / "cifar-10-batches-bin"}) {
    std::error_code ec;
    if (fs::exists(dir / "data_batch_1.bin", ec) && fs::exists(dir / "test_batch.bin", ec)) return dir.string();
  }
  return std::nullopt;
}

DatasetSplits load_dataset(const DatasetSpec& spec) {
  spec.validate();
  DatasetSplits out;
  const auto train_seed = derive_seed(spec.split_seed, "train-split");
  const auto eval_seed = derive_seed(spec.split_seed, "eval-split");
  if (spec.source == DataSource::cifar10) {
    if (const auto dir = find_cifar_dir(spec.root)) {
      Dataset train;
      for (int b = 1; b <= 5; ++b) {
        const fs::path file = fs::path(*dir) / ("data_batch_" + std::to_string(b) + ".bin");
        if (!fs::exists(file)) continue;
        Dataset part = read_cifar_batch(file.string());
        train.images.insert(train.images.end(), std::make_move_iterator(part.images.begin()),
                            std::make_move_iterator(part.images.end()));
        train.labels.insert(train.labels.end(), part.labels.begin(), part.labels.end());
      }
      const Dataset test = read_cifar_batch((fs::path(*dir) / "test_batch.bin").string());
      out.train = train.subset(shuffled_prefix(train.size(), static_cast<std::size_t>(spec.train_count), train_seed));
      out.eval = test.subset(shuffled_prefix(test.size(), static_cast<std::size_t>(spec.eval_count), eval_seed));
      out.source = DataSource::cifar10;
      out.description = "cifar10 (" + *dir + ")";
      return out;
    }
    if (!spec.synthetic_fallback) {
      throw ConfigError(std::string("CIFAR-10 binaries not found; set ") + kDataRootEnv +
                        " or dataset.root to the cifar-10-batches-bin directory");
    }
    out.substituted = true;
  }
  out.train = make_synthetic(spec.train_count, spec.image_size, spec.num_classes, train_seed);
  out.eval = make_synthetic(spec.eval_count, spec.image_size, spec.num_classes, eval_seed);
  out.source = DataSource::synthetic;
  out.description = out.substituted ? "synthetic substitute (CIFAR-10 not found)" : "synthetic";
  return out;
}

}  // namespace slowvit
