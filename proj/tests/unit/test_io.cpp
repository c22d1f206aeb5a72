// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "slowvit/checkpoint.hpp"
#include "slowvit/dataset.hpp"
#include "slowvit/errors.hpp"
#include "slowvit_test.hpp"

namespace slowvit {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

Dataset cifar_like(int n, std::uint64_t seed) {
  Dataset d = make_synthetic(n, 32, 10, seed);
  return d;
}

TEST(Checkpoint, RoundTripPreservesEverything) {
  TempDir dir("ckpt");
  for (AdaptivePolicy p : {AdaptivePolicy::none, AdaptivePolicy::avit, AdaptivePolicy::ats, AdaptivePolicy::adavit}) {
    const VisionTransformer m(testing::tiny_config(p, 2), 1);
    save_checkpoint(dir.file("m.ckpt"), m);
    const VisionTransformer back = load_checkpoint(dir.file("m.ckpt"));
    EXPECT_EQ(back.parameters().checksum(), m.parameters().checksum());
    EXPECT_EQ(back.config().to_json(), m.config().to_json());
    ag::Tape t1(false);
    ag::Tape t2(false);
    ParamBinding b1(t1, m.parameters(), false);
    ParamBinding b2(t2, back.parameters(), false);
    const Image img = testing::random_image(16, 16, 2);
    EXPECT_EQ(m.forward(b1, img).logits.value(), back.forward(b2, img).logits.value());
  }
}

TEST(Checkpoint, RejectsGarbageAndTruncation) {
  TempDir dir("ckpt_bad");
  {
    std::ofstream(dir.file("junk.ckpt")) << "definitely not a checkpoint";
  }
  EXPECT_THROW(load_checkpoint(dir.file("junk.ckpt")), ConfigError);
  EXPECT_THROW(load_checkpoint(dir.file("missing.ckpt")), ConfigError);

  const VisionTransformer m(testing::tiny_config(AdaptivePolicy::avit), 3);
  save_checkpoint(dir.file("m.ckpt"), m);
  const auto size = fs::file_size(dir.file("m.ckpt"));
  fs::copy_file(dir.file("m.ckpt"), dir.file("cut.ckpt"));
  fs::resize_file(dir.file("cut.ckpt"), size - 100);
  EXPECT_THROW(load_checkpoint(dir.file("cut.ckpt")), ConfigError);

  // Flip one byte of tensor data.
  fs::copy_file(dir.file("m.ckpt"), dir.file("flip.ckpt"));
  {
    std::fstream f(dir.file("flip.ckpt"), std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(size - 9));
    f.put('\x5a');
  }
  EXPECT_THROW(load_checkpoint(dir.file("flip.ckpt")), ConfigError);

  // Unsupported version.
  fs::copy_file(dir.file("m.ckpt"), dir.file("ver.ckpt"));
  {
    std::fstream f(dir.file("ver.ckpt"), std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const std::uint32_t v = kCheckpointVersion + 1;
    f.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  EXPECT_THROW(load_checkpoint(dir.file("ver.ckpt")), ConfigError);
}

TEST(Checkpoint, ParameterShapeMismatchRejected) {
  const ModelConfig c = testing::tiny_config(AdaptivePolicy::none);
  Parameters p = VisionTransformer(c, 4).parameters();
  p["head.w"] = Matrix::Zero(3, 3);
  EXPECT_THROW(VisionTransformer(c, p), ConfigError);
}

TEST(Cifar, BatchRoundTrip) {
  TempDir dir("cifar");
  const Dataset d = cifar_like(25, 5);
  write_cifar_batch(dir.file("b.bin"), d);
  EXPECT_EQ(fs::file_size(dir.file("b.bin")), 25u * 3073u);
  const Dataset back = read_cifar_batch(dir.file("b.bin"));
  ASSERT_EQ(back.size(), 25u);
  EXPECT_EQ(back.labels, d.labels);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(back.images[i], d.images[i]);
}

TEST(Cifar, PlanarLayout) {
  TempDir dir("cifar_layout");
  Dataset d;
  d.images.push_back(Image(32, 32, 0.0));
  d.images[0].at(0, 1, 0) = 10;
  d.images[0].at(0, 0, 1) = 20;
  d.images[0].at(31, 31, 2) = 30;
  d.labels.push_back(7);
  write_cifar_batch(dir.file("b.bin"), d);
  std::ifstream in(dir.file("b.bin"), std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ASSERT_EQ(bytes.size(), 3073u);
  EXPECT_EQ(bytes[0], 7);
  EXPECT_EQ(bytes[1 + 1], 10);
  EXPECT_EQ(bytes[1 + 1024], 20);
  EXPECT_EQ(bytes[1 + 3 * 1024 - 1], 30);
}

TEST(Cifar, MalformedBatchRejected) {
  TempDir dir("cifar_bad");
  {
    std::ofstream(dir.file("b.bin"), std::ios::binary) << std::string(100, 'x');
  }
  EXPECT_THROW(read_cifar_batch(dir.file("b.bin")), ConfigError);
}

TEST(Dataset, LoadsCifarDirectoryAndSubsets) {
  TempDir dir("cifar_dir");
  const fs::path sub = fs::path(dir.str()) / "cifar-10-batches-bin";
  fs::create_directories(sub);
  write_cifar_batch((sub / "data_batch_1.bin").string(), cifar_like(40, 6));
  write_cifar_batch((sub / "data_batch_2.bin").string(), cifar_like(40, 7));
  write_cifar_batch((sub / "test_batch.bin").string(), cifar_like(30, 8));
  ASSERT_EQ(find_cifar_dir(dir.str()).value_or(""), sub.string());

  DatasetSpec spec;
  spec.root = dir.str();
  spec.train_count = 50;
  spec.eval_count = 10;
  spec.split_seed = 9;
  const DatasetSplits a = load_dataset(spec);
  EXPECT_EQ(a.source, DataSource::cifar10);
  EXPECT_FALSE(a.substituted);
  EXPECT_EQ(a.train.size(), 50u);
  EXPECT_EQ(a.eval.size(), 10u);
  const DatasetSplits b = load_dataset(spec);
  EXPECT_EQ(a.train.labels, b.train.labels);
  EXPECT_EQ(a.train.images, b.train.images);
  spec.split_seed = 10;
  EXPECT_NE(load_dataset(spec).train.images, a.train.images);
}

TEST(Dataset, MissingCifarFailsUnlessFallbackAllowed) {
  TempDir dir("cifar_missing");
  DatasetSpec spec;
  spec.root = dir.str();
  spec.train_count = 8;
  spec.eval_count = 4;
  EXPECT_THROW(load_dataset(spec), ConfigError);
  spec.synthetic_fallback = true;
  const DatasetSplits s = load_dataset(spec);
  EXPECT_TRUE(s.substituted);
  EXPECT_EQ(s.source, DataSource::synthetic);
  EXPECT_NE(s.description.find("synthetic"), std::string::npos);
}

TEST(Dataset, SyntheticIsDeterministicAndLabelled) {
  const Dataset a = make_synthetic(30, 32, 10, 11);
  const Dataset b = make_synthetic(30, 32, 10, 11);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.labels, b.labels);
  std::set<int> classes(a.labels.begin(), a.labels.end());
  EXPECT_GT(classes.size(), 5u);
  for (const Image& img : a.images) {
    for (double v : img.pixels) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 255.0);
      EXPECT_EQ(v, std::round(v));
    }
  }
}

TEST(Dataset, SpecValidation) {
  DatasetSpec spec;
  spec.train_count = 0;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = DatasetSpec{};
  spec.image_size = 16;
  EXPECT_THROW(spec.validate(), ConfigError);
  EXPECT_THROW(parse_data_source("imagenet"), ConfigError);
  EXPECT_THROW(make_synthetic(3, 32, 10, 1).subset({5}), ContractError);
}

}  // namespace
}  // namespace slowvit
