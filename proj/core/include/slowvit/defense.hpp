// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slowvit/attack.hpp"
#include "slowvit/training.hpp"

namespace slowvit {

struct PoolEntry {
  Patch patch;
  /// Training progress (in epochs) when the patch was generated.
  double epoch_fraction = 0.0;
  int iterations = 0;
};

/// Append-only set of universal patches sharing one geometry.
class PatchPool {
 public:
  const std::vector<PoolEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  /// Throws ContractError when the geometry differs from earlier patches.
  void append(PoolEntry entry);

  /// Writes `<dir>/patch_NNN.{ppm,json}` and `<dir>/manifest.json`.
  void save(const std::string& dir) const;
  static PatchPool load(const std::string& dir);

 private:
  std::vector<PoolEntry> entries_;
};

/// Uniform choice; throws ContractError on an empty pool.
const Patch& sample_patch(const PatchPool& pool, std::uint64_t seed);

/// 1-based steps within an epoch after which the pool is refreshed: the 20%,
/// 40%, ..., 100% marks (deduplicated for short epochs).
std::vector<int> refresh_steps(int steps_per_epoch, int refreshes_per_epoch = 5);

/// Trains one fresh patch against the current model and appends it.
void refresh_pool(const VisionTransformer& model, const Dataset& data, PatchPool& pool,
                  const AttackObjective& objective, const PatchTrainConfig& config, double epoch_fraction);

struct DefenseConfig {
  TrainConfig train;
  AttackObjective objective;
  /// Patch optimizer used for refreshes; its lr is multiplied by refresh_lr_multiplier.
  PatchTrainConfig patch;
  int budget_iterations = 500;
  int refreshes_per_epoch = 5;
  double refresh_lr_multiplier = 4.0;
  int patch_size = 8;
  int patch_row = 0;
  int patch_col = 0;
  std::uint64_t seed = 0;
};

struct DefenseResult {
  TrainResult training;
  PatchPool pool;
};

/// Adversarial training: every minibatch gets a patch sampled from the pool;
/// the pool starts with one random patch and grows at each refresh mark.
DefenseResult adversarial_train(VisionTransformer& model, const Dataset& data, const DefenseConfig& config);

}  // namespace slowvit
