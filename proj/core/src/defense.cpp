// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "slowvit/defense.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include "json_io.hpp"
#include "slowvit/errors.hpp"
#include "slowvit/random.hpp"

namespace slowvit {

namespace fs = std::filesystem;

namespace {

std::string entry_stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "patch_%03zu", i);
  return buf;
}

}  // namespace

void PatchPool::append(PoolEntry entry) {
  if (!entries_.empty()) {
    const Patch& first = entries_.front().patch;
    if (entry.patch.size != first.size || entry.patch.row != first.row || entry.patch.col != first.col) {
      throw ContractError("PatchPool: all patches must share size and location");
    }
  }
  entries_.push_back(std::move(entry));
}

void PatchPool::save(const std::string& dir) const {
  fs::create_directories(dir);
  json manifest = json::array();
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const PoolEntry& e = entries_[i];
    const std::string stem = entry_stem(i);
    save_patch((fs::path(dir) / stem).string(), e.patch, PatchMetadata{"pool", 0, 0, e.iterations});
    manifest.push_back({{"file", stem}, {"epoch_fraction", e.epoch_fraction}, {"iterations", e.iterations}});
  }
  write_text_file((fs::path(dir) / "manifest.json").string(), json{{"patches", manifest}}.dump(2) + "\n");
}

PatchPool PatchPool::load(const std::string& dir) {
  const json manifest = json::parse(read_text_file((fs::path(dir) / "manifest.json").string()));
  PatchPool pool;
  for (const auto& m : manifest.at("patches")) {
    StoredPatch sp = load_patch((fs::path(dir) / m.at("file").get<std::string>()).string());
    pool.append(PoolEntry{std::move(sp.patch), m.at("epoch_fraction").get<double>(), m.at("iterations").get<int>()});
  }
  return pool;
}

const Patch& sample_patch(const PatchPool& pool, std::uint64_t seed) {
  if (pool.empty()) throw ContractError("sample_patch: pool is empty");
  Rng rng(seed);
  return pool.entries()[uniform_index(rng, pool.size())].patch;
}

std::vector<int> refresh_steps(int steps_per_epoch, int refreshes_per_epoch) {
  if (steps_per_epoch < 1 || refreshes_per_epoch < 1) throw ContractError("refresh_steps: counts must be >= 1");
  std::vector<int> marks;
  for (int k = 1; k <= refreshes_per_epoch; ++k) {
    const int s = std::max(1, static_cast<int>(static_cast<long long>(k) * steps_per_epoch / refreshes_per_epoch));
    if (marks.empty() || marks.back() != s) marks.push_back(s);
  }
  return marks;
}

void refresh_pool(const VisionTransformer& model, const Dataset& data, PatchPool& pool,
                  const AttackObjective& objective, const PatchTrainConfig& config, double epoch_fraction) {
  if (pool.empty()) throw ContractError("refresh_pool: the pool needs a seed patch for its geometry");
  const Patch& ref = pool.entries().front().patch;
  const ModelConfig& mc = model.config();
  const Patch init = init_patch(ref.size, ref.row, ref.col, mc.image_size, mc.image_size,
                                derive_seed(config.seed, "refresh-init"));
  PatchTrainResult r = train_patch(model, data, objective, config, init);
  pool.append(PoolEntry{std::move(r.patch), epoch_fraction, r.iterations});
}

DefenseResult adversarial_train(VisionTransformer& model, const Dataset& data, const DefenseConfig& config) {
  if (model.config().adaptive_policy == AdaptivePolicy::none) {
    throw ContractError("adversarial_train: the model has no adaptive policy");
  }
  const ModelConfig& mc = model.config();
  DefenseResult result;
  result.pool.append(PoolEntry{init_patch(config.patch_size, config.patch_row, config.patch_col, mc.image_size,
                                          mc.image_size, derive_seed(config.seed, "pool-seed")),
                               0.0, 0});

  const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(std::max(config.train.batch_size, 1)), data.size());
  const int steps_per_epoch = static_cast<int>((data.size() + bs - 1) / bs);
  const std::vector<int> marks = refresh_steps(steps_per_epoch, config.refreshes_per_epoch);

  PatchTrainConfig patch_cfg = config.patch;
  patch_cfg.optimizer.lr *= config.refresh_lr_multiplier;
  patch_cfg.max_iterations = config.budget_iterations;

  TrainHooks hooks;
  hooks.batch_patch = [&](int epoch, int step) -> std::optional<Patch> {
    const auto s = derive_seed(config.seed, static_cast<std::uint64_t>(epoch) * steps_per_epoch + step);
    return sample_patch(result.pool, s);
  };
  hooks.after_step = [&](int epoch, int step, int per_epoch) {
    if (std::find(marks.begin(), marks.end(), step) == marks.end()) return;
    PatchTrainConfig c = patch_cfg;
    c.seed = derive_seed(config.seed, "refresh-" + std::to_string(result.pool.size()));
    refresh_pool(model, data, result.pool, config.objective, c, epoch + static_cast<double>(step) / per_epoch);
  };
  result.training = train_backbone(model, data, config.train, hooks);
  return result;
}

}  // namespace slowvit
