// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "slowvit/dataset.hpp"
#include "slowvit/optim.hpp"
#include "slowvit/patch.hpp"
#include "slowvit/vit.hpp"

namespace slowvit {

struct TrainConfig {
  AdamWConfig optimizer{.lr = 1e-3, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8, .weight_decay = 0.05};
  int batch_size = 32;
  int epochs = 10;
  /// Multiplier on the policy's efficiency term (A-ViT halting losses, AdaViT usage loss).
  double efficiency_weight = 1.0;
  /// Linear warmup steps followed by cosine decay to zero.
  int warmup_steps = 0;
  bool cosine_decay = true;
  std::uint64_t seed = 0;
};

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;
  double task_loss = 0.0;
  double train_top1 = 0.0;
  double mean_flops = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  int steps = 0;
};

/// Per-step hooks used by adversarial training.
struct TrainHooks {
  /// Patch pasted on every image of the step's minibatch (none when empty).
  std::function<std::optional<Patch>(int epoch, int step)> batch_patch;
  /// Called after the optimizer step; `step` is 1-based within the epoch.
  std::function<void(int epoch, int step, int steps_per_epoch)> after_step;
  /// Called after each epoch.
  std::function<void(const EpochMetrics&)> on_epoch;
};

/// Task loss plus the policy's training-time efficiency loss for one forward.
ag::Var training_loss(const VisionTransformer& model, const ForwardResult& out, int label, double efficiency_weight,
                      ag::Var* task_loss = nullptr);

/// Trains `model` in place with AdamW. Throws DivergenceError on a non-finite loss,
/// leaving the parameters from the last completed step.
TrainResult train_backbone(VisionTransformer& model, const Dataset& data, const TrainConfig& config,
                           const TrainHooks& hooks = {});

}  // namespace slowvit
