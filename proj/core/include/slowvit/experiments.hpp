// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "slowvit/attack.hpp"
#include "slowvit/dataset.hpp"
#include "slowvit/defense.hpp"
#include "slowvit/report.hpp"
#include "slowvit/training.hpp"

namespace slowvit {

struct AttackSettings {
  AttackObjective objective;
  int patch_size = 8;
  int row = 0;
  int col = 0;
  PatchTrainConfig train;
  /// Number of random target classes averaged for the tap baseline.
  int tap_targets = 10;
};

struct DefenseSettings {
  int epochs = 1;
  int budget_iterations = 500;
  int refreshes_per_epoch = 5;
  double refresh_lr_multiplier = 4.0;
  /// Minibatch size of the refresh patch optimizer.
  int patch_batch_size = 32;
  /// Learning rate of adversarial fine-tuning; non-positive reuses the backbone lr.
  double lr = 0.0;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string model_config_path;
  ModelConfig model;
  DatasetSpec dataset;
  TrainConfig train;
  AttackSettings attack;
  DefenseSettings defense;
  std::vector<int> ablation_sizes{4, 8, 12, 16};
  std::vector<std::pair<int, int>> ablation_locations{{0, 0}, {12, 12}, {24, 24}, {0, 24}};
  std::string output_dir = "runs/default";

  /// Parses JSON; relative paths resolve against `base_dir`. Throws
  /// ConfigError when the seed is missing or a referenced path does not exist.
  static ExperimentConfig from_json(const std::string& text, const std::string& base_dir = ".");
  static ExperimentConfig load(const std::string& path);
  std::string to_json() const;

  void validate() const;
  Patch initial_patch(std::uint64_t stream) const;
};

/// Progress messages from long-running drivers.
using Logger = std::function<void(const std::string&)>;

struct BackboneOutcome {
  VisionTransformer model;
  TrainResult training;
  EvalBaseline baseline;
  std::string checkpoint_path;
};

/// Trains the configured model and writes backbone.ckpt plus backbone_metrics.json.
BackboneOutcome run_train_backbone(const ExperimentConfig& cfg, const DatasetSplits& data, const Logger& log = {});

struct AttackOutcome {
  PatchTrainResult patch;
  AttackReport report;
};

/// Trains a patch with `settings` and evaluates it. For tap with several
/// targets the reports are averaged and the first target's patch is returned.
AttackOutcome run_attack(const VisionTransformer& model, const DatasetSplits& data, const AttackSettings& settings,
                         const EvalBaseline& baseline, std::uint64_t seed, const Logger& log = {});

/// Writes the patch artifact and report JSON under `dir` with file stem `name`.
void write_attack_outputs(const std::string& dir, const std::string& name, const AttackOutcome& outcome,
                          const AttackSettings& settings, std::uint64_t model_checksum);

struct AblationPoint {
  int size = 0;
  int row = 0;
  int col = 0;
  double area = 0.0;
  AttackReport report;
};

std::vector<AblationPoint> ablate_size(const VisionTransformer& model, const DatasetSplits& data,
                                       const ExperimentConfig& cfg, const EvalBaseline& baseline,
                                       const Logger& log = {});
std::vector<AblationPoint> ablate_location(const VisionTransformer& model, const DatasetSplits& data,
                                           const ExperimentConfig& cfg, const EvalBaseline& baseline,
                                           const Logger& log = {});
std::string ablation_markdown(const std::vector<AblationPoint>& points, bool by_size);

struct DefenseOutcome {
  VisionTransformer defended;
  DefenseResult defense;
  AttackReport undefended_clean;
  AttackReport undefended_attack;
  AttackReport defended_clean;
  AttackReport defended_attack;
  /// No attack / attack / defense + attack.
  std::vector<report::Row> table;
};

/// Adversarially fine-tunes a copy of `model`, then attacks both models with a
/// fresh patch of equal budget. Success is scored against the undefended
/// model's clean FLOPs.
DefenseOutcome run_defense(const VisionTransformer& model, const DatasetSplits& data, const ExperimentConfig& cfg,
                           const Logger& log = {});

}  // namespace slowvit
