// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "slowvit/dataset.hpp"
#include "slowvit/optim.hpp"
#include "slowvit/patch.hpp"
#include "slowvit/vit.hpp"

namespace slowvit {

enum class ObjectiveKind { compute_only, preserve_acc, destroy_acc, tap, ntap, random };

std::string_view to_string(ObjectiveKind k);
ObjectiveKind parse_objective(std::string_view name);

struct AttackObjective {
  ObjectiveKind kind = ObjectiveKind::compute_only;
  double task_weight = 0.0;
  /// Target class for tap.
  int target_class = -1;

  void validate(int num_classes) const;
  std::string describe() const;
};

/// The policy's own attack loss (lower means more computation).
ag::Var policy_attack_loss(const ModelConfig& config, const ComputeTrace& trace);

/// Loss minimized by patch training. `label` is required by preserve_acc,
/// destroy_acc and ntap.
ag::Var attack_loss(const AttackObjective& objective, const ModelConfig& config, const ForwardResult& out,
                    std::optional<int> label);

/// Forward options used while optimizing a patch: pixel gradients, frozen
/// parameters, soft gating decisions for AdaViT.
ForwardOptions attack_forward_options(std::uint64_t gumbel_seed);

struct PatchTrainConfig {
  AdamWConfig optimizer{.lr = 0.2, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8, .weight_decay = 0.0};
  int batch_size = 32;
  int epochs = 1;
  /// Upper bound on optimizer steps; negative means epochs * batches.
  int max_iterations = -1;
  std::uint64_t seed = 0;
};

struct PatchTrainResult {
  Patch patch;
  std::vector<double> loss_history;
  int iterations = 0;
};

/// Optimizes a universal patch against a frozen model. Each step pastes the
/// current quantized patch on a minibatch, averages the pixel gradient of the
/// objective over the batch, takes an AdamW step on a continuous copy and
/// re-quantizes. Throws DivergenceError on a non-finite loss.
PatchTrainResult train_patch(const VisionTransformer& model, const Dataset& data, const AttackObjective& objective,
                             const PatchTrainConfig& config, const Patch& initial);

/// Reference numbers an attack is scored against.
struct EvalBaseline {
  double flops_min = 0.0;  // mean FLOPs without a patch
  double flops_max = 0.0;  // FLOPs with the adaptive policy disabled
  double top1 = 0.0;       // accuracy without a patch
};

struct AttackReport {
  bool attacked = false;
  double mean_flops = 0.0;
  double top1 = 0.0;
  EvalBaseline baseline;
  /// Attack success of `mean_flops` against the baseline; 0 without a patch.
  double success = 0.0;
  std::vector<std::int64_t> per_image_flops;
  std::vector<double> per_layer_tokens;  // mean retained tokens per layer

  /// Histogram of per-image FLOPs over `bins` equal-width bins spanning
  /// [min, max] of the data.
  std::vector<int> flops_histogram(int bins) const;
  std::string to_json() const;
};

/// Hard-mode evaluation with no gradient tracking. AdaViT decisions use
/// Gumbel noise seeded from the config's eval seed and the image index.
AttackReport evaluate(const VisionTransformer& model, const Dataset& data, const Patch* patch,
                      const std::optional<EvalBaseline>& baseline = std::nullopt);

/// Clean evaluation plus architectural maximum.
EvalBaseline evaluate_baseline(const VisionTransformer& model, const Dataset& data);

/// Evaluates with `patch` (or without, when null) and scores it against `baseline`.
AttackReport evaluate_attack(const VisionTransformer& model, const Dataset& data, const Patch* patch,
                             const EvalBaseline& baseline);

}  // namespace slowvit
