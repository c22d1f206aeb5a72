// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace slowvit {

enum class AdaptivePolicy { none, avit, ats, adavit };

std::string_view to_string(AdaptivePolicy p);
AdaptivePolicy parse_policy(std::string_view name);

/// Token-halting hyperparameters.
struct HaltingParams {
  double epsilon = 0.01;
  double gate_gain = 5.0;
  double gate_bias = -10.0;
  double alpha_d = 0.1;
  double alpha_p = 0.001;
  /// Centre (1-based layer index) of the Gaussian prior over halting layers.
  double target_layer = 1.0;
  double prior_std = 1.0;

  void validate() const;
};

/// Adaptive token sampling hyperparameters. Layer indices are 1-based.
struct AtsParams {
  std::vector<int> ats_layers;
  int max_tokens = 197;
  std::vector<double> layer_loss_weights;

  void validate(int num_layers) const;
  /// 1.0 for the first layer, then x0.2 per subsequent layer.
  static std::vector<double> default_weights(std::size_t count);
};

/// Decision-network gating hyperparameters (weights live in the model).
struct DecisionParams {
  double gumbel_temperature = 1.0;
  /// Target keep ratios for patches, heads, blocks.
  std::array<double, 3> gammas{0.7, 0.8, 0.9};
  /// Initial bias on every decision logit (positive keeps more at start).
  double init_bias = 2.0;
  /// Seed used for the Gumbel noise during hard-mode evaluation.
  std::uint64_t eval_seed = 0x5eed;

  void validate() const;
};

struct ModelConfig {
  int image_size = 32;
  int patch_size = 8;
  int embed_dim = 64;
  int num_layers = 4;
  int num_heads = 4;
  double mlp_ratio = 4.0;
  int num_classes = 10;
  AdaptivePolicy adaptive_policy = AdaptivePolicy::none;
  HaltingParams halting;
  AtsParams ats;
  DecisionParams decision;
  /// Per-channel normalization applied to pixels / 255.
  std::array<double, 3> pixel_mean{0.4914, 0.4822, 0.4465};
  std::array<double, 3> pixel_std{0.2470, 0.2435, 0.2616};

  /// Throws ConfigError when geometry or policy parameters are inconsistent.
  void validate() const;

  int grid() const { return image_size / patch_size; }
  int num_patches() const { return grid() * grid(); }
  int num_tokens() const { return 1 + num_patches(); }
  int head_dim() const { return embed_dim / num_heads; }
  int mlp_hidden() const;
  int patch_features() const { return patch_size * patch_size * 3; }

  std::string to_json() const;
  static ModelConfig from_json(std::string_view text);
  static ModelConfig load(const std::string& path);
  void save(const std::string& path) const;
};

}  // namespace slowvit
