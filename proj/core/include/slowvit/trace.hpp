// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include "slowvit/adavit.hpp"
#include "slowvit/autograd.hpp"
#include "slowvit/avit.hpp"
#include "slowvit/config.hpp"

namespace slowvit {

/// What one transformer block did for one image.
struct LayerTrace {
  /// Tokens the block processed, class token included.
  int retained_tokens = 0;
  /// Activity of every token slot as the block saw it (slot 0 is the class token).
  std::vector<bool> active;
  int heads_active = 0;
  bool block_on = true;
  /// Per-head attention (n x n); rows over active keys sum to one.
  std::vector<Matrix> attention;
  /// Graph handles of `attention`, valid while the forward tape is alive.
  std::vector<ag::Var> attention_vars;
  /// avit: masked halting score of every token slot (class slot is zero).
  Vector halting;
  /// ats: token slots kept for the following layers (class token included).
  std::vector<int> sampled;
  bool ats_uniform_fallback = false;
  /// adavit: keep values of token slots, heads and the block.
  Vector token_keep;
  RowVector head_keep;
  double block_keep = 1.0;
};

/// Bridge between a forward pass and FLOPs accounting / attack losses.
struct ComputeTrace {
  AdaptivePolicy policy = AdaptivePolicy::none;
  std::vector<LayerTrace> layers;
  RowVector logits;
  std::optional<avit::HaltingRecord> halting;
  std::optional<adavit::KeepMasks> masks;

  /// Retained token count per layer.
  std::vector<int> retained_counts() const;
};

}  // namespace slowvit
