// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "slowvit/autograd.hpp"

namespace slowvit::adavit {

/// Decision-network weights of one block, bound to a tape.
struct DecisionWeights {
  ag::Var patch_w;  // d x 1
  ag::Var patch_b;  // 1 x 1
  ag::Var head_w;   // d x H
  ag::Var head_b;   // 1 x H
  ag::Var block_w;  // d x 1
  ag::Var block_b;  // 1 x 1
};

struct DecisionLogits {
  ag::Var patch;  // n x 1, one per token (row 0 is the class token)
  ag::Var head;   // 1 x H, from the class token
  ag::Var block;  // 1 x 1, from the class token
};

/// Linear decision heads on the block input Z (n x d).
DecisionLogits decision_forward(const ag::Var& block_input, const DecisionWeights& weights);

/// Gumbel-sigmoid relaxation of keep/discard decisions:
/// soft = sigmoid((m + g1 - g0) / temperature) with g0, g1 ~ Gumbel(0, 1) drawn
/// from `seed`. In hard mode the value is (soft > 0.5) and the gradient is the
/// soft mask's gradient (straight-through).
ag::Var gumbel_mask(const ag::Var& logits, double temperature, bool hard, std::uint64_t seed);

/// Keep masks for every block. Patch masks cover the K non-class tokens.
struct KeepMasks {
  std::vector<ag::Var> patch;  // K x 1 per block
  std::vector<ag::Var> head;   // 1 x H per block
  std::vector<ag::Var> block;  // 1 x 1 per block

  /// Mean keep rates (patch, head, block) over the whole network.
  std::array<ag::Var, 3> mean_rates() const;
};

/// sum over {p, h, b} of (mean keep rate - gamma)^2.
ag::Var usage_loss(const KeepMasks& masks, const std::array<double, 3>& gammas);

/// Usage loss with zero targets, negated: -[(mean M^p)^2 + (mean M^h)^2 + (mean M^b)^2].
ag::Var adavit_attack_loss(const KeepMasks& masks);

}  // namespace slowvit::adavit
