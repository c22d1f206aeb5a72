// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "slowvit/autograd.hpp"
#include "slowvit/config.hpp"
#include "slowvit/trace.hpp"

namespace slowvit::ats {

/// Significance of every token slot; slot 0 (class token) is always zero.
struct SignificanceScores {
  Vector scores;
  /// True when the class token attended only to itself and the scores fell
  /// back to uniform over the active tokens.
  bool uniform_fallback = false;
};

/// S_j = A_{1,j} ||V_j|| / sum_{i>=2} A_{1,i} ||V_i|| over token slots j >= 1.
/// `active` (optional) restricts the fallback support; inactive slots score 0.
SignificanceScores significance_scores(const RowVector& class_attention, const Vector& value_norms,
                                       const std::vector<bool>& active = {});

/// Deterministic inverse transform sampling at quantiles (k - 0.5) / n_target.
/// Returns sorted, de-duplicated slots with the class token (0) always first.
std::vector<int> inverse_transform_sample(const SignificanceScores& scores, int n_target);

/// sum_{i>=2} (A_{1,i} - 1/N)^2 over the active non-class slots of one head's
/// n x n attention, N being the number of active tokens.
ag::Var class_attention_mse(const ag::Var& attention, const std::vector<bool>& active);

/// Weighted sum over ATS layers of the per-head class-attention MSE summed
/// over heads.
ag::Var ats_attack_loss(const ComputeTrace& trace, const AtsParams& params);

}  // namespace slowvit::ats
