// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "slowvit/autograd.hpp"
#include "slowvit/config.hpp"

namespace slowvit::avit {

/// Per-token halting score from the first embedding channel:
/// sigmoid(gate_gain * t[:, 0] + gate_bias). Returns rows x 1.
ag::Var halting_score(const ag::Var& tokens, const HaltingParams& params);

/// Halting outcome for the K non-class tokens of one image.
struct HaltingRecord {
  /// K x L halting scores; entries after a token's halting layer are zero.
  ag::Var scores;
  /// 1-based halting layer N_k (num_layers when the token never halted).
  std::vector<int> halt_layer;
  /// K x 1 remainders r_k = 1 - sum_{l < N_k} h_k^l.
  ag::Var remainder;

  int num_tokens() const { return static_cast<int>(halt_layer.size()); }
  int num_layers() const { return static_cast<int>(scores.cols()); }
};

/// Applies cumulative halting layer by layer. A token halts at the first
/// layer where its cumulative score reaches 1 - epsilon and is inactive for
/// every later layer; it never reactivates.
class HaltingTracker {
 public:
  HaltingTracker(int num_tokens, int num_layers, const HaltingParams& params);

  /// Activity of the K non-class tokens for the next layer to be observed.
  const std::vector<bool>& active() const { return active_; }
  int layers_observed() const { return static_cast<int>(columns_.size()); }

  /// Consumes the K x 1 raw scores of the next layer. Scores of tokens that
  /// were inactive at this layer are masked to zero. Returns the masked scores.
  ag::Var observe(const ag::Var& raw_scores);

  /// Requires all layers observed.
  HaltingRecord finish() const;

 private:
  int num_tokens_;
  int num_layers_;
  double threshold_;
  std::vector<bool> active_;
  std::vector<double> cumulative_;
  std::vector<int> halt_layer_;
  std::vector<ag::Var> columns_;
};

/// (1/K) sum_k (N_k + r_k). Gradient flows through r_k only.
ag::Var ponder_loss(const HaltingRecord& record);

/// Normalized Gaussian over 1-based layer indices 1..num_layers.
std::vector<double> gaussian_prior(int num_layers, double target_layer, double prior_std);

/// KL(p~ || q) between the normalized mean per-layer halting scores and the
/// Gaussian prior.
ag::Var distribution_loss(const HaltingRecord& record, const HaltingParams& params);

/// alpha_d * L_distr + alpha_p * L_ponder, the efficiency term of training.
ag::Var efficiency_loss(const HaltingRecord& record, const HaltingParams& params);

/// -(alpha_d * L_distr + alpha_p * L_ponder); minimizing it maximizes compute.
ag::Var avit_attack_loss(const HaltingRecord& record, const HaltingParams& params);

}  // namespace slowvit::avit
