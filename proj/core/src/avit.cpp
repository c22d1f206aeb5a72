// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "slowvit/avit.hpp"

#include <cmath>

#include "slowvit/errors.hpp"

namespace slowvit::avit {

ag::Var halting_score(const ag::Var& tokens, const HaltingParams& params) {
  if (tokens.cols() < 1) throw ContractError("halting_score: tokens have no channels");
  return ag::sigmoid(ag::add_scalar(ag::scale(ag::cols(tokens, 0, 1), params.gate_gain), params.gate_bias));
}

HaltingTracker::HaltingTracker(int num_tokens, int num_layers, const HaltingParams& params)
    : num_tokens_(num_tokens),
      num_layers_(num_layers),
      threshold_(1.0 - params.epsilon),
      active_(static_cast<std::size_t>(num_tokens), true),
      cumulative_(static_cast<std::size_t>(num_tokens), 0.0),
      halt_layer_(static_cast<std::size_t>(num_tokens), 0) {
  params.validate();
  if (num_tokens < 0 || num_layers < 1) throw ContractError("HaltingTracker: bad dimensions");
}

ag::Var HaltingTracker::observe(const ag::Var& raw_scores) {
  if (layers_observed() >= num_layers_) throw ContractError("HaltingTracker: more layers than configured");
  if (raw_scores.rows() != num_tokens_ || raw_scores.cols() != 1) {
    throw ContractError("HaltingTracker: scores must be K x 1");
  }
  const int layer = layers_observed() + 1;
  Matrix mask(num_tokens_, 1);
  for (int i = 0; i < num_tokens_; ++i) mask(i, 0) = active_[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
  const ag::Var masked = ag::mul(raw_scores, raw_scores.tape()->constant(std::move(mask)));
  const Matrix& h = masked.value();
  for (int i = 0; i < num_tokens_; ++i) {
    const auto s = static_cast<std::size_t>(i);
    if (!active_[s]) continue;
    cumulative_[s] += h(i, 0);
    if (cumulative_[s] >= threshold_) {
      halt_layer_[s] = layer;
      active_[s] = false;
    }
  }
  columns_.push_back(masked);
  return masked;
}

HaltingRecord HaltingTracker::finish() const {
  if (layers_observed() != num_layers_) throw ContractError("HaltingTracker::finish: not every layer was observed");
  HaltingRecord rec;
  rec.scores = ag::hcat(columns_);
  rec.halt_layer = halt_layer_;
  Matrix before = Matrix::Zero(num_tokens_, num_layers_);
  for (int i = 0; i < num_tokens_; ++i) {
    int& n = rec.halt_layer[static_cast<std::size_t>(i)];
    if (n == 0) n = num_layers_;
    for (int l = 0; l + 1 < n; ++l) before(i, l) = 1.0;
  }
  ag::Tape& tape = *rec.scores.tape();
  const ag::Var spent = ag::row_sum(ag::mul(rec.scores, tape.constant(std::move(before))));
  rec.remainder = ag::sub(tape.constant(Matrix::Ones(num_tokens_, 1)), spent);
  return rec;
}

ag::Var ponder_loss(const HaltingRecord& record) {
  const int k = record.num_tokens();
  if (k == 0) throw DomainError("ponder_loss: no tokens");
  Matrix layers(k, 1);
  for (int i = 0; i < k; ++i) layers(i, 0) = record.halt_layer[static_cast<std::size_t>(i)];
  ag::Tape& tape = *record.remainder.tape();
  return ag::mean(ag::add(tape.constant(std::move(layers)), record.remainder));
}

std::vector<double> gaussian_prior(int num_layers, double target_layer, double prior_std) {
  std::vector<double> q(static_cast<std::size_t>(num_layers));
  double z = 0.0;
  for (int l = 1; l <= num_layers; ++l) {
    const double t = (l - target_layer) / prior_std;
    q[static_cast<std::size_t>(l - 1)] = std::exp(-0.5 * t * t);
    z += q[static_cast<std::size_t>(l - 1)];
  }
  for (double& v : q) v /= z;
  return q;
}

ag::Var distribution_loss(const HaltingRecord& record, const HaltingParams& params) {
  const int k = record.num_tokens();
  if (k == 0) throw DomainError("distribution_loss: no tokens");
  const int layers = record.num_layers();
  ag::Tape& tape = *record.scores.tape();
  // p_l = mean_k h_k^l as a 1 x L row.
  const ag::Var p = ag::matmul(tape.constant(Matrix::Constant(1, k, 1.0 / k)), record.scores);
  const ag::Var total = ag::clamp_min(ag::sum(p), 1e-8);
  const ag::Var p_norm = ag::div_scalar(p, total);
  const std::vector<double> q = gaussian_prior(layers, params.target_layer, params.prior_std);
  Matrix log_q(1, layers);
  for (int l = 0; l < layers; ++l) log_q(0, l) = std::log(q[static_cast<std::size_t>(l)]);
  // 0 log 0 = 0; the offset keeps log finite on empty layers.
  const ag::Var log_p = ag::log(ag::add_scalar(p_norm, 1e-12));
  return ag::sum(ag::mul(p_norm, ag::sub(log_p, tape.constant(std::move(log_q)))));
}

ag::Var efficiency_loss(const HaltingRecord& record, const HaltingParams& params) {
  return ag::add(ag::scale(distribution_loss(record, params), params.alpha_d),
                 ag::scale(ponder_loss(record), params.alpha_p));
}

ag::Var avit_attack_loss(const HaltingRecord& record, const HaltingParams& params) {
  return ag::scale(efficiency_loss(record, params), -1.0);
}

}  // namespace slowvit::avit
