// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "slowvit/ats.hpp"

#include <algorithm>
#include <string>

#include "slowvit/errors.hpp"

namespace slowvit::ats {

SignificanceScores significance_scores(const RowVector& class_attention, const Vector& value_norms,
                                       const std::vector<bool>& active) {
  const Eigen::Index n = class_attention.size();
  if (value_norms.size() != n) throw ContractError("significance_scores: attention and value norms differ in length");
  if (!active.empty() && static_cast<Eigen::Index>(active.size()) != n) {
    throw ContractError("significance_scores: active mask has the wrong length");
  }
  auto is_active = [&](Eigen::Index j) { return active.empty() || active[static_cast<std::size_t>(j)]; };

  SignificanceScores out;
  out.scores = Vector::Zero(n);
  double total = 0.0;
  for (Eigen::Index j = 1; j < n; ++j) {
    if (!is_active(j)) continue;
    out.scores(j) = class_attention(j) * value_norms(j);
    total += out.scores(j);
  }
  if (total > 0.0) {
    out.scores /= total;
    return out;
  }
  out.uniform_fallback = true;
  Eigen::Index support = 0;
  for (Eigen::Index j = 1; j < n; ++j) support += is_active(j) ? 1 : 0;
  for (Eigen::Index j = 1; j < n; ++j) {
    out.scores(j) = (support > 0 && is_active(j)) ? 1.0 / static_cast<double>(support) : 0.0;
  }
  return out;
}

std::vector<int> inverse_transform_sample(const SignificanceScores& scores, int n_target) {
  if (n_target < 1) throw ContractError("inverse_transform_sample: n_target must be >= 1");
  const Eigen::Index n = scores.scores.size();
  std::vector<double> cdf(static_cast<std::size_t>(n), 0.0);
  double acc = 0.0;
  Eigen::Index last_positive = 0;
  for (Eigen::Index j = 1; j < n; ++j) {
    acc += scores.scores(j);
    cdf[static_cast<std::size_t>(j)] = acc;
    if (scores.scores(j) > 0.0) last_positive = j;
  }
  std::vector<int> kept{0};
  if (last_positive == 0) return kept;
  Eigen::Index j = 1;
  for (int k = 1; k <= n_target; ++k) {
    const double q = (k - 0.5) / n_target * acc;
    // Quantiles increase with k, so the CDF walk resumes where it stopped.
    while (j < last_positive && cdf[static_cast<std::size_t>(j)] < q) ++j;
    if (kept.back() != static_cast<int>(j)) kept.push_back(static_cast<int>(j));
  }
  return kept;
}

ag::Var class_attention_mse(const ag::Var& attention, const std::vector<bool>& active) {
  const Eigen::Index n = attention.cols();
  if (attention.rows() != n || static_cast<Eigen::Index>(active.size()) != n) {
    throw ContractError("class_attention_mse: attention must be n x n with an n-long active mask");
  }
  int count = 0;
  for (bool a : active) count += a ? 1 : 0;
  ag::Tape& tape = *attention.tape();
  Matrix select = Matrix::Zero(1, n);
  for (Eigen::Index i = 1; i < n; ++i) select(0, i) = active[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
  const ag::Var row = ag::rows(attention, 0, 1);
  const ag::Var diff = ag::mul(ag::add_scalar(row, -1.0 / std::max(count, 1)), tape.constant(std::move(select)));
  return ag::sum(ag::square(diff));
}

ag::Var ats_attack_loss(const ComputeTrace& trace, const AtsParams& params) {
  if (params.layer_loss_weights.size() != params.ats_layers.size()) {
    throw ContractError("ats_attack_loss: weights do not align with ATS layers");
  }
  ag::Var total;
  for (std::size_t i = 0; i < params.ats_layers.size(); ++i) {
    const int layer = params.ats_layers[i];
    if (layer < 1 || layer > static_cast<int>(trace.layers.size())) {
      throw ContractError("ats_attack_loss: layer " + std::to_string(layer) + " missing from trace");
    }
    const LayerTrace& lt = trace.layers[static_cast<std::size_t>(layer - 1)];
    if (lt.attention_vars.empty()) {
      throw ContractError("ats_attack_loss: layer " + std::to_string(layer) + " has no attention in the trace");
    }
    ag::Var layer_loss;
    for (const ag::Var& a : lt.attention_vars) {
      const ag::Var head = class_attention_mse(a, lt.active);
      layer_loss = layer_loss.valid() ? ag::add(layer_loss, head) : head;
    }
    const ag::Var weighted = ag::scale(layer_loss, params.layer_loss_weights[i]);
    total = total.valid() ? ag::add(total, weighted) : weighted;
  }
  if (!total.valid()) throw ContractError("ats_attack_loss: no ATS layers configured");
  return total;
}

}  // namespace slowvit::ats
