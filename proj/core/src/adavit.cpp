// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "slowvit/adavit.hpp"

#include <cmath>

#include "slowvit/errors.hpp"
#include "slowvit/random.hpp"

namespace slowvit::adavit {

DecisionLogits decision_forward(const ag::Var& block_input, const DecisionWeights& w) {
  const Eigen::Index d = block_input.cols();
  if (w.patch_w.rows() != d || w.head_w.rows() != d || w.block_w.rows() != d) {
    throw ContractError("decision_forward: decision weights do not match the embedding width");
  }
  DecisionLogits out;
  // Per-token logits; the bias is broadcast over rows.
  out.patch = ag::add_row(ag::matmul(block_input, w.patch_w), w.patch_b);
  const ag::Var cls = ag::rows(block_input, 0, 1);
  out.head = ag::add(ag::matmul(cls, w.head_w), w.head_b);
  out.block = ag::add(ag::matmul(cls, w.block_w), w.block_b);
  return out;
}

ag::Var gumbel_mask(const ag::Var& logits, double temperature, bool hard, std::uint64_t seed) {
  if (!(temperature > 0.0)) throw ContractError("gumbel_mask: temperature must be positive");
  Rng rng(seed);
  Matrix noise(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < noise.cols(); ++j) {
    for (Eigen::Index i = 0; i < noise.rows(); ++i) {
      const double g1 = -std::log(-std::log(uniform_open01(rng)));
      const double g0 = -std::log(-std::log(uniform_open01(rng)));
      noise(i, j) = g1 - g0;
    }
  }
  ag::Tape& tape = *logits.tape();
  const ag::Var soft =
      ag::sigmoid(ag::scale(ag::add(logits, tape.constant(std::move(noise))), 1.0 / temperature));
  if (!hard) return soft;
  Matrix h = (soft.value().array() > 0.5).cast<double>().matrix();
  return ag::straight_through(soft, h);
}

std::array<ag::Var, 3> KeepMasks::mean_rates() const {
  if (patch.empty() || patch.size() != head.size() || patch.size() != block.size()) {
    throw ContractError("KeepMasks: masks are incomplete");
  }
  auto overall_mean = [](const std::vector<ag::Var>& parts) {
    const ag::Var all = ag::vcat(parts);
    return ag::mean(all);
  };
  std::vector<ag::Var> heads_as_cols;
  heads_as_cols.reserve(head.size());
  for (const ag::Var& h : head) heads_as_cols.push_back(ag::transpose(h));
  return {overall_mean(patch), overall_mean(heads_as_cols), overall_mean(block)};
}

ag::Var usage_loss(const KeepMasks& masks, const std::array<double, 3>& gammas) {
  const auto rates = masks.mean_rates();
  ag::Var total;
  for (std::size_t i = 0; i < 3; ++i) {
    const ag::Var term = ag::square(ag::add_scalar(rates[i], -gammas[i]));
    total = total.valid() ? ag::add(total, term) : term;
  }
  return total;
}

ag::Var adavit_attack_loss(const KeepMasks& masks) { return ag::scale(usage_loss(masks, {0.0, 0.0, 0.0}), -1.0); }

}  // namespace slowvit::adavit
