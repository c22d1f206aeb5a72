// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slowvit/config.hpp"
#include "slowvit/trace.hpp"

namespace slowvit::flops {

/// FLOP counts with one multiply-accumulate counted as 2 FLOPs. Softmax,
/// normalization, activations and adaptive-policy heads are not counted.
struct Breakdown {
  std::int64_t qkv = 0;
  std::int64_t attn_logits = 0;
  std::int64_t attn_apply = 0;
  std::int64_t out_proj = 0;
  std::int64_t mlp = 0;
  std::int64_t embed = 0;
  std::int64_t head = 0;

  std::int64_t total() const { return qkv + attn_logits + attn_apply + out_proj + mlp + embed + head; }
  Breakdown& operator+=(const Breakdown& o);
};

struct FlopsReport {
  std::vector<std::int64_t> per_layer;
  std::int64_t total = 0;
  Breakdown breakdown;

  std::string to_json() const;
  /// `label,total,qkv,attn_logits,attn_apply,out_proj,mlp,embed,head`
  std::string csv_row(const std::string& label) const;
  static std::string csv_header();
};

/// Cost of one block over `n_active` tokens with `heads_active` of
/// `heads_total` heads. Masked heads shrink the QKV and attention paths; the
/// output projection stays full width.
Breakdown block_breakdown(int n_active, int embed_dim, int heads_active, int heads_total, int mlp_hidden, bool block_on);
std::int64_t block_flops(int n_active, int embed_dim, int heads_active, int heads_total, int mlp_hidden, bool block_on);

/// Patch embedding and classifier head.
std::int64_t embed_flops(const ModelConfig& config);
std::int64_t head_flops(const ModelConfig& config);

/// Sums block costs over the trace plus the embedding and head.
FlopsReport trace_flops(const ComputeTrace& trace, const ModelConfig& config);

/// Every token, head and block active.
FlopsReport architecture_flops(const ModelConfig& config);

/// (flops_attack - flops_min) / (flops_max - flops_min). Negative when the
/// attack reduces compute. Throws DomainError if flops_max <= flops_min.
double attack_success(double flops_attack, double flops_min, double flops_max);

}  // namespace slowvit::flops
