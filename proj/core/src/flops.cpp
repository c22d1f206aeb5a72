// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "slowvit/flops.hpp"

#include <sstream>

#include "json_io.hpp"
#include "slowvit/errors.hpp"

namespace slowvit::flops {

Breakdown& Breakdown::operator+=(const Breakdown& o) {
  qkv += o.qkv;
  attn_logits += o.attn_logits;
  attn_apply += o.attn_apply;
  out_proj += o.out_proj;
  mlp += o.mlp;
  embed += o.embed;
  head += o.head;
  return *this;
}

Breakdown block_breakdown(int n_active, int embed_dim, int heads_active, int heads_total, int mlp_hidden,
                          bool block_on) {
  if (n_active < 1) throw ContractError("block_flops: n_active must be >= 1");
  if (heads_total < 1 || heads_active < 0 || heads_active > heads_total || embed_dim % heads_total != 0) {
    throw ContractError("block_flops: inconsistent head counts");
  }
  Breakdown b;
  if (!block_on) return b;
  const std::int64_t n = n_active;
  const std::int64_t d = embed_dim;
  const std::int64_t d_attn = d / heads_total * heads_active;
  b.qkv = 2 * n * d * 3 * d_attn;
  b.attn_logits = 2 * n * n * d_attn;
  b.attn_apply = 2 * n * n * d_attn;
  b.out_proj = 2 * n * d * d;
  b.mlp = 2 * n * d * mlp_hidden * 2;
  return b;
}

std::int64_t block_flops(int n_active, int embed_dim, int heads_active, int heads_total, int mlp_hidden,
                         bool block_on) {
  return block_breakdown(n_active, embed_dim, heads_active, heads_total, mlp_hidden, block_on).total();
}

std::int64_t embed_flops(const ModelConfig& c) {
  return 2 * std::int64_t{c.num_patches()} * c.patch_features() * c.embed_dim;
}

std::int64_t head_flops(const ModelConfig& c) { return 2 * std::int64_t{c.embed_dim} * c.num_classes; }

FlopsReport trace_flops(const ComputeTrace& trace, const ModelConfig& config) {
  if (static_cast<int>(trace.layers.size()) != config.num_layers) {
    throw ContractError("trace_flops: trace has " + std::to_string(trace.layers.size()) + " layers, config has " +
                        std::to_string(config.num_layers));
  }
  FlopsReport r;
  r.breakdown.embed = embed_flops(config);
  r.breakdown.head = head_flops(config);
  for (const LayerTrace& lt : trace.layers) {
    if (lt.retained_tokens < 1 || lt.retained_tokens > config.num_tokens()) {
      throw ContractError("trace_flops: retained token count out of range");
    }
    const Breakdown b = block_breakdown(lt.retained_tokens, config.embed_dim, lt.heads_active, config.num_heads,
                                        config.mlp_hidden(), lt.block_on);
    r.per_layer.push_back(b.total());
    r.breakdown += b;
  }
  r.total = r.breakdown.total();
  return r;
}

FlopsReport architecture_flops(const ModelConfig& config) {
  ComputeTrace full;
  full.layers.resize(static_cast<std::size_t>(config.num_layers));
  for (LayerTrace& lt : full.layers) {
    lt.retained_tokens = config.num_tokens();
    lt.heads_active = config.num_heads;
  }
  return trace_flops(full, config);
}

double attack_success(double flops_attack, double flops_min, double flops_max) {
  if (!(flops_max > flops_min)) {
    throw DomainError("attack_success: flops_max must exceed flops_min");
  }
  return (flops_attack - flops_min) / (flops_max - flops_min);
}

std::string FlopsReport::to_json() const {
  json j;
  j["total"] = total;
  j["per_layer"] = per_layer;
  j["breakdown"] = {{"qkv", breakdown.qkv},           {"attn_logits", breakdown.attn_logits},
                    {"attn_apply", breakdown.attn_apply}, {"out_proj", breakdown.out_proj},
                    {"mlp", breakdown.mlp},           {"embed", breakdown.embed},
                    {"head", breakdown.head}};
  return j.dump();
}

std::string FlopsReport::csv_header() { return "label,total,qkv,attn_logits,attn_apply,out_proj,mlp,embed,head"; }

std::string FlopsReport::csv_row(const std::string& label) const {
  std::ostringstream os;
  os << label << ',' << total << ',' << breakdown.qkv << ',' << breakdown.attn_logits << ',' << breakdown.attn_apply
     << ',' << breakdown.out_proj << ',' << breakdown.mlp << ',' << breakdown.embed << ',' << breakdown.head;
  return os.str();
}

}  // namespace slowvit::flops
