// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "slowvit/errors.hpp"
#include "slowvit/flops.hpp"
#include "slowvit/random.hpp"
#include "flops_oracle.hpp"
#include "slowvit_test.hpp"

namespace slowvit::flops {
namespace {

using testing::brute_block;
using testing::brute_model;

ModelConfig grid_config(int layers, int dim, int tokens) {
  ModelConfig c;
  c.image_size = 16;
  c.patch_size = tokens == 2 ? 16 : tokens == 5 ? 8 : 4;
  c.embed_dim = dim;
  c.num_heads = dim == 8 ? 2 : 4;
  c.num_layers = layers;
  c.mlp_ratio = 4.0;
  c.num_classes = 10;
  c.validate();
  return c;
}

TEST(BlockFlops, UnitInstance) {
  const Breakdown b = block_breakdown(1, 1, 1, 1, 1, true);
  EXPECT_EQ(b.qkv, 6);
  EXPECT_EQ(b.attn_logits, 2);
  EXPECT_EQ(b.attn_apply, 2);
  EXPECT_EQ(b.out_proj, 2);
  EXPECT_EQ(b.mlp, 4);
  EXPECT_EQ(b.total(), 16);
  Rng rng(1);
  EXPECT_EQ(b.total(), brute_block(1, 1, 1, 1, 1, true, rng));
}

TEST(BlockFlops, OffIsFree) { EXPECT_EQ(block_flops(17, 64, 4, 4, 256, false), 0); }

TEST(BlockFlops, SuperlinearInTokens) {
  for (int n : {1, 2, 5, 17, 50}) EXPECT_GT(block_flops(2 * n, 16, 2, 2, 64, true), 2 * block_flops(n, 16, 2, 2, 64, true));
}

TEST(BlockFlops, BadArgumentsThrow) {
  EXPECT_THROW(block_flops(0, 8, 2, 2, 32, true), ContractError);
  EXPECT_THROW(block_flops(3, 8, 3, 2, 32, true), ContractError);
}

class FlopsOracle : public ::testing::TestWithParam<std::tuple<int, int, int>> {};

TEST_P(FlopsOracle, TraceMatchesBruteForce) {
  const auto [layers, dim, tokens] = GetParam();
  const ModelConfig cfg = grid_config(layers, dim, tokens);
  ASSERT_EQ(cfg.num_tokens(), tokens);
  Rng rng(static_cast<std::uint64_t>(layers * 10000 + dim * 100 + tokens));
  for (int trial = 0; trial < 8; ++trial) {
    ComputeTrace t;
    int alive = tokens;
    for (int l = 0; l < layers; ++l) {
      LayerTrace lt;
      alive = 1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(alive)));
      lt.retained_tokens = alive;
      lt.heads_active = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(cfg.num_heads) + 1));
      lt.block_on = uniform01(rng) < 0.8;
      t.layers.push_back(lt);
    }
    const FlopsReport r = trace_flops(t, cfg);
    EXPECT_EQ(r.total, brute_model(cfg, t, rng));
    std::int64_t sum = 0;
    for (std::int64_t v : r.per_layer) sum += v;
    EXPECT_EQ(r.total, sum + r.breakdown.embed + r.breakdown.head);
    EXPECT_EQ(r.total, r.breakdown.total());
  }
  Rng rng2(7);
  EXPECT_EQ(architecture_flops(cfg).total, brute_model(cfg, [&] {
              ComputeTrace full;
              for (int l = 0; l < layers; ++l) {
                LayerTrace lt;
                lt.retained_tokens = tokens;
                lt.heads_active = cfg.num_heads;
                full.layers.push_back(lt);
              }
              return full;
            }(), rng2));
}

INSTANTIATE_TEST_SUITE_P(Grid, FlopsOracle,
                         ::testing::Combine(::testing::Values(1, 2, 4), ::testing::Values(8, 16, 32),
                                            ::testing::Values(2, 5, 17)));

TEST(TraceFlops, PolicyNoneForwardEqualsArchitecture) {
  const ModelConfig c = testing::tiny_config(AdaptivePolicy::none, 3);
  const VisionTransformer m(c, 1);
  ag::Tape tape(false);
  ParamBinding bind(tape, m.parameters(), false);
  const ForwardResult r = m.forward(bind, testing::random_image(16, 16, 2));
  EXPECT_EQ(trace_flops(r.trace, c).total, architecture_flops(c).total);
}

TEST(TraceFlops, OnlyClassTokenAfterFirstLayer) {
  const ModelConfig c = grid_config(4, 16, 17);
  ComputeTrace t;
  for (int l = 0; l < 4; ++l) {
    LayerTrace lt;
    lt.retained_tokens = l == 0 ? 17 : 1;
    lt.heads_active = c.num_heads;
    t.layers.push_back(lt);
  }
  const FlopsReport r = trace_flops(t, c);
  const std::int64_t one = block_flops(1, 16, c.num_heads, c.num_heads, c.mlp_hidden(), true);
  for (int l = 1; l < 4; ++l) EXPECT_EQ(r.per_layer[static_cast<std::size_t>(l)], one);
}

TEST(TraceFlops, AllBlocksOffLeavesEmbedAndHead) {
  const ModelConfig c = grid_config(2, 16, 5);
  ComputeTrace t;
  for (int l = 0; l < 2; ++l) {
    LayerTrace lt;
    lt.retained_tokens = 5;
    lt.heads_active = c.num_heads;
    lt.block_on = false;
    t.layers.push_back(lt);
  }
  EXPECT_EQ(trace_flops(t, c).total, embed_flops(c) + head_flops(c));
}

TEST(TraceFlops, LayerCountMismatchThrows) {
  const ModelConfig c = grid_config(2, 16, 5);
  ComputeTrace t;
  t.layers.resize(3);
  EXPECT_THROW(trace_flops(t, c), ContractError);
}

TEST(TraceFlops, CsvRowMatchesHeader) {
  const ModelConfig c = grid_config(2, 16, 5);
  const FlopsReport r = architecture_flops(c);
  const std::string row = r.csv_row("full");
  const std::string header = FlopsReport::csv_header();
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), std::count(header.begin(), header.end(), ','));
  EXPECT_EQ(row.rfind("full," + std::to_string(r.total) + ",", 0), 0u);
}

TEST(AttackSuccess, TableValues) {
  EXPECT_NEAR(attack_success(1.3, 0.87, 1.3), 1.00, 1e-12);
  EXPECT_NEAR(attack_success(4.0, 3.1, 4.6), 0.60, 1e-12);
  EXPECT_NEAR(attack_success(0.83, 0.84, 1.3), -0.0217391304, 1e-9);
  EXPECT_EQ(std::lround(100 * attack_success(0.83, 0.84, 1.3)), -2);
  EXPECT_EQ(attack_success(0.84, 0.84, 1.3), 0.0);
}

TEST(AttackSuccess, DegenerateRangeIsDomainError) {
  EXPECT_THROW(attack_success(1.0, 1.0, 1.0), DomainError);
  EXPECT_THROW(attack_success(1.0, 2.0, 1.0), DomainError);
}

TEST(AttackSuccess, OneExactlyAtMax) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const double lo = uniform01(rng);
    const double hi = lo + 0.1 + uniform01(rng);
    EXPECT_EQ(attack_success(hi, lo, hi), 1.0);
    EXPECT_LT(attack_success(hi - 1e-3, lo, hi), 1.0);
  }
}

}  // namespace
}  // namespace slowvit::flops
