// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "slowvit/errors.hpp"
#include "slowvit/vit.hpp"
#include "slowvit_test.hpp"

namespace slowvit {
namespace {

using testing::random_image;
using testing::tiny_config;

ForwardResult run(const VisionTransformer& m, ag::Tape& tape, const Image& img, ForwardOptions opts = {}) {
  ParamBinding bind(tape, m.parameters(), false);
  return m.forward(bind, img, opts);
}

TEST(ModelConfig, TokenCounts) {
  ModelConfig c;
  c.image_size = 32;
  c.patch_size = 8;
  EXPECT_EQ(c.num_tokens(), 17);
  c.image_size = 224;
  c.patch_size = 16;
  c.embed_dim = 192;
  c.num_heads = 3;
  EXPECT_EQ(c.num_tokens(), 197);
  c.image_size = 16;
  EXPECT_EQ(c.num_tokens(), 2);
}

TEST(ModelConfig, RejectsBadGeometry) {
  ModelConfig c;
  c.image_size = 30;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.embed_dim = 30;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.adaptive_policy = AdaptivePolicy::ats;
  c.ats.ats_layers = {5};
  c.ats.layer_loss_weights = {1.0};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ModelConfig, JsonRoundTrip) {
  ModelConfig c = tiny_config(AdaptivePolicy::ats, 3);
  c.ats.max_tokens = 9;
  const ModelConfig back = ModelConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_THROW(ModelConfig::from_json("{\"image_size\": \"big\"}"), ConfigError);
  EXPECT_THROW(ModelConfig::from_json("not json"), ConfigError);
  EXPECT_THROW(parse_policy("dynamicvit"), ConfigError);
}

TEST(Vit, WrongImageSizeIsConfigError) {
  const VisionTransformer m(tiny_config(AdaptivePolicy::none), 1);
  ag::Tape tape(false);
  EXPECT_THROW(run(m, tape, Image(8, 8)), ConfigError);
}

TEST(Vit, BlockOffIsIdentity) {
  const VisionTransformer m(tiny_config(AdaptivePolicy::none), 2);
  ag::Tape tape(false);
  ParamBinding bind(tape, m.parameters(), false);
  const TokenState s = m.patch_embed(bind, random_image(16, 16, 3), false);
  const BlockOutput out = m.block_forward(bind, s, 0, {true, true}, false);
  EXPECT_EQ(out.state.embeddings.value(), s.embeddings.value());
}

TEST(Vit, AllHeadsOffLeavesOnlyTheResidual) {
  VisionTransformer m(tiny_config(AdaptivePolicy::none), 4);
  m.parameters()[block_name(0, "fc2.w")].setZero();
  m.parameters()[block_name(0, "fc2.b")].setZero();
  ag::Tape tape(false);
  ParamBinding bind(tape, m.parameters(), false);
  const TokenState s = m.patch_embed(bind, random_image(16, 16, 5), false);
  const BlockOutput out = m.block_forward(bind, s, 0, {false, false}, true);
  EXPECT_EQ(out.state.embeddings.value(), s.embeddings.value());
  const BlockOutput on = m.block_forward(bind, s, 0, {true, false}, true);
  EXPECT_NE(on.state.embeddings.value(), s.embeddings.value());
}

TEST(Vit, SingleActiveTokenAttendsToItself) {
  const VisionTransformer m(tiny_config(AdaptivePolicy::none), 6);
  ag::Tape tape(false);
  ParamBinding bind(tape, m.parameters(), false);
  TokenState s = m.patch_embed(bind, random_image(16, 16, 7), false);
  std::fill(s.active.begin() + 1, s.active.end(), false);
  const BlockOutput out = m.block_forward(bind, s, 0, {true, true}, true);
  for (const ag::Var& a : out.attention) {
    EXPECT_EQ(a.value()(0, 0), 1.0);
    EXPECT_EQ(a.value().row(0).sum(), 1.0);
  }
}

TEST(Vit, InactiveTokensDoNotReachActiveOutputs) {
  const VisionTransformer m(tiny_config(AdaptivePolicy::none), 8);
  ag::Tape tape(false);
  ParamBinding bind(tape, m.parameters(), false);
  TokenState s = m.patch_embed(bind, random_image(16, 16, 9), false);
  for (int i : {3, 7, 12}) s.active[static_cast<std::size_t>(i)] = false;
  const Matrix base = m.block_forward(bind, s, 0, {true, true}, true).state.embeddings.value();

  TokenState t = s;
  Matrix e = s.embeddings.value();
  Rng rng(10);
  for (int i : {3, 7, 12}) {
    for (int j = 0; j < e.cols(); ++j) e(i, j) += 100.0 * normal(rng);
  }
  t.embeddings = tape.constant(e);
  const Matrix moved = m.block_forward(bind, t, 0, {true, true}, true).state.embeddings.value();
  for (int i = 0; i < s.num_tokens(); ++i) {
    if (s.active[static_cast<std::size_t>(i)]) {
      EXPECT_EQ(moved.row(i), base.row(i)) << "token " << i;
    } else {
      EXPECT_EQ(moved.row(i), e.row(i)) << "inactive token " << i << " must pass through";
    }
  }
}

TEST(Vit, PermutingPatchTokensPermutesOutputs) {
  // Without positional embeddings the encoder is permutation equivariant.
  VisionTransformer m(tiny_config(AdaptivePolicy::none), 11);
  m.parameters()["pos_embed"].setZero();
  ag::Tape tape(false);
  ParamBinding bind(tape, m.parameters(), false);
  const TokenState s = m.patch_embed(bind, random_image(16, 16, 12), false);
  std::vector<int> perm(static_cast<std::size_t>(s.num_tokens()));
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin() + 1, perm.end());
  Matrix pe(s.embeddings.rows(), s.embeddings.cols());
  for (int i = 0; i < s.num_tokens(); ++i) pe.row(i) = s.embeddings.value().row(perm[static_cast<std::size_t>(i)]);
  TokenState p = s;
  p.embeddings = tape.constant(pe);
  const Matrix a = m.block_forward(bind, s, 0, {true, true}, true).state.embeddings.value();
  const Matrix b = m.block_forward(bind, p, 0, {true, true}, true).state.embeddings.value();
  for (int i = 0; i < s.num_tokens(); ++i) {
    EXPECT_LT((b.row(i) - a.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Vit, AttentionRowsSumToOneOverActiveKeys) {
  for (AdaptivePolicy p : {AdaptivePolicy::none, AdaptivePolicy::avit, AdaptivePolicy::ats, AdaptivePolicy::adavit}) {
    ModelConfig c = tiny_config(p, 3);
    c.halting.gate_bias = 1.0;
    const VisionTransformer m(c, 13);
    ag::Tape tape(false);
    const ForwardResult r = run(m, tape, random_image(16, 16, 14));
    for (const LayerTrace& lt : r.trace.layers) {
      for (const Matrix& a : lt.attention) {
        for (int i = 0; i < a.rows(); ++i) {
          if (!lt.active[static_cast<std::size_t>(i)]) continue;
          EXPECT_NEAR(a.row(i).sum(), 1.0, 1e-5);
          for (int j = 0; j < a.cols(); ++j) {
            if (!lt.active[static_cast<std::size_t>(j)]) {
              EXPECT_EQ(a(i, j), 0.0);
            }
          }
        }
      }
    }
  }
}

TEST(Vit, PolicyNoneKeepsEveryToken) {
  const VisionTransformer m(tiny_config(AdaptivePolicy::none, 4), 15);
  ag::Tape tape(false);
  const ForwardResult r = run(m, tape, random_image(16, 16, 16));
  for (int n : r.trace.retained_counts()) EXPECT_EQ(n, 17);
}

TEST(Vit, UnreachableHaltingThresholdDropsNothing) {
  ModelConfig c = tiny_config(AdaptivePolicy::avit, 4);
  c.halting.gate_bias = -40.0;
  const VisionTransformer m(c, 17);
  ag::Tape tape(false);
  const ForwardResult r = run(m, tape, random_image(16, 16, 18));
  for (int n : r.trace.retained_counts()) EXPECT_EQ(n, 17);
  for (int nk : r.trace.halting->halt_layer) EXPECT_EQ(nk, 4);
}

class RetentionProperty : public ::testing::TestWithParam<std::tuple<AdaptivePolicy, int>> {};

TEST_P(RetentionProperty, MonotoneAndClassTokenKept) {
  const auto [policy, seed] = GetParam();
  ModelConfig c = tiny_config(policy, 4);
  c.halting.gate_bias = 0.5;
  c.ats.max_tokens = 10;
  const VisionTransformer m(c, static_cast<std::uint64_t>(seed));
  ag::Tape tape(false);
  const ForwardResult r = run(m, tape, random_image(16, 16, static_cast<std::uint64_t>(seed) + 100));
  const std::vector<int> counts = r.trace.retained_counts();
  for (std::size_t l = 1; l < counts.size(); ++l) EXPECT_LE(counts[l], counts[l - 1]);
  for (std::size_t l = 1; l < r.trace.layers.size(); ++l) {
    for (std::size_t i = 0; i < r.trace.layers[l].active.size(); ++i) {
      if (r.trace.layers[l].active[i]) {
        EXPECT_TRUE(r.trace.layers[l - 1].active[i]) << "token reactivated";
      }
    }
  }
  for (const LayerTrace& lt : r.trace.layers) EXPECT_TRUE(lt.active[0]);
}

INSTANTIATE_TEST_SUITE_P(Policies, RetentionProperty,
                         ::testing::Combine(::testing::Values(AdaptivePolicy::avit, AdaptivePolicy::ats),
                                            ::testing::Range(1, 9)));

TEST(Vit, ClassTokenKeptUnderAdaVitToo) {
  ModelConfig c = tiny_config(AdaptivePolicy::adavit, 3);
  c.decision.init_bias = -3.0;
  const VisionTransformer m(c, 19);
  ag::Tape tape(false);
  const ForwardResult r = run(m, tape, random_image(16, 16, 20));
  for (const LayerTrace& lt : r.trace.layers) EXPECT_TRUE(lt.active[0]);
}

TEST(Vit, ForwardIsBitIdenticalOnRepeat) {
  for (AdaptivePolicy p : {AdaptivePolicy::none, AdaptivePolicy::avit, AdaptivePolicy::ats, AdaptivePolicy::adavit}) {
    const VisionTransformer m(tiny_config(p, 3), 21);
    const Image img = random_image(16, 16, 22);
    ForwardOptions o;
    o.gumbel_seed = 99;
    ag::Tape t1(false);
    ag::Tape t2(false);
    const ForwardResult a = run(m, t1, img, o);
    const ForwardResult b = run(m, t2, img, o);
    EXPECT_EQ(a.logits.value(), b.logits.value());
    EXPECT_EQ(a.trace.retained_counts(), b.trace.retained_counts());
  }
}

TEST(Vit, SameSeedSameParameters) {
  const VisionTransformer a(tiny_config(AdaptivePolicy::avit), 23);
  const VisionTransformer b(tiny_config(AdaptivePolicy::avit), 23);
  const VisionTransformer c(tiny_config(AdaptivePolicy::avit), 24);
  EXPECT_EQ(a.parameters().checksum(), b.parameters().checksum());
  EXPECT_NE(a.parameters().checksum(), c.parameters().checksum());
}

TEST(Vit, ApplyPolicyFalseRunsTheFullModel) {
  ModelConfig c = tiny_config(AdaptivePolicy::avit, 3);
  c.halting.gate_bias = 3.0;
  const VisionTransformer m(c, 25);
  ForwardOptions o;
  o.apply_policy = false;
  ag::Tape tape(false);
  const ForwardResult r = run(m, tape, random_image(16, 16, 26), o);
  for (int n : r.trace.retained_counts()) EXPECT_EQ(n, 17);
}

TEST(Vit, PixelGradientMatchesFiniteDifference) {
  const VisionTransformer m(tiny_config(AdaptivePolicy::none), 27);
  const Image img = random_image(16, 16, 28);
  auto loss = [&](const Image& x) {
    ag::Tape t(true);
    return ag::cross_entropy(run(m, t, x).logits, 1).item();
  };
  ag::Tape tape(true);
  ForwardOptions o;
  o.input_grad = true;
  const ForwardResult r = run(m, tape, img, o);
  tape.backward(ag::cross_entropy(r.logits, 1));
  const Image g = m.pixel_gradient(r);
  std::vector<std::size_t> idx = {0, 5, 100, 400, 767};
  std::vector<double> an;
  for (std::size_t i : idx) an.push_back(g.pixels[i]);
  EXPECT_LT(testing::relative_error(testing::finite_difference(loss, img, idx, 1e-3), an), 1e-6);
}

}  // namespace
}  // namespace slowvit
