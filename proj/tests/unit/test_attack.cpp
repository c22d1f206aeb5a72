// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "slowvit/attack.hpp"
#include "slowvit/avit.hpp"
#include "slowvit/errors.hpp"
#include "slowvit/flops.hpp"
#include "slowvit_test.hpp"

namespace slowvit {
namespace {

using testing::random_image;
using testing::tiny_config;

Dataset tiny_dataset(int n, std::uint64_t seed, int classes = 4) {
  Dataset d;
  d.num_classes = classes;
  for (int i = 0; i < n; ++i) {
    d.images.push_back(random_image(16, 16, seed + static_cast<std::uint64_t>(i)));
    d.labels.push_back(i % classes);
  }
  return d;
}

double loss_value(const VisionTransformer& m, const AttackObjective& obj, const Image& img, int label,
                  std::uint64_t gumbel) {
  ag::Tape tape(true);
  ParamBinding bind(tape, m.parameters(), false);
  const ForwardResult out = m.forward(bind, img, attack_forward_options(gumbel));
  return attack_loss(obj, m.config(), out, label).item();
}

Image loss_gradient(const VisionTransformer& m, const AttackObjective& obj, const Image& img, int label,
                    std::uint64_t gumbel) {
  ag::Tape tape(true);
  ParamBinding bind(tape, m.parameters(), false);
  const ForwardResult out = m.forward(bind, img, attack_forward_options(gumbel));
  tape.backward(attack_loss(obj, m.config(), out, label));
  return m.pixel_gradient(out);
}

struct GradCase {
  const char* name;
  AdaptivePolicy policy;
  ObjectiveKind kind;
};

void PrintTo(const GradCase& c, std::ostream* os) { *os << c.name; }

class PatchGradient : public ::testing::TestWithParam<GradCase> {};

TEST_P(PatchGradient, MatchesCentralDifferences) {
  const GradCase gc = GetParam();
  ModelConfig cfg = tiny_config(gc.policy, 2, 16, 2);
  const VisionTransformer model(cfg, 31);
  AttackObjective obj;
  obj.kind = gc.kind;
  obj.target_class = 2;
  const Patch patch = init_patch(8, 4, 4, 16, 16, 32);
  const Image img = apply_patch(random_image(16, 16, 33), patch);
  const int label = 1;
  const std::uint64_t gumbel = 34;

  std::vector<std::size_t> idx;
  for (int r = 0; r < 8; r += 3) {
    for (int c = 0; c < 8; c += 3) idx.push_back(img.index(4 + r, 4 + c, (r + c) % 3));
  }
  const Image g = loss_gradient(model, obj, img, label, gumbel);
  std::vector<double> an;
  for (std::size_t i : idx) an.push_back(g.pixels[i]);
  const auto fd = testing::finite_difference(
      [&](const Image& x) { return loss_value(model, obj, x, label, gumbel); }, img, idx, 1e-4);
  double norm = 0;
  for (double v : an) norm += v * v;
  EXPECT_GT(norm, 0.0) << gc.name << " has a vanishing gradient";
  EXPECT_LT(testing::relative_error(fd, an), 1e-3) << gc.name;
}

INSTANTIATE_TEST_SUITE_P(
    Losses, PatchGradient,
    ::testing::Values(GradCase{"avit", AdaptivePolicy::avit, ObjectiveKind::compute_only},
                      GradCase{"ats", AdaptivePolicy::ats, ObjectiveKind::compute_only},
                      GradCase{"adavit_soft", AdaptivePolicy::adavit, ObjectiveKind::compute_only},
                      GradCase{"tap", AdaptivePolicy::none, ObjectiveKind::tap},
                      GradCase{"ntap", AdaptivePolicy::none, ObjectiveKind::ntap},
                      GradCase{"tap_on_avit", AdaptivePolicy::avit, ObjectiveKind::tap}),
    [](const ::testing::TestParamInfo<GradCase>& info) { return std::string(info.param.name); });

TEST(AttackLoss, ComputeOnlyIsThePolicyLoss) {
  const VisionTransformer m(tiny_config(AdaptivePolicy::avit), 1);
  ag::Tape tape(true);
  ParamBinding bind(tape, m.parameters(), false);
  const ForwardResult out = m.forward(bind, random_image(16, 16, 2), attack_forward_options(0));
  const double direct = avit::avit_attack_loss(*out.trace.halting, m.config().halting).item();
  EXPECT_EQ(attack_loss({ObjectiveKind::compute_only}, m.config(), out, std::nullopt).item(), direct);
}

TEST(AttackLoss, ZeroTaskWeightCollapsesVariants) {
  const VisionTransformer m(tiny_config(AdaptivePolicy::adavit), 3);
  ag::Tape tape(true);
  ParamBinding bind(tape, m.parameters(), false);
  const ForwardResult out = m.forward(bind, random_image(16, 16, 4), attack_forward_options(5));
  const double base = attack_loss({ObjectiveKind::compute_only}, m.config(), out, 0).item();
  EXPECT_EQ(attack_loss({ObjectiveKind::preserve_acc, 0.0}, m.config(), out, 0).item(), base);
  EXPECT_EQ(attack_loss({ObjectiveKind::destroy_acc, 0.0}, m.config(), out, 0).item(), base);
  const double w = 0.5;
  const double ce = ag::cross_entropy(out.logits, 0).item();
  EXPECT_NEAR(attack_loss({ObjectiveKind::preserve_acc, w}, m.config(), out, 0).item(), base + w * ce, 1e-12);
  EXPECT_NEAR(attack_loss({ObjectiveKind::destroy_acc, w}, m.config(), out, 0).item(), base - w * ce, 1e-12);
}

TEST(AttackLoss, TapOnAlreadyTargetedLogitsIsNearlyFlat) {
  VisionTransformer m(tiny_config(AdaptivePolicy::none), 6);
  m.parameters()["head.b"](0, 3) = 40.0;
  AttackObjective tap{ObjectiveKind::tap, 0.0, 3};
  const Image img = random_image(16, 16, 7);
  EXPECT_LT(loss_value(m, tap, img, 0, 0), 1e-12);
  const Image g = loss_gradient(m, tap, img, 0, 0);
  double worst = 0;
  for (double v : g.pixels) worst = std::max(worst, std::abs(v));
  EXPECT_LT(worst, 1e-12);
}

TEST(AttackLoss, ContractViolations) {
  const VisionTransformer none(tiny_config(AdaptivePolicy::none), 8);
  ag::Tape tape(true);
  ParamBinding bind(tape, none.parameters(), false);
  const ForwardResult out = none.forward(bind, random_image(16, 16, 9), attack_forward_options(0));
  EXPECT_THROW(attack_loss({ObjectiveKind::compute_only}, none.config(), out, 0), ContractError);
  EXPECT_THROW(attack_loss({ObjectiveKind::ntap}, none.config(), out, std::nullopt), ContractError);
  EXPECT_THROW(attack_loss({ObjectiveKind::random}, none.config(), out, 0), ContractError);
  EXPECT_THROW((AttackObjective{ObjectiveKind::tap, 0.0, 9}.validate(4)), ContractError);
  EXPECT_THROW(parse_objective("sponge"), ConfigError);
  EXPECT_EQ(parse_objective("preserve_acc"), ObjectiveKind::preserve_acc);
}

TEST(TrainPatch, ZeroIterationsReturnsTheInitialPatch) {
  const VisionTransformer m(tiny_config(AdaptivePolicy::avit), 10);
  const Patch init = init_patch(4, 0, 0, 16, 16, 11);
  PatchTrainConfig cfg;
  cfg.max_iterations = 0;
  const PatchTrainResult r = train_patch(m, tiny_dataset(8, 12), {ObjectiveKind::compute_only}, cfg, init);
  EXPECT_EQ(r.patch, init);
  EXPECT_EQ(r.iterations, 0);
  EXPECT_TRUE(r.loss_history.empty());
}

TEST(TrainPatch, RandomObjectiveReturnsTheInitialPatch) {
  const VisionTransformer m(tiny_config(AdaptivePolicy::avit), 10);
  const Patch init = init_patch(4, 0, 0, 16, 16, 13);
  const PatchTrainResult r = train_patch(m, tiny_dataset(8, 12), {ObjectiveKind::random}, {}, init);
  EXPECT_EQ(r.patch, init);
}

TEST(TrainPatch, ModelStaysFrozenAndPatchStaysQuantized) {
  const VisionTransformer m(tiny_config(AdaptivePolicy::avit), 14);
  const std::uint64_t before = m.parameters().checksum();
  PatchTrainConfig cfg;
  cfg.optimizer.lr = 5.0;
  cfg.batch_size = 4;
  cfg.max_iterations = 6;
  const PatchTrainResult r =
      train_patch(m, tiny_dataset(12, 15), {ObjectiveKind::compute_only}, cfg, init_patch(8, 0, 8, 16, 16, 16));
  EXPECT_EQ(m.parameters().checksum(), before);
  EXPECT_EQ(r.iterations, 6);
  EXPECT_EQ(r.loss_history.size(), 6u);
  EXPECT_TRUE(is_quantized(r.patch));
  EXPECT_EQ(r.patch.row, 0);
  EXPECT_EQ(r.patch.col, 8);
}

TEST(TrainPatch, SameSeedSamePatch) {
  const VisionTransformer m(tiny_config(AdaptivePolicy::adavit), 17);
  PatchTrainConfig cfg;
  cfg.optimizer.lr = 5.0;
  cfg.batch_size = 3;
  cfg.epochs = 2;
  cfg.seed = 18;
  const Dataset d = tiny_dataset(7, 19);
  const Patch init = init_patch(4, 4, 4, 16, 16, 20);
  const PatchTrainResult a = train_patch(m, d, {ObjectiveKind::compute_only}, cfg, init);
  const PatchTrainResult b = train_patch(m, d, {ObjectiveKind::compute_only}, cfg, init);
  EXPECT_EQ(a.patch, b.patch);
  EXPECT_EQ(a.loss_history, b.loss_history);
  EXPECT_EQ(a.iterations, 6);
}

TEST(TrainPatch, OutOfBoundsPatchIsConfigError) {
  const VisionTransformer m(tiny_config(AdaptivePolicy::avit), 21);
  Patch p = init_patch(4, 0, 0, 16, 16, 22);
  p.row = 14;
  EXPECT_THROW(train_patch(m, tiny_dataset(2, 23), {ObjectiveKind::compute_only}, {}, p), ConfigError);
}

TEST(Evaluate, NoPatchMeansZeroSuccess) {
  ModelConfig c = tiny_config(AdaptivePolicy::avit, 3);
  c.halting.gate_bias = 1.0;
  const VisionTransformer m(c, 24);
  const Dataset d = tiny_dataset(6, 25);
  const EvalBaseline base = evaluate_baseline(m, d);
  EXPECT_EQ(base.flops_max, static_cast<double>(flops::architecture_flops(c).total));
  EXPECT_LT(base.flops_min, base.flops_max);
  const AttackReport r = evaluate_attack(m, d, nullptr, base);
  EXPECT_FALSE(r.attacked);
  EXPECT_EQ(r.success, 0.0);
  EXPECT_EQ(r.mean_flops, base.flops_min);
}

TEST(Evaluate, IsRepeatableAndRunsNoBackwardPass) {
  const VisionTransformer m(tiny_config(AdaptivePolicy::adavit, 3), 26);
  const Dataset d = tiny_dataset(6, 27);
  const Patch p = init_patch(8, 8, 8, 16, 16, 28);
  const auto sweeps = ag::Tape::backward_sweeps();
  const AttackReport a = evaluate(m, d, &p);
  const AttackReport b = evaluate(m, d, &p);
  EXPECT_EQ(ag::Tape::backward_sweeps(), sweeps);
  EXPECT_EQ(a.per_image_flops, b.per_image_flops);
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_TRUE(a.attacked);
}

TEST(Evaluate, HistogramCoversEveryImage) {
  const VisionTransformer m(tiny_config(AdaptivePolicy::avit, 3), 29);
  const AttackReport r = evaluate(m, tiny_dataset(9, 30), nullptr);
  int total = 0;
  for (int v : r.flops_histogram(4)) total += v;
  EXPECT_EQ(total, 9);
  EXPECT_EQ(r.per_layer_tokens.size(), 3u);
}

}  // namespace
}  // namespace slowvit
