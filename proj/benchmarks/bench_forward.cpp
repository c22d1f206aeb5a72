// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "slowvit/attack.hpp"
#include "slowvit/flops.hpp"
#include "slowvit/random.hpp"
#include "slowvit/vit.hpp"

namespace {

using namespace slowvit;

ModelConfig desk_config(AdaptivePolicy policy) {
  ModelConfig c;
  c.image_size = 32;
  c.patch_size = 8;
  c.embed_dim = 64;
  c.num_layers = 4;
  c.num_heads = 4;
  c.adaptive_policy = policy;
  c.ats.ats_layers = {2, 3, 4};
  c.ats.layer_loss_weights = AtsParams::default_weights(3);
  c.ats.max_tokens = 9;
  c.validate();
  return c;
}

Image noise_image(std::uint64_t seed) {
  Rng rng(seed);
  Image img(32, 32);
  for (double& v : img.pixels) v = std::floor(256.0 * uniform01(rng));
  return img;
}

void BM_Forward(benchmark::State& state) {
  const auto policy = static_cast<AdaptivePolicy>(state.range(0));
  const VisionTransformer model(desk_config(policy), 1);
  const Image img = noise_image(2);
  for (auto _ : state) {
    ag::Tape tape(false);
    ParamBinding bind(tape, model.parameters(), false);
    benchmark::DoNotOptimize(model.forward(bind, img).logits.value());
  }
  state.SetLabel(std::string(to_string(policy)));
}
BENCHMARK(BM_Forward)->DenseRange(0, 3);

void BM_PatchGradient(benchmark::State& state) {
  const auto policy = static_cast<AdaptivePolicy>(state.range(0));
  const VisionTransformer model(desk_config(policy), 3);
  const Image img = noise_image(4);
  for (auto _ : state) {
    ag::Tape tape(true);
    ParamBinding bind(tape, model.parameters(), false);
    const ForwardResult out = model.forward(bind, img, attack_forward_options(5));
    tape.backward(attack_loss({ObjectiveKind::compute_only}, model.config(), out, std::nullopt));
    benchmark::DoNotOptimize(model.pixel_gradient(out).pixels.data());
  }
  state.SetLabel(std::string(to_string(policy)));
}
BENCHMARK(BM_PatchGradient)->DenseRange(1, 3);

void BM_TraceFlops(benchmark::State& state) {
  const ModelConfig c = desk_config(AdaptivePolicy::avit);
  const VisionTransformer model(c, 6);
  ag::Tape tape(false);
  ParamBinding bind(tape, model.parameters(), false);
  const ForwardResult out = model.forward(bind, noise_image(7));
  for (auto _ : state) benchmark::DoNotOptimize(flops::trace_flops(out.trace, c).total);
}
BENCHMARK(BM_TraceFlops);

}  // namespace

BENCHMARK_MAIN();
