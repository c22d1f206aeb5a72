// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "slowvit/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "slowvit/errors.hpp"
#include "slowvit/flops.hpp"
#include "slowvit/random.hpp"

namespace slowvit {

ag::Var training_loss(const VisionTransformer& model, const ForwardResult& out, int label, double efficiency_weight,
                      ag::Var* task_loss) {
  const ModelConfig& mc = model.config();
  const ag::Var ce = ag::cross_entropy(out.logits, label);
  if (task_loss) *task_loss = ce;
  switch (out.trace.policy) {
    case AdaptivePolicy::avit:
      return ag::add(ce, ag::scale(avit::efficiency_loss(*out.trace.halting, mc.halting), efficiency_weight));
    case AdaptivePolicy::adavit:
      return ag::add(ce, ag::scale(adavit::usage_loss(*out.trace.masks, mc.decision.gammas), efficiency_weight));
    case AdaptivePolicy::ats:
    case AdaptivePolicy::none:
      break;
  }
  return ce;
}

TrainResult train_backbone(VisionTransformer& model, const Dataset& data, const TrainConfig& config,
                           const TrainHooks& hooks) {
  if (config.batch_size < 1 || config.epochs < 0) throw ConfigError("training needs batch_size >= 1, epochs >= 0");
  if (data.size() == 0) throw ConfigError("training set is empty");
  const ModelConfig& mc = model.config();
  const std::size_t n = data.size();
  const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), n);
  const int steps_per_epoch = static_cast<int>((n + bs - 1) / bs);
  const int total_steps = steps_per_epoch * config.epochs;

  AdamW opt(config.optimizer);
  TrainResult result;
  std::vector<std::size_t> order(n);
  ForwardOptions fwd;
  fwd.param_grad = true;
  fwd.mask_mode = MaskMode::hard;
  fwd.straight_through = true;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle(derive_seed(config.seed, "train-epoch-" + std::to_string(epoch)));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(shuffle, i)]);

    EpochMetrics m;
    m.epoch = epoch;
    int correct = 0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      const double lr_scale = [&] {
        const int t = result.steps;
        if (t < config.warmup_steps) return (t + 1.0) / config.warmup_steps;
        if (!config.cosine_decay || total_steps <= config.warmup_steps) return 1.0;
        const double progress = static_cast<double>(t - config.warmup_steps) / (total_steps - config.warmup_steps);
        return 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
      }();
      opt.set_lr(config.optimizer.lr * lr_scale);

      const std::optional<Patch> patch = hooks.batch_patch ? hooks.batch_patch(epoch, step) : std::nullopt;
      const std::size_t begin = static_cast<std::size_t>(step) * bs;
      const std::size_t end = std::min(begin + bs, n);
      const double batch = static_cast<double>(end - begin);
      Gradients grads;
      for (std::size_t b = begin; b < end; ++b) {
        const std::size_t idx = order[b];
        const Image x = patch ? apply_patch(data.images[idx], *patch) : data.images[idx];
        ag::Tape tape(true);
        ParamBinding bind(tape, model.parameters(), true);
        fwd.gumbel_seed = derive_seed(config.seed, static_cast<std::uint64_t>(result.steps) * n + b);
        const ForwardResult out = model.forward(bind, x, fwd);
        ag::Var ce;
        const ag::Var loss = training_loss(model, out, data.labels[idx], config.efficiency_weight, &ce);
        if (!std::isfinite(loss.item())) {
          throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + " step " +
                                std::to_string(step));
        }
        m.loss += loss.item();
        m.task_loss += ce.item();
        m.mean_flops += static_cast<double>(flops::trace_flops(out.trace, mc).total);
        Eigen::Index pred = 0;
        out.trace.logits.maxCoeff(&pred);
        correct += static_cast<int>(pred) == data.labels[idx] ? 1 : 0;
        tape.backward(ag::scale(loss, 1.0 / batch));
        bind.accumulate_grads(grads);
      }
      opt.step(model.parameters(), grads);
      ++result.steps;
      if (hooks.after_step) hooks.after_step(epoch, step + 1, steps_per_epoch);
    }
    const double count = static_cast<double>(n);
    m.loss /= count;
    m.task_loss /= count;
    m.mean_flops /= count;
    m.train_top1 = correct / count;
    result.history.push_back(m);
    if (hooks.on_epoch) hooks.on_epoch(m);
  }
  return result;
}

}  // namespace slowvit
