// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "slowvit/attack.hpp"

#include <algorithm>
#include <cmath>

#include "json_io.hpp"
#include "slowvit/ats.hpp"
#include "slowvit/errors.hpp"
#include "slowvit/flops.hpp"
#include "slowvit/random.hpp"

namespace slowvit {

namespace {

constexpr std::pair<ObjectiveKind, std::string_view> kObjectiveNames[] = {
    {ObjectiveKind::compute_only, "compute_only"}, {ObjectiveKind::preserve_acc, "preserve_acc"},
    {ObjectiveKind::destroy_acc, "destroy_acc"},   {ObjectiveKind::tap, "tap"},
    {ObjectiveKind::ntap, "ntap"},                 {ObjectiveKind::random, "random"},
};

int argmax(const RowVector& logits) {
  Eigen::Index best = 0;
  logits.maxCoeff(&best);
  return static_cast<int>(best);
}

int require_label(std::optional<int> label, const AttackObjective& objective) {
  if (!label) throw ContractError(std::string(to_string(objective.kind)) + " objective needs a label");
  return *label;
}

}  // namespace

std::string_view to_string(ObjectiveKind k) {
  for (const auto& [kind, name] : kObjectiveNames) {
    if (kind == k) return name;
  }
  return "unknown";
}

ObjectiveKind parse_objective(std::string_view name) {
  for (const auto& [kind, n] : kObjectiveNames) {
    if (n == name) return kind;
  }
  throw ConfigError("unknown attack objective '" + std::string(name) + "'");
}

void AttackObjective::validate(int num_classes) const {
  if (!(task_weight >= 0.0) || !std::isfinite(task_weight)) throw ConfigError("task_weight must be >= 0");
  if (kind == ObjectiveKind::tap && (target_class < 0 || target_class >= num_classes)) {
    throw ContractError("tap objective needs a target class in [0, " + std::to_string(num_classes) + ")");
  }
}

std::string AttackObjective::describe() const {
  std::string s(to_string(kind));
  if (kind == ObjectiveKind::preserve_acc || kind == ObjectiveKind::destroy_acc) {
    s += "(w=" + json(task_weight).dump() + ")";
  } else if (kind == ObjectiveKind::tap) {
    s += "(target=" + std::to_string(target_class) + ")";
  }
  return s;
}

ag::Var policy_attack_loss(const ModelConfig& config, const ComputeTrace& trace) {
  if (trace.policy != config.adaptive_policy) throw ContractError("policy_attack_loss: trace policy differs from model");
  switch (trace.policy) {
    case AdaptivePolicy::avit:
      if (!trace.halting) throw ContractError("policy_attack_loss: trace has no halting record");
      return avit::avit_attack_loss(*trace.halting, config.halting);
    case AdaptivePolicy::ats:
      return ats::ats_attack_loss(trace, config.ats);
    case AdaptivePolicy::adavit:
      if (!trace.masks) throw ContractError("policy_attack_loss: trace has no decision masks");
      return adavit::adavit_attack_loss(*trace.masks);
    case AdaptivePolicy::none:
      break;
  }
  throw ContractError("policy_attack_loss: the model has no adaptive policy");
}

ag::Var attack_loss(const AttackObjective& objective, const ModelConfig& config, const ForwardResult& out,
                    std::optional<int> label) {
  objective.validate(config.num_classes);
  switch (objective.kind) {
    case ObjectiveKind::compute_only:
      return policy_attack_loss(config, out.trace);
    case ObjectiveKind::preserve_acc:
    case ObjectiveKind::destroy_acc: {
      const ag::Var ce = ag::cross_entropy(out.logits, require_label(label, objective));
      const double sign = objective.kind == ObjectiveKind::preserve_acc ? 1.0 : -1.0;
      return ag::add(policy_attack_loss(config, out.trace), ag::scale(ce, sign * objective.task_weight));
    }
    case ObjectiveKind::tap:
      return ag::cross_entropy(out.logits, objective.target_class);
    case ObjectiveKind::ntap:
      return ag::scale(ag::cross_entropy(out.logits, require_label(label, objective)), -1.0);
    case ObjectiveKind::random:
      break;
  }
  throw ContractError("attack_loss: the random objective is not optimized");
}

ForwardOptions attack_forward_options(std::uint64_t gumbel_seed) {
  ForwardOptions o;
  o.input_grad = true;
  o.param_grad = false;
  o.mask_mode = MaskMode::soft;
  o.gumbel_seed = gumbel_seed;
  return o;
}

PatchTrainResult train_patch(const VisionTransformer& model, const Dataset& data, const AttackObjective& objective,
                             const PatchTrainConfig& config, const Patch& initial) {
  const ModelConfig& mc = model.config();
  objective.validate(mc.num_classes);
  check_patch_bounds(initial.size, initial.row, initial.col, mc.image_size, mc.image_size);
  if (config.batch_size < 1 || config.epochs < 0) throw ConfigError("patch training needs batch_size >= 1, epochs >= 0");

  PatchTrainResult result;
  result.patch = project_quantize(initial);
  if (objective.kind == ObjectiveKind::random || data.size() == 0) return result;

  const std::size_t n = data.size();
  const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), n);
  const int steps_per_epoch = static_cast<int>((n + bs - 1) / bs);
  const int budget = config.max_iterations >= 0 ? config.max_iterations : steps_per_epoch * config.epochs;

  const Eigen::Index count = static_cast<Eigen::Index>(initial.pixels.pixels.size());
  Matrix latent = Eigen::Map<const Matrix>(result.patch.pixels.pixels.data(), count, 1);
  AdamW opt(config.optimizer);
  std::vector<std::size_t> order(n);
  const int p = initial.size;

  for (int epoch = 0; result.iterations < budget; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle(derive_seed(config.seed, "patch-epoch-" + std::to_string(epoch)));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(shuffle, i)]);

    for (int step = 0; step < steps_per_epoch && result.iterations < budget; ++step) {
      const std::size_t begin = static_cast<std::size_t>(step) * bs;
      const std::size_t end = std::min(begin + bs, n);
      Matrix grad = Matrix::Zero(count, 1);
      double loss_sum = 0.0;
      for (std::size_t b = begin; b < end; ++b) {
        const std::size_t idx = order[b];
        const Image x = apply_patch(data.images[idx], result.patch);
        ag::Tape tape(true);
        ParamBinding bind(tape, model.parameters(), false);
        const auto gumbel = derive_seed(config.seed, static_cast<std::uint64_t>(result.iterations) * n + b);
        const ForwardResult out = model.forward(bind, x, attack_forward_options(gumbel));
        const ag::Var loss = attack_loss(objective, mc, out, data.labels[idx]);
        if (!std::isfinite(loss.item())) {
          throw DivergenceError("patch training diverged at iteration " + std::to_string(result.iterations) +
                                " (loss " + std::to_string(loss.item()) + ")");
        }
        loss_sum += loss.item();
        tape.backward(loss);
        const Image g = model.pixel_gradient(out);
        for (int r = 0; r < p; ++r) {
          for (int c = 0; c < p; ++c) {
            for (int ch = 0; ch < 3; ++ch) {
              grad(static_cast<Eigen::Index>((r * p + c) * 3 + ch), 0) += g.at(initial.row + r, initial.col + c, ch);
            }
          }
        }
      }
      const double batch = static_cast<double>(end - begin);
      grad /= batch;
      result.loss_history.push_back(loss_sum / batch);
      // The optimizer keeps a continuous copy; only the quantized patch is pasted.
      opt.step("patch", latent, grad, true);
      latent = latent.cwiseMax(0.0).cwiseMin(255.0);
      for (Eigen::Index k = 0; k < count; ++k) result.patch.pixels.pixels[static_cast<std::size_t>(k)] = latent(k, 0);
      result.patch = project_quantize(result.patch);
      ++result.iterations;
    }
  }
  return result;
}

std::vector<int> AttackReport::flops_histogram(int bins) const {
  if (bins < 1) throw ContractError("flops_histogram: bins must be >= 1");
  std::vector<int> h(static_cast<std::size_t>(bins), 0);
  if (per_image_flops.empty()) return h;
  const auto [lo_it, hi_it] = std::minmax_element(per_image_flops.begin(), per_image_flops.end());
  const double lo = static_cast<double>(*lo_it);
  const double span = static_cast<double>(*hi_it) - lo;
  for (std::int64_t f : per_image_flops) {
    int b = span > 0.0 ? static_cast<int>((static_cast<double>(f) - lo) / span * bins) : 0;
    ++h[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))];
  }
  return h;
}

std::string AttackReport::to_json() const {
  json j;
  j["attacked"] = attacked;
  j["mean_flops"] = mean_flops;
  j["top1"] = top1;
  j["flops_min"] = baseline.flops_min;
  j["flops_max"] = baseline.flops_max;
  j["top1_clean"] = baseline.top1;
  j["attack_success"] = success;
  j["per_layer_tokens"] = per_layer_tokens;
  j["flops_histogram"] = flops_histogram(10);
  return j.dump(2);
}

AttackReport evaluate(const VisionTransformer& model, const Dataset& data, const Patch* patch,
                      const std::optional<EvalBaseline>& baseline) {
  const ModelConfig& mc = model.config();
  if (data.size() == 0) throw ContractError("evaluate: empty dataset");
  AttackReport rep;
  rep.attacked = patch != nullptr;
  rep.per_layer_tokens.assign(static_cast<std::size_t>(mc.num_layers), 0.0);
  double flops_sum = 0.0;
  int correct = 0;
  ForwardOptions opts;
  opts.mask_mode = MaskMode::hard;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Image x = patch ? apply_patch(data.images[i], *patch) : data.images[i];
    ag::Tape tape(false);
    ParamBinding bind(tape, model.parameters(), false);
    opts.gumbel_seed = derive_seed(mc.decision.eval_seed, static_cast<std::uint64_t>(i));
    const ForwardResult out = model.forward(bind, x, opts);
    const flops::FlopsReport fr = flops::trace_flops(out.trace, mc);
    rep.per_image_flops.push_back(fr.total);
    flops_sum += static_cast<double>(fr.total);
    for (int l = 0; l < mc.num_layers; ++l) {
      rep.per_layer_tokens[static_cast<std::size_t>(l)] += out.trace.layers[static_cast<std::size_t>(l)].retained_tokens;
    }
    correct += argmax(out.trace.logits) == data.labels[i] ? 1 : 0;
  }
  const double count = static_cast<double>(data.size());
  for (double& t : rep.per_layer_tokens) t /= count;
  rep.mean_flops = flops_sum / count;
  rep.top1 = correct / count;
  if (baseline) {
    rep.baseline = *baseline;
    rep.success = rep.attacked ? flops::attack_success(rep.mean_flops, baseline->flops_min, baseline->flops_max) : 0.0;
  }
  return rep;
}

EvalBaseline evaluate_baseline(const VisionTransformer& model, const Dataset& data) {
  const AttackReport clean = evaluate(model, data, nullptr);
  return EvalBaseline{clean.mean_flops, static_cast<double>(flops::architecture_flops(model.config()).total),
                      clean.top1};
}

AttackReport evaluate_attack(const VisionTransformer& model, const Dataset& data, const Patch* patch,
                             const EvalBaseline& baseline) {
  return evaluate(model, data, patch, baseline);
}

}  // namespace slowvit
