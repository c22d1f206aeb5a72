// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "slowvit/experiments.hpp"

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "json_io.hpp"
#include "slowvit/checkpoint.hpp"
#include "slowvit/errors.hpp"
#include "slowvit/flops.hpp"
#include "slowvit/random.hpp"

namespace slowvit {

namespace fs = std::filesystem;

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_adamw(const json& j, AdamWConfig& o) {
  read_opt(j, "lr", o.lr);
  read_opt(j, "weight_decay", o.weight_decay);
  read_opt(j, "beta1", o.beta1);
  read_opt(j, "beta2", o.beta2);
}

void log_to(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f%%", 100.0 * v);
  return buf;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const std::string& text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  try {
    if (!j.contains("seed")) throw ConfigError("experiment config must set 'seed'");
    c.seed = j.at("seed").get<std::uint64_t>();

    if (!j.contains("model")) throw ConfigError("experiment config must set 'model'");
    const json& m = j.at("model");
    if (m.is_string()) {
      fs::path p = m.get<std::string>();
      if (p.is_relative()) p = fs::path(base_dir) / p;
      if (!fs::exists(p)) throw ConfigError("model config '" + p.string() + "' does not exist");
      c.model_config_path = p.string();
      c.model = ModelConfig::load(c.model_config_path);
    } else {
      c.model = model_config_from_json(m);
    }

    if (j.contains("dataset")) {
      const json& d = j.at("dataset");
      if (d.contains("source")) c.dataset.source = parse_data_source(d.at("source").get<std::string>());
      read_opt(d, "root", c.dataset.root);
      read_opt(d, "train_count", c.dataset.train_count);
      read_opt(d, "eval_count", c.dataset.eval_count);
      read_opt(d, "split_seed", c.dataset.split_seed);
      read_opt(d, "synthetic_fallback", c.dataset.synthetic_fallback);
      if (!c.dataset.root.empty() && fs::path(c.dataset.root).is_relative()) {
        c.dataset.root = (fs::path(base_dir) / c.dataset.root).string();
      }
      if (!c.dataset.root.empty() && !fs::exists(c.dataset.root)) {
        throw ConfigError("dataset root '" + c.dataset.root + "' does not exist");
      }
    }
    c.dataset.image_size = c.model.image_size;
    c.dataset.num_classes = c.model.num_classes;

    if (j.contains("train")) {
      const json& t = j.at("train");
      read_adamw(t, c.train.optimizer);
      read_opt(t, "batch_size", c.train.batch_size);
      read_opt(t, "epochs", c.train.epochs);
      read_opt(t, "efficiency_weight", c.train.efficiency_weight);
      read_opt(t, "warmup_steps", c.train.warmup_steps);
      read_opt(t, "cosine_decay", c.train.cosine_decay);
    }
    c.train.seed = derive_seed(c.seed, "train");

    if (j.contains("attack")) {
      const json& a = j.at("attack");
      if (a.contains("objective")) c.attack.objective.kind = parse_objective(a.at("objective").get<std::string>());
      read_opt(a, "task_weight", c.attack.objective.task_weight);
      read_opt(a, "target_class", c.attack.objective.target_class);
      read_opt(a, "patch_size", c.attack.patch_size);
      read_opt(a, "row", c.attack.row);
      read_opt(a, "col", c.attack.col);
      read_adamw(a, c.attack.train.optimizer);
      read_opt(a, "batch_size", c.attack.train.batch_size);
      read_opt(a, "epochs", c.attack.train.epochs);
      read_opt(a, "max_iterations", c.attack.train.max_iterations);
      read_opt(a, "tap_targets", c.attack.tap_targets);
    }
    c.attack.train.seed = derive_seed(c.seed, "attack");

    if (j.contains("defense")) {
      const json& d = j.at("defense");
      read_opt(d, "epochs", c.defense.epochs);
      read_opt(d, "budget_iterations", c.defense.budget_iterations);
      read_opt(d, "refreshes_per_epoch", c.defense.refreshes_per_epoch);
      read_opt(d, "refresh_lr_multiplier", c.defense.refresh_lr_multiplier);
      read_opt(d, "patch_batch_size", c.defense.patch_batch_size);
      read_opt(d, "lr", c.defense.lr);
    }
    if (j.contains("ablation")) {
      const json& a = j.at("ablation");
      read_opt(a, "sizes", c.ablation_sizes);
      if (a.contains("locations")) {
        c.ablation_locations.clear();
        for (const auto& loc : a.at("locations")) c.ablation_locations.emplace_back(loc.at(0).get<int>(), loc.at(1).get<int>());
      }
    }
    read_opt(j, "output_dir", c.output_dir);
    if (fs::path(c.output_dir).is_relative()) c.output_dir = (fs::path(base_dir) / c.output_dir).string();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  return from_json(read_text_file(path), fs::path(path).parent_path().string());
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["model"] = to_json_value(model);
  j["dataset"] = {{"source", to_string(dataset.source)},   {"root", dataset.root},
                  {"train_count", dataset.train_count},     {"eval_count", dataset.eval_count},
                  {"split_seed", dataset.split_seed},       {"synthetic_fallback", dataset.synthetic_fallback}};
  j["train"] = {{"lr", train.optimizer.lr},
                {"weight_decay", train.optimizer.weight_decay},
                {"batch_size", train.batch_size},
                {"epochs", train.epochs},
                {"efficiency_weight", train.efficiency_weight},
                {"warmup_steps", train.warmup_steps},
                {"cosine_decay", train.cosine_decay}};
  j["attack"] = {{"objective", to_string(attack.objective.kind)},
                 {"task_weight", attack.objective.task_weight},
                 {"target_class", attack.objective.target_class},
                 {"patch_size", attack.patch_size},
                 {"row", attack.row},
                 {"col", attack.col},
                 {"lr", attack.train.optimizer.lr},
                 {"weight_decay", attack.train.optimizer.weight_decay},
                 {"batch_size", attack.train.batch_size},
                 {"epochs", attack.train.epochs},
                 {"max_iterations", attack.train.max_iterations},
                 {"tap_targets", attack.tap_targets}};
  j["defense"] = {{"epochs", defense.epochs},
                  {"budget_iterations", defense.budget_iterations},
                  {"refreshes_per_epoch", defense.refreshes_per_epoch},
                  {"refresh_lr_multiplier", defense.refresh_lr_multiplier},
                  {"patch_batch_size", defense.patch_batch_size},
                  {"lr", defense.lr}};
  json locs = json::array();
  for (const auto& [r, c] : ablation_locations) locs.push_back({r, c});
  j["ablation"] = {{"sizes", ablation_sizes}, {"locations", locs}};
  j["output_dir"] = output_dir;
  return j.dump(2) + "\n";
}

void ExperimentConfig::validate() const {
  model.validate();
  dataset.validate();
  if (dataset.image_size != model.image_size || dataset.num_classes != model.num_classes) {
    throw ConfigError("dataset geometry does not match the model");
  }
  check_patch_bounds(attack.patch_size, attack.row, attack.col, model.image_size, model.image_size);
  if (attack.objective.kind == ObjectiveKind::tap && attack.objective.target_class >= model.num_classes) {
    throw ConfigError("tap target class out of range");
  }
  if (attack.objective.task_weight < 0.0) throw ConfigError("task_weight must be >= 0");
  if (attack.tap_targets < 1) throw ConfigError("tap_targets must be >= 1");
  if (defense.refreshes_per_epoch < 1 || defense.budget_iterations < 0 || defense.epochs < 0) {
    throw ConfigError("invalid defense settings");
  }
  for (int s : ablation_sizes) check_patch_bounds(s, 0, 0, model.image_size, model.image_size);
}

Patch ExperimentConfig::initial_patch(std::uint64_t stream) const {
  return init_patch(attack.patch_size, attack.row, attack.col, model.image_size, model.image_size,
                    derive_seed(seed, stream));
}

BackboneOutcome run_train_backbone(const ExperimentConfig& cfg, const DatasetSplits& data, const Logger& log) {
  BackboneOutcome out{VisionTransformer(cfg.model, derive_seed(cfg.seed, "init")), {}, {}, {}};
  fs::create_directories(cfg.output_dir);
  out.checkpoint_path = (fs::path(cfg.output_dir) / "backbone.ckpt").string();
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochMetrics& m) {
    std::ostringstream os;
    os << "epoch " << m.epoch + 1 << "/" << cfg.train.epochs << " loss " << m.loss << " ce " << m.task_loss
       << " train-acc " << pct(m.train_top1) << " mflops " << m.mean_flops / 1e6;
    log_to(log, os.str());
  };
  try {
    out.training = train_backbone(out.model, data.train, cfg.train, hooks);
  } catch (const DivergenceError&) {
    save_checkpoint(out.checkpoint_path, out.model);
    throw;
  }
  save_checkpoint(out.checkpoint_path, out.model);
  out.baseline = evaluate_baseline(out.model, data.eval);
  log_to(log, "eval top-1 " + pct(out.baseline.top1) + ", mean flops " + std::to_string(out.baseline.flops_min) +
                  " of " + std::to_string(out.baseline.flops_max));

  json metrics;
  json hist = json::array();
  for (const EpochMetrics& m : out.training.history) {
    hist.push_back({{"epoch", m.epoch}, {"loss", m.loss}, {"task_loss", m.task_loss}, {"train_top1", m.train_top1},
                    {"mean_flops", m.mean_flops}});
  }
  metrics["history"] = hist;
  metrics["eval"] = {{"top1", out.baseline.top1},
                     {"mean_flops", out.baseline.flops_min},
                     {"architecture_flops", out.baseline.flops_max}};
  metrics["dataset"] = data.description;
  metrics["checksum"] = std::to_string(out.model.parameters().checksum());
  write_text_file((fs::path(cfg.output_dir) / "backbone_metrics.json").string(), metrics.dump(2) + "\n");
  return out;
}

AttackOutcome run_attack(const VisionTransformer& model, const DatasetSplits& data, const AttackSettings& settings,
                         const EvalBaseline& baseline, std::uint64_t seed, const Logger& log) {
  const ModelConfig& mc = model.config();
  const Patch init = init_patch(settings.patch_size, settings.row, settings.col, mc.image_size, mc.image_size,
                                derive_seed(seed, "attack-init"));
  std::vector<AttackObjective> objectives{settings.objective};
  if (settings.objective.kind == ObjectiveKind::tap && settings.objective.target_class < 0) {
    objectives.clear();
    Rng rng(derive_seed(seed, "tap-targets"));
    for (int t = 0; t < settings.tap_targets; ++t) {
      AttackObjective o = settings.objective;
      o.target_class = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(mc.num_classes)));
      objectives.push_back(o);
    }
  }
  AttackOutcome out;
  for (std::size_t i = 0; i < objectives.size(); ++i) {
    PatchTrainConfig tc = settings.train;
    tc.seed = derive_seed(seed, "attack-train-" + std::to_string(i));
    PatchTrainResult pr = train_patch(model, data.train, objectives[i], tc, init);
    AttackReport rep = evaluate_attack(model, data.eval, &pr.patch, baseline);
    log_to(log, objectives[i].describe() + ": success " + pct(rep.success) + ", top-1 " + pct(rep.top1) +
                    " after " + std::to_string(pr.iterations) + " iterations");
    if (i == 0) {
      out.patch = std::move(pr);
      out.report = std::move(rep);
    } else {
      out.report.mean_flops += rep.mean_flops;
      out.report.top1 += rep.top1;
      out.report.success += rep.success;
    }
  }
  if (objectives.size() > 1) {
    const double k = static_cast<double>(objectives.size());
    out.report.mean_flops /= k;
    out.report.top1 /= k;
    out.report.success = flops::attack_success(out.report.mean_flops, baseline.flops_min, baseline.flops_max);
  }
  return out;
}

void write_attack_outputs(const std::string& dir, const std::string& name, const AttackOutcome& outcome,
                          const AttackSettings& settings, std::uint64_t model_checksum) {
  fs::create_directories(dir);
  const std::string stem = (fs::path(dir) / name).string();
  save_patch(stem + "_patch", outcome.patch.patch,
             PatchMetadata{settings.objective.describe(), settings.train.seed, model_checksum,
                           outcome.patch.iterations});
  write_text_file(stem + "_report.json", outcome.report.to_json() + "\n");
  json hist = outcome.patch.loss_history;
  write_text_file(stem + "_loss.json", hist.dump() + "\n");
}

std::vector<AblationPoint> ablate_size(const VisionTransformer& model, const DatasetSplits& data,
                                       const ExperimentConfig& cfg, const EvalBaseline& baseline, const Logger& log) {
  std::vector<AblationPoint> out;
  for (int size : cfg.ablation_sizes) {
    AttackSettings s = cfg.attack;
    s.patch_size = size;
    s.row = 0;
    s.col = 0;
    log_to(log, "patch size " + std::to_string(size));
    AttackOutcome o = run_attack(model, data, s, baseline, derive_seed(cfg.seed, "ablate-size"), log);
    out.push_back({size, 0, 0, patch_area_fraction(size, cfg.model.image_size), std::move(o.report)});
  }
  return out;
}

std::vector<AblationPoint> ablate_location(const VisionTransformer& model, const DatasetSplits& data,
                                           const ExperimentConfig& cfg, const EvalBaseline& baseline,
                                           const Logger& log) {
  std::vector<AblationPoint> out;
  for (const auto& [row, col] : cfg.ablation_locations) {
    AttackSettings s = cfg.attack;
    s.row = row;
    s.col = col;
    check_patch_bounds(s.patch_size, row, col, cfg.model.image_size, cfg.model.image_size);
    log_to(log, "patch location (" + std::to_string(row) + ", " + std::to_string(col) + ")");
    AttackOutcome o = run_attack(model, data, s, baseline, derive_seed(cfg.seed, "ablate-location"), log);
    out.push_back({s.patch_size, row, col, patch_area_fraction(s.patch_size, cfg.model.image_size), std::move(o.report)});
  }
  return out;
}

std::string ablation_markdown(const std::vector<AblationPoint>& points, bool by_size) {
  std::ostringstream os;
  os << (by_size ? "| Patch size (area) | Model GFLOPs | Top-1 Acc | Attack Success |\n"
                 : "| Location (row, col) | Model GFLOPs | Top-1 Acc | Attack Success |\n");
  os << "|---|---:|---:|---:|\n";
  char buf[96];
  for (const AblationPoint& p : points) {
    if (by_size) {
      std::snprintf(buf, sizeof(buf), "%d (%.1f%%)", p.size, 100.0 * p.area);
    } else {
      std::snprintf(buf, sizeof(buf), "(%d, %d)", p.row, p.col);
    }
    os << "| " << buf << " | ";
    std::snprintf(buf, sizeof(buf), "%.4g | %.1f%% | ", p.report.mean_flops / 1e9, 100.0 * p.report.top1);
    os << buf << report::format_percent(p.report.success) << " |\n";
  }
  return os.str();
}

DefenseOutcome run_defense(const VisionTransformer& model, const DatasetSplits& data, const ExperimentConfig& cfg,
                           const Logger& log) {
  DefenseOutcome out{VisionTransformer(model.config(), model.parameters()), {}, {}, {}, {}, {}, {}};
  const EvalBaseline base = evaluate_baseline(model, data.eval);
  out.undefended_clean = evaluate(model, data.eval, nullptr, base);

  AttackSettings fresh = cfg.attack;
  fresh.train.max_iterations = cfg.defense.budget_iterations;
  log_to(log, "attacking the undefended model");
  out.undefended_attack = run_attack(model, data, fresh, base, derive_seed(cfg.seed, "fresh-attack"), log).report;

  DefenseConfig dc;
  dc.train = cfg.train;
  dc.train.epochs = cfg.defense.epochs;
  dc.train.warmup_steps = 0;
  if (cfg.defense.lr > 0.0) dc.train.optimizer.lr = cfg.defense.lr;
  dc.train.seed = derive_seed(cfg.seed, "defense-train");
  dc.objective = cfg.attack.objective;
  dc.patch = cfg.attack.train;
  dc.patch.batch_size = cfg.defense.patch_batch_size;
  dc.budget_iterations = cfg.defense.budget_iterations;
  dc.refreshes_per_epoch = cfg.defense.refreshes_per_epoch;
  dc.refresh_lr_multiplier = cfg.defense.refresh_lr_multiplier;
  dc.patch_size = cfg.attack.patch_size;
  dc.patch_row = cfg.attack.row;
  dc.patch_col = cfg.attack.col;
  dc.seed = derive_seed(cfg.seed, "defense");
  log_to(log, "adversarial training");
  out.defense = adversarial_train(out.defended, data.train, dc);
  log_to(log, "pool holds " + std::to_string(out.defense.pool.size()) + " patches");

  out.defended_clean = evaluate(out.defended, data.eval, nullptr, base);
  log_to(log, "attacking the defended model");
  out.defended_attack =
      run_attack(out.defended, data, fresh, base, derive_seed(cfg.seed, "fresh-attack"), log).report;

  const std::string method(to_string(model.config().adaptive_policy));
  const std::string attack_name(to_string(cfg.attack.objective.kind));
  out.table.push_back(report::make_row(method, "-", out.undefended_clean));
  out.table.push_back(report::make_row(method, attack_name, out.undefended_attack));
  out.table.push_back(report::make_row(method + "+defense", attack_name, out.defended_attack));
  return out;
}

}  // namespace slowvit
