// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "slowvit/checkpoint.hpp"
#include "slowvit/errors.hpp"
#include "slowvit/experiments.hpp"
#include "slowvit/random.hpp"

namespace fs = std::filesystem;
using namespace slowvit;

namespace {

struct Common {
  std::string config;
  std::string checkpoint;
  std::string output_dir;
  std::string data_root;
  std::int64_t seed = -1;
  bool synthetic = false;
};

struct AttackFlags {
  std::string objective;
  double task_weight = -1.0;
  int target = -1;
  int patch_size = -1;
  int row = -1;
  int col = -1;
  int iterations = -2;
  double lr = -1.0;
  std::string name;
};

void log_line(const std::string& msg) {
  using clock = std::chrono::steady_clock;
  static const auto start = clock::now();
  const double s = std::chrono::duration<double>(clock::now() - start).count();
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(1);
  os << "[" << s << "s] " << msg;
  std::cerr << os.str() << std::endl;
}

void add_common(CLI::App* app, Common& c, bool needs_checkpoint) {
  app->add_option("-c,--config", c.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  if (needs_checkpoint) {
    app->add_option("--checkpoint", c.checkpoint, "Backbone checkpoint (default: <output-dir>/backbone.ckpt)");
  }
  app->add_option("-o,--output-dir", c.output_dir, "Override the output directory");
  app->add_option("--data-root", c.data_root, std::string("CIFAR-10 binary directory (default: $") + kDataRootEnv + ")");
  app->add_option("--seed", c.seed, "Override the global seed");
  app->add_flag("--synthetic", c.synthetic, "Use the synthetic dataset");
}

void add_attack_flags(CLI::App* app, AttackFlags& a) {
  app->add_option("--objective", a.objective, "compute_only|preserve_acc|destroy_acc|tap|ntap|random");
  app->add_option("--task-weight", a.task_weight, "Weight of the task loss for preserve_acc/destroy_acc");
  app->add_option("--target", a.target, "Target class for tap (default: averaged random targets)");
  app->add_option("--patch-size", a.patch_size, "Patch side in pixels");
  app->add_option("--row", a.row, "Patch top row");
  app->add_option("--col", a.col, "Patch left column");
  app->add_option("--iterations", a.iterations, "Patch optimizer step budget");
  app->add_option("--lr", a.lr, "Patch learning rate (pixel units)");
}

ExperimentConfig load_config(const Common& c) {
  ExperimentConfig cfg = ExperimentConfig::load(c.config);
  if (!c.output_dir.empty()) cfg.output_dir = c.output_dir;
  if (!c.data_root.empty()) cfg.dataset.root = c.data_root;
  if (c.synthetic) cfg.dataset.source = DataSource::synthetic;
  if (c.seed >= 0) {
    cfg.seed = static_cast<std::uint64_t>(c.seed);
    cfg.train.seed = derive_seed(cfg.seed, "train");
    cfg.attack.train.seed = derive_seed(cfg.seed, "attack");
  }
  cfg.validate();
  return cfg;
}

void apply_attack_flags(ExperimentConfig& cfg, const AttackFlags& a) {
  if (!a.objective.empty()) cfg.attack.objective.kind = parse_objective(a.objective);
  if (a.task_weight >= 0.0) cfg.attack.objective.task_weight = a.task_weight;
  if (a.target >= 0) cfg.attack.objective.target_class = a.target;
  if (a.patch_size > 0) cfg.attack.patch_size = a.patch_size;
  if (a.row >= 0) cfg.attack.row = a.row;
  if (a.col >= 0) cfg.attack.col = a.col;
  if (a.iterations >= -1) cfg.attack.train.max_iterations = a.iterations;
  if (a.lr > 0.0) cfg.attack.train.optimizer.lr = a.lr;
  cfg.validate();
}

DatasetSplits load_data(const ExperimentConfig& cfg) {
  DatasetSplits d = load_dataset(cfg.dataset);
  log_line("dataset: " + d.description + ", " + std::to_string(d.train.size()) + " train / " +
           std::to_string(d.eval.size()) + " eval");
  return d;
}

VisionTransformer load_model(const Common& c, const ExperimentConfig& cfg) {
  const std::string path = c.checkpoint.empty() ? (fs::path(cfg.output_dir) / "backbone.ckpt").string() : c.checkpoint;
  VisionTransformer m = load_checkpoint(path);
  log_line("loaded " + path + " (" + std::string(to_string(m.config().adaptive_policy)) + ")");
  return m;
}

void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slowvit: compute-maximizing adversarial patches for adaptive vision transformers"};
  app.require_subcommand(1);

  Common common;
  AttackFlags attack;
  std::string patch_stem;
  std::vector<std::string> report_inputs;
  std::string report_out;

  auto* train = app.add_subcommand("train-backbone", "Train an adaptive ViT and save a checkpoint");
  add_common(train, common, false);
  int epochs = -1;
  train->add_option("--epochs", epochs, "Override the number of training epochs");

  auto* train_patch_cmd = app.add_subcommand("train-patch", "Optimize a universal patch and evaluate it");
  add_common(train_patch_cmd, common, true);
  add_attack_flags(train_patch_cmd, attack);
  train_patch_cmd->add_option("--name", attack.name, "Output file stem (default: the objective)");

  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint with or without a stored patch");
  add_common(eval_cmd, common, true);
  eval_cmd->add_option("--patch", patch_stem, "Patch file stem (<stem>.ppm + <stem>.json)");

  auto* size_cmd = app.add_subcommand("ablate-size", "Attack success across patch sizes");
  add_common(size_cmd, common, true);
  add_attack_flags(size_cmd, attack);

  auto* loc_cmd = app.add_subcommand("ablate-location", "Attack success across patch locations");
  add_common(loc_cmd, common, true);
  add_attack_flags(loc_cmd, attack);

  auto* defend_cmd = app.add_subcommand("defend", "Adversarial training against a patch pool, then re-attack");
  add_common(defend_cmd, common, true);
  add_attack_flags(defend_cmd, attack);

  auto* report_cmd = app.add_subcommand("report", "Merge report CSVs into CSV, markdown and plot JSON");
  report_cmd->add_option("inputs", report_inputs, "Report CSV files")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("-o,--out", report_out, "Output file stem")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      ExperimentConfig cfg = load_config(common);
      if (epochs >= 0) cfg.train.epochs = epochs;
      const DatasetSplits data = load_data(cfg);
      const BackboneOutcome out = run_train_backbone(cfg, data, log_line);
      write_file(fs::path(cfg.output_dir) / "experiment.json", cfg.to_json());
      std::cout << "checkpoint: " << out.checkpoint_path << "\n";
    } else if (train_patch_cmd->parsed()) {
      ExperimentConfig cfg = load_config(common);
      apply_attack_flags(cfg, attack);
      const DatasetSplits data = load_data(cfg);
      const VisionTransformer model = load_model(common, cfg);
      const EvalBaseline base = evaluate_baseline(model, data.eval);
      const AttackOutcome out = run_attack(model, data, cfg.attack, base, cfg.seed, log_line);
      const std::string name = attack.name.empty() ? std::string(to_string(cfg.attack.objective.kind)) : attack.name;
      write_attack_outputs(cfg.output_dir, name, out, cfg.attack, model.parameters().checksum());
      const std::vector<report::Row> rows{
          report::make_row(std::string(to_string(model.config().adaptive_policy)), "-", evaluate(model, data.eval, nullptr, base)),
          report::make_row(std::string(to_string(model.config().adaptive_policy)), cfg.attack.objective.describe(),
                           out.report)};
      report::emit((fs::path(cfg.output_dir) / (name + "_table")).string(), rows);
      std::cout << report::to_markdown(rows);
    } else if (eval_cmd->parsed()) {
      const ExperimentConfig cfg = load_config(common);
      const DatasetSplits data = load_data(cfg);
      const VisionTransformer model = load_model(common, cfg);
      const EvalBaseline base = evaluate_baseline(model, data.eval);
      std::vector<report::Row> rows{report::make_row(std::string(to_string(model.config().adaptive_policy)), "-",
                                                     evaluate(model, data.eval, nullptr, base))};
      if (!patch_stem.empty()) {
        const StoredPatch sp = load_patch(patch_stem);
        rows.push_back(report::make_row(std::string(to_string(model.config().adaptive_policy)), sp.meta.objective,
                                        evaluate_attack(model, data.eval, &sp.patch, base)));
      }
      std::cout << report::to_markdown(rows);
    } else if (size_cmd->parsed() || loc_cmd->parsed()) {
      const bool by_size = size_cmd->parsed();
      ExperimentConfig cfg = load_config(common);
      apply_attack_flags(cfg, attack);
      const DatasetSplits data = load_data(cfg);
      const VisionTransformer model = load_model(common, cfg);
      const EvalBaseline base = evaluate_baseline(model, data.eval);
      const auto points = by_size ? ablate_size(model, data, cfg, base, log_line)
                                  : ablate_location(model, data, cfg, base, log_line);
      const std::string md = ablation_markdown(points, by_size);
      write_file(fs::path(cfg.output_dir) / (by_size ? "ablate_size.md" : "ablate_location.md"), md);
      std::cout << md;
    } else if (defend_cmd->parsed()) {
      ExperimentConfig cfg = load_config(common);
      apply_attack_flags(cfg, attack);
      const DatasetSplits data = load_data(cfg);
      const VisionTransformer model = load_model(common, cfg);
      const DefenseOutcome out = run_defense(model, data, cfg, log_line);
      fs::create_directories(cfg.output_dir);
      save_checkpoint((fs::path(cfg.output_dir) / "defended.ckpt").string(), out.defended);
      out.defense.pool.save((fs::path(cfg.output_dir) / "pool").string());
      report::emit((fs::path(cfg.output_dir) / "defense_table").string(), out.table);
      std::cout << report::to_markdown(out.table);
      std::cout << "defended model without attack: " << out.defended_clean.mean_flops / 1e9 << " GFLOPs, top-1 "
                << out.defended_clean.top1 << "\n";
    } else if (report_cmd->parsed()) {
      std::vector<report::Row> rows;
      for (const std::string& in : report_inputs) {
        std::ifstream f(in);
        std::stringstream ss;
        ss << f.rdbuf();
        auto part = report::from_csv(ss.str());
        rows.insert(rows.end(), part.begin(), part.end());
      }
      if (fs::path(report_out).has_parent_path()) fs::create_directories(fs::path(report_out).parent_path());
      report::emit(report_out, rows);
      std::cout << report::to_markdown(rows);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
