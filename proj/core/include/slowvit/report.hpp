// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slowvit/attack.hpp"

namespace slowvit::report {

/// One table row: method, attack, model GFLOPs, top-1, attack success.
struct Row {
  std::string method;
  std::string attack;  // "-" or empty when no attack
  double gflops = 0.0;
  double top1 = 0.0;
  std::optional<double> success;  // absent for unattacked rows
  double flops_min_gflops = 0.0;
  double flops_max_gflops = 0.0;

  bool operator==(const Row&) const = default;
};

Row make_row(const std::string& method, const std::string& attack, const AttackReport& rep);

/// Rounded whole percent with a sign on negatives ("100%", "-2%"); "-" when absent.
std::string format_percent(std::optional<double> fraction);

/// Header: method,attack,model_gflops,top1,attack_success,flops_min_gflops,flops_max_gflops.
/// Numbers are written with round-trip precision; an absent success is "-".
std::string to_csv(const std::vector<Row>& rows);
std::vector<Row> from_csv(const std::string& text);

std::string to_markdown(const std::vector<Row>& rows);

/// {"rows": [...]} with numeric fields for plotting.
std::string to_plot_json(const std::vector<Row>& rows);

/// Writes <stem>.csv, <stem>.md and <stem>.json. Throws ContractError on an empty table.
void emit(const std::string& stem, const std::vector<Row>& rows);

}  // namespace slowvit::report
