// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "slowvit/report.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json_io.hpp"
#include "slowvit/errors.hpp"

namespace slowvit::report {

namespace {

constexpr const char* kHeader =
    "method,attack,model_gflops,top1,attack_success,flops_min_gflops,flops_max_gflops";

std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_num(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ConfigError("bad number '" + s + "' in report CSV");
  return v;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

std::string attack_label(const std::string& a) { return a.empty() ? "-" : a; }

}  // namespace

Row make_row(const std::string& method, const std::string& attack, const AttackReport& rep) {
  Row r;
  r.method = method;
  r.attack = rep.attacked ? attack : "-";
  r.gflops = rep.mean_flops / 1e9;
  r.top1 = rep.top1;
  if (rep.attacked) r.success = rep.success;
  r.flops_min_gflops = rep.baseline.flops_min / 1e9;
  r.flops_max_gflops = rep.baseline.flops_max / 1e9;
  return r;
}

std::string format_percent(std::optional<double> fraction) {
  if (!fraction) return "-";
  long pct = std::lround(*fraction * 100.0);
  if (pct == 0) pct = 0;  // no "-0%"
  return std::to_string(pct) + "%";
}

std::string to_csv(const std::vector<Row>& rows) {
  std::ostringstream os;
  os << kHeader << '\n';
  for (const Row& r : rows) {
    os << csv_field(r.method) << ',' << csv_field(attack_label(r.attack)) << ',' << num(r.gflops) << ','
       << num(r.top1) << ',' << (r.success ? num(*r.success) : std::string("-")) << ',' << num(r.flops_min_gflops)
       << ',' << num(r.flops_max_gflops) << '\n';
  }
  return os.str();
}

std::vector<Row> from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kHeader) throw ConfigError("report CSV has an unexpected header");
  std::vector<Row> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 7) throw ConfigError("report CSV row has " + std::to_string(f.size()) + " fields");
    Row r;
    r.method = f[0];
    r.attack = f[1];
    r.gflops = parse_num(f[2]);
    r.top1 = parse_num(f[3]);
    if (f[4] != "-") r.success = parse_num(f[4]);
    r.flops_min_gflops = parse_num(f[5]);
    r.flops_max_gflops = parse_num(f[6]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string to_markdown(const std::vector<Row>& rows) {
  std::ostringstream os;
  os << "| Method | Attack | Model GFLOPs | Top-1 Acc | Attack Success |\n";
  os << "|---|---|---:|---:|---:|\n";
  char buf[64];
  for (const Row& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.4g", r.gflops);
    std::string gf = buf;
    std::snprintf(buf, sizeof(buf), "%.1f%%", r.top1 * 100.0);
    os << "| " << r.method << " | " << attack_label(r.attack) << " | " << gf << " | " << buf << " | "
       << format_percent(r.success) << " |\n";
  }
  return os.str();
}

std::string to_plot_json(const std::vector<Row>& rows) {
  json arr = json::array();
  for (const Row& r : rows) {
    json j{{"method", r.method},
           {"attack", attack_label(r.attack)},
           {"model_gflops", r.gflops},
           {"top1", r.top1},
           {"attack_success", nullptr},
           {"flops_min_gflops", r.flops_min_gflops},
           {"flops_max_gflops", r.flops_max_gflops}};
    if (r.success) j["attack_success"] = *r.success;
    arr.push_back(std::move(j));
  }
  return json{{"rows", arr}}.dump(2) + "\n";
}

void emit(const std::string& stem, const std::vector<Row>& rows) {
  if (rows.empty()) throw ContractError("report::emit: no rows");
  write_text_file(stem + ".csv", to_csv(rows));
  write_text_file(stem + ".md", to_markdown(rows));
  write_text_file(stem + ".json", to_plot_json(rows));
}

}  // namespace slowvit::report
