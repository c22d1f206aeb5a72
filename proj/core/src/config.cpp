// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "slowvit/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json_io.hpp"
#include "slowvit/errors.hpp"

namespace slowvit {

std::string_view to_string(AdaptivePolicy p) {
  switch (p) {
    case AdaptivePolicy::none: return "none";
    case AdaptivePolicy::avit: return "avit";
    case AdaptivePolicy::ats: return "ats";
    case AdaptivePolicy::adavit: return "adavit";
  }
  return "none";
}

AdaptivePolicy parse_policy(std::string_view name) {
  if (name == "none") return AdaptivePolicy::none;
  if (name == "avit") return AdaptivePolicy::avit;
  if (name == "ats") return AdaptivePolicy::ats;
  if (name == "adavit") return AdaptivePolicy::adavit;
  throw ConfigError("unknown adaptive policy '" + std::string(name) + "'");
}

void HaltingParams::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("halting.epsilon must lie in (0, 1)");
  if (!(prior_std > 0.0)) throw ConfigError("halting.prior_std must be positive");
}

void AtsParams::validate(int num_layers) const {
  if (max_tokens < 1) throw ConfigError("ats.max_tokens must be >= 1");
  if (ats_layers.empty()) throw ConfigError("ats.ats_layers must not be empty");
  for (int l : ats_layers) {
    if (l < 1 || l > num_layers) {
      throw ConfigError("ats layer " + std::to_string(l) + " outside [1, " + std::to_string(num_layers) + "]");
    }
  }
  if (layer_loss_weights.size() != ats_layers.size()) {
    throw ConfigError("ats.layer_loss_weights must align with ats.ats_layers");
  }
  for (double w : layer_loss_weights) {
    if (!(w >= 0.0)) throw ConfigError("ats layer weights must be non-negative");
  }
}

std::vector<double> AtsParams::default_weights(std::size_t count) {
  std::vector<double> w(count);
  double v = 1.0;
  for (auto& x : w) {
    x = v;
    v *= 0.2;
  }
  return w;
}

void DecisionParams::validate() const {
  if (!(gumbel_temperature > 0.0)) throw ConfigError("decision.gumbel_temperature must be positive");
  for (double g : gammas) {
    if (!(g >= 0.0 && g <= 1.0)) throw ConfigError("decision.gammas must lie in [0, 1]");
  }
}

int ModelConfig::mlp_hidden() const { return static_cast<int>(std::lround(mlp_ratio * embed_dim)); }

void ModelConfig::validate() const {
  if (image_size <= 0 || patch_size <= 0) throw ConfigError("image_size and patch_size must be positive");
  if (image_size % patch_size != 0) {
    throw ConfigError("image_size " + std::to_string(image_size) + " not divisible by patch_size " +
                      std::to_string(patch_size));
  }
  if (embed_dim <= 0 || num_heads <= 0 || embed_dim % num_heads != 0) {
    throw ConfigError("embed_dim must be a positive multiple of num_heads");
  }
  if (num_layers <= 0) throw ConfigError("num_layers must be positive");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (!(mlp_ratio > 0.0) || mlp_hidden() < 1) throw ConfigError("mlp_ratio must be positive");
  for (double s : pixel_std) {
    if (!(s > 0.0)) throw ConfigError("pixel_std entries must be positive");
  }
  switch (adaptive_policy) {
    case AdaptivePolicy::avit: halting.validate(); break;
    case AdaptivePolicy::ats: ats.validate(num_layers); break;
    case AdaptivePolicy::adavit: decision.validate(); break;
    case AdaptivePolicy::none: break;
  }
}

json to_json_value(const ModelConfig& c) {
  json j;
  j["image_size"] = c.image_size;
  j["patch_size"] = c.patch_size;
  j["embed_dim"] = c.embed_dim;
  j["num_layers"] = c.num_layers;
  j["num_heads"] = c.num_heads;
  j["mlp_ratio"] = c.mlp_ratio;
  j["num_classes"] = c.num_classes;
  j["adaptive_policy"] = std::string(to_string(c.adaptive_policy));
  j["pixel_mean"] = c.pixel_mean;
  j["pixel_std"] = c.pixel_std;
  json p;
  p["halting"] = {{"epsilon", c.halting.epsilon},         {"gate_gain", c.halting.gate_gain},
                  {"gate_bias", c.halting.gate_bias},     {"alpha_d", c.halting.alpha_d},
                  {"alpha_p", c.halting.alpha_p},         {"target_layer", c.halting.target_layer},
                  {"prior_std", c.halting.prior_std}};
  p["ats"] = {{"ats_layers", c.ats.ats_layers},
              {"max_tokens", c.ats.max_tokens},
              {"layer_loss_weights", c.ats.layer_loss_weights}};
  p["decision"] = {{"gumbel_temperature", c.decision.gumbel_temperature},
                   {"gammas", c.decision.gammas},
                   {"init_bias", c.decision.init_bias},
                   {"eval_seed", c.decision.eval_seed}};
  j["policy_params"] = p;
  return j;
}

namespace {

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  try {
    get_if(j, "image_size", c.image_size);
    get_if(j, "patch_size", c.patch_size);
    get_if(j, "embed_dim", c.embed_dim);
    get_if(j, "num_layers", c.num_layers);
    get_if(j, "num_heads", c.num_heads);
    get_if(j, "mlp_ratio", c.mlp_ratio);
    get_if(j, "num_classes", c.num_classes);
    if (j.contains("adaptive_policy")) c.adaptive_policy = parse_policy(j.at("adaptive_policy").get<std::string>());
    get_if(j, "pixel_mean", c.pixel_mean);
    get_if(j, "pixel_std", c.pixel_std);
    if (j.contains("policy_params")) {
      const json& p = j.at("policy_params");
      if (p.contains("halting")) {
        const json& h = p.at("halting");
        get_if(h, "epsilon", c.halting.epsilon);
        get_if(h, "gate_gain", c.halting.gate_gain);
        get_if(h, "gate_bias", c.halting.gate_bias);
        get_if(h, "alpha_d", c.halting.alpha_d);
        get_if(h, "alpha_p", c.halting.alpha_p);
        get_if(h, "target_layer", c.halting.target_layer);
        get_if(h, "prior_std", c.halting.prior_std);
      }
      if (p.contains("ats")) {
        const json& a = p.at("ats");
        get_if(a, "ats_layers", c.ats.ats_layers);
        get_if(a, "max_tokens", c.ats.max_tokens);
        get_if(a, "layer_loss_weights", c.ats.layer_loss_weights);
        if (!a.contains("layer_loss_weights")) {
          c.ats.layer_loss_weights = AtsParams::default_weights(c.ats.ats_layers.size());
        }
      }
      if (p.contains("decision")) {
        const json& d = p.at("decision");
        get_if(d, "gumbel_temperature", c.decision.gumbel_temperature);
        get_if(d, "gammas", c.decision.gammas);
        get_if(d, "init_bias", c.decision.init_bias);
        get_if(d, "eval_seed", c.decision.eval_seed);
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string ModelConfig::to_json() const { return to_json_value(*this).dump(2); }

ModelConfig ModelConfig::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config is not valid JSON: ") + e.what());
  }
  return model_config_from_json(j);
}

ModelConfig ModelConfig::load(const std::string& path) { return from_json(read_text_file(path)); }

void ModelConfig::save(const std::string& path) const { write_text_file(path, to_json() + "\n"); }

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
  if (!out) throw ConfigError("short write to '" + path + "'");
}

}  // namespace slowvit
