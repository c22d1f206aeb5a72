// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <json.hpp>

#include "slowvit/config.hpp"

namespace slowvit {

using json = nlohmann::ordered_json;

json to_json_value(const ModelConfig& cfg);
ModelConfig model_config_from_json(const json& j);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace slowvit
