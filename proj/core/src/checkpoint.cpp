// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "slowvit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json_io.hpp"
#include "slowvit/errors.hpp"

namespace slowvit {

namespace {

constexpr char kMagic[8] = {'S', 'L', 'O', 'W', 'V', 'I', 'T', 'C'};

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

}  // namespace

void save_checkpoint(const std::string& path, const VisionTransformer& model) {
  json header;
  header["format"] = "slowvit-checkpoint";
  header["version"] = kCheckpointVersion;
  header["config"] = to_json_value(model.config());
  header["checksum"] = std::to_string(model.parameters().checksum());
  json dir = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, m] : model.parameters().tensors()) {
    dir.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(m.size());
  }
  header["tensors"] = dir;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
  out.write(kMagic, sizeof(kMagic));
  const std::uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(len));
  for (const auto& [name, m] : model.parameters().tensors()) {
    // Column-major, as Eigen stores it.
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
  }
  if (!out) throw ConfigError("short write to checkpoint '" + path + "'");
}

VisionTransformer load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  char magic[sizeof(kMagic)] = {};
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw ConfigError("'" + path + "' is not a checkpoint");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kCheckpointVersion) {
    throw ConfigError("checkpoint version " + std::to_string(version) + " is not supported");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1u << 26)) throw ConfigError("corrupt checkpoint header in '" + path + "'");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("corrupt checkpoint header: ") + e.what());
  }
  const ModelConfig config = model_config_from_json(header.at("config"));
  Parameters params;
  for (const auto& t : header.at("tensors")) {
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
    if (!in) throw ConfigError("truncated checkpoint '" + path + "'");
    params[t.at("name").get<std::string>()] = std::move(m);
  }
  if (header.contains("checksum") && header.at("checksum").get<std::string>() != std::to_string(params.checksum())) {
    throw ConfigError("checkpoint checksum mismatch in '" + path + "'");
  }
  return VisionTransformer(config, std::move(params));
}

}  // namespace slowvit
