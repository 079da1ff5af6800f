#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "pft/pipeline/config.hpp"
#include "pft/synthdata/dataset.hpp"

namespace pft {

/// Everything a run depends on. The seed is shared by data generation and
/// training.
struct RunConfig {
  DatasetSpec dataset;
  TrainConfig train;
  std::uint64_t seed = 0;

  void set_seed(std::uint64_t s);
  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);

/// Strict parse: unknown keys and wrongly typed values raise ConfigError
/// naming the offending path. Missing keys keep their defaults.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Git-style content hash (SHA-1 over "blob <size>\0" + canonical JSON) of
/// the run configuration, hex encoded.
std::string manifest_hash(const RunConfig& cfg);

/// SHA-1 of raw bytes, hex encoded.
std::string sha1_hex(std::string_view bytes);

}  // namespace pft
