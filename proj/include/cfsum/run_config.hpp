#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "cfsum/data_io.hpp"
#include "cfsum/model.hpp"
#include "cfsum/training.hpp"

namespace cfsum {

// Where the samples come from: manifests on disk, or an inline synthetic
// dataset generated in memory.
struct DataConfig {
  std::optional<std::string> train_manifest;
  std::optional<std::string> val_manifest;
  std::optional<SynthConfig> synth;
};

struct EvalConfig {
  double threshold = 0.5;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  EvalConfig eval;
  std::string output_dir;

  void validate() const;
};

RunConfig run_config_from_json(const nlohmann::json& doc);
nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);

// Resolves the configured data source to in-memory samples. Relative manifest
// paths are resolved against base_dir.
std::vector<MultiModalSample> load_configured_split(const RunConfig& cfg,
                                                    const std::filesystem::path& base_dir,
                                                    const std::string& split);

}  // namespace cfsum
