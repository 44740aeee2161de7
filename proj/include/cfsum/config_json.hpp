#pragma once

#include <string>

#include <json.hpp>

#include "cfsum/data_io.hpp"
#include "cfsum/model.hpp"
#include "cfsum/training.hpp"

namespace cfsum {

// Strict JSON (de)serialization for config structs: parse-then-validate,
// unknown keys rejected with the offending key path (ConfigError).

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& doc, const std::string& path = "model");

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& doc, const std::string& path = "train");

nlohmann::json synth_config_to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const nlohmann::json& doc, const std::string& path = "synth");

// FNV-1a 64 over the canonical (sorted-key) dump, hex-encoded.
std::string config_hash(const nlohmann::json& doc);

}  // namespace cfsum
