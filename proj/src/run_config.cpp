#include "cfsum/run_config.hpp"

#include <fstream>
#include <set>

#include "cfsum/config_json.hpp"
#include "cfsum/errors.hpp"

namespace cfsum {

void RunConfig::validate() const {
  model.validate();
  train.validate();
  const bool has_manifest = data.train_manifest.has_value() || data.val_manifest.has_value();
  if (has_manifest && data.synth) {
    throw ConfigError("data: give either manifest paths or an inline synth block, not both");
  }
  if (!has_manifest && !data.synth) {
    throw ConfigError("data: needs train_manifest/val_manifest paths or a synth block");
  }
  if (data.synth) data.synth->validate();
  if (output_dir.empty()) throw ConfigError("output_dir: must not be empty");
}

RunConfig run_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("run config: expected a JSON object");
  static const std::set<std::string> kAllowed = {"model", "train", "data", "eval", "output_dir"};
  for (const auto& [key, _] : doc.items()) {
    if (!kAllowed.count(key)) throw ConfigError(key + ": unknown key");
  }
  RunConfig cfg;
  if (doc.contains("model")) cfg.model = model_config_from_json(doc.at("model"), "model");
  if (doc.contains("train")) cfg.train = train_config_from_json(doc.at("train"), "train");
  if (doc.contains("data")) {
    const nlohmann::json& data = doc.at("data");
    if (!data.is_object()) throw ConfigError("data: expected a JSON object");
    static const std::set<std::string> kDataKeys = {"train_manifest", "val_manifest", "synth"};
    for (const auto& [key, _] : data.items()) {
      if (!kDataKeys.count(key)) throw ConfigError("data." + key + ": unknown key");
    }
    if (data.contains("train_manifest")) {
      cfg.data.train_manifest = data.at("train_manifest").get<std::string>();
    }
    if (data.contains("val_manifest")) {
      cfg.data.val_manifest = data.at("val_manifest").get<std::string>();
    }
    if (data.contains("synth")) {
      cfg.data.synth = synth_config_from_json(data.at("synth"), "data.synth");
    }
  }
  if (doc.contains("eval")) {
    const nlohmann::json& eval = doc.at("eval");
    if (!eval.is_object()) throw ConfigError("eval: expected a JSON object");
    for (const auto& [key, _] : eval.items()) {
      if (key != "threshold") throw ConfigError("eval." + key + ": unknown key");
    }
    if (eval.contains("threshold")) cfg.eval.threshold = eval.at("threshold").get<double>();
  }
  if (doc.contains("output_dir")) cfg.output_dir = doc.at("output_dir").get<std::string>();
  return cfg;
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json doc;
  doc["model"] = model_config_to_json(cfg.model);
  doc["train"] = train_config_to_json(cfg.train);
  nlohmann::json data = nlohmann::json::object();
  if (cfg.data.train_manifest) data["train_manifest"] = *cfg.data.train_manifest;
  if (cfg.data.val_manifest) data["val_manifest"] = *cfg.data.val_manifest;
  if (cfg.data.synth) data["synth"] = synth_config_to_json(*cfg.data.synth);
  doc["data"] = data;
  doc["eval"] = {{"threshold", cfg.eval.threshold}};
  doc["output_dir"] = cfg.output_dir;
  return doc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  return run_config_from_json(doc);
}

std::vector<MultiModalSample> load_configured_split(const RunConfig& cfg,
                                                    const std::filesystem::path& base_dir,
                                                    const std::string& split) {
  if (cfg.data.synth) return synth_split(*cfg.data.synth, split);
  const std::optional<std::string>& manifest_path =
      split == "train" ? cfg.data.train_manifest : cfg.data.val_manifest;
  if (!manifest_path) return {};
  std::filesystem::path path(*manifest_path);
  if (path.is_relative()) path = base_dir / path;
  DatasetManifest manifest = load_manifest(path);
  // A manifest file may hold both splits or just its own; filter by tag.
  std::vector<MultiModalSample> samples = load_split(manifest, split);
  if (samples.empty()) {
    // Dedicated per-split manifests often tag every record "train"; fall back
    // to the whole file when the requested tag is absent.
    bool has_tag = false;
    for (const ManifestRecord& r : manifest.records) has_tag = has_tag || r.split == split;
    if (!has_tag) {
      for (const ManifestRecord& r : manifest.records) {
        samples.push_back(load_sample(manifest, r));
      }
    }
  }
  return samples;
}

}  // namespace cfsum
