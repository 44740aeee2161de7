#include "cfsum/config_json.hpp"

#include <set>

#include "cfsum/errors.hpp"

namespace cfsum {

namespace {

void check_keys(const nlohmann::json& obj, const std::string& path,
                const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(path + ": expected a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError(path + "." + key + ": unknown key");
  }
}

template <typename T>
T fetch(const nlohmann::json& obj, const std::string& path, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + "." + key + ": " + e.what());
  }
}

}  // namespace

nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  nlohmann::json doc;
  doc["d_video"] = cfg.d_video;
  doc["d_audio"] = cfg.d_audio;
  doc["d_text"] = cfg.d_text;
  doc["d_model"] = cfg.d_model;
  doc["n_heads"] = cfg.n_heads;
  doc["ffn_hidden"] = cfg.ffn_hidden;
  doc["n_autoencoder_layers"] = cfg.n_autoencoder_layers;
  doc["use_layer_norm"] = cfg.use_layer_norm;
  doc["use_output_proj"] = cfg.use_output_proj;
  std::vector<std::string> modalities;
  for (Modality m : {Modality::kVideo, Modality::kAudio, Modality::kText}) {
    if (cfg.enabled(m)) modalities.push_back(to_string(m));
  }
  doc["enabled_modalities"] = modalities;
  doc["activation"] = cfg.activation;
  doc["w_tv_init"] = cfg.w_tv_init;
  doc["w_ta_init"] = cfg.w_ta_init;
  doc["interaction_weights_learnable"] = cfg.interaction_weights_learnable;
  doc["use_autoencoder"] = cfg.use_autoencoder;
  doc["use_fusion_module"] = cfg.use_fusion_module;
  doc["use_interaction_module"] = cfg.use_interaction_module;
  doc["seed"] = cfg.seed;
  return doc;
}

ModelConfig model_config_from_json(const nlohmann::json& doc, const std::string& path) {
  check_keys(doc, path,
             {"d_video", "d_audio", "d_text", "d_model", "n_heads", "ffn_hidden",
              "n_autoencoder_layers", "use_layer_norm", "use_output_proj", "enabled_modalities",
              "activation", "w_tv_init", "w_ta_init", "interaction_weights_learnable",
              "use_autoencoder", "use_fusion_module", "use_interaction_module", "seed"});
  ModelConfig cfg;
  cfg.d_video = fetch<std::size_t>(doc, path, "d_video", cfg.d_video);
  cfg.d_audio = fetch<std::size_t>(doc, path, "d_audio", cfg.d_audio);
  cfg.d_text = fetch<std::size_t>(doc, path, "d_text", cfg.d_text);
  cfg.d_model = fetch<std::size_t>(doc, path, "d_model", cfg.d_model);
  cfg.n_heads = fetch<std::size_t>(doc, path, "n_heads", cfg.n_heads);
  cfg.ffn_hidden = fetch<std::size_t>(doc, path, "ffn_hidden", cfg.ffn_hidden);
  cfg.n_autoencoder_layers =
      fetch<std::size_t>(doc, path, "n_autoencoder_layers", cfg.n_autoencoder_layers);
  cfg.use_layer_norm = fetch<bool>(doc, path, "use_layer_norm", cfg.use_layer_norm);
  cfg.use_output_proj = fetch<bool>(doc, path, "use_output_proj", cfg.use_output_proj);
  if (doc.contains("enabled_modalities")) {
    cfg.enabled_modalities.clear();
    for (const std::string& name :
         fetch<std::vector<std::string>>(doc, path, "enabled_modalities", {})) {
      if (name == "video") {
        cfg.enabled_modalities.insert(Modality::kVideo);
      } else if (name == "audio") {
        cfg.enabled_modalities.insert(Modality::kAudio);
      } else if (name == "text") {
        cfg.enabled_modalities.insert(Modality::kText);
      } else {
        throw ConfigError(path + ".enabled_modalities: unknown modality '" + name + "'");
      }
    }
  }
  cfg.activation = fetch<std::string>(doc, path, "activation", cfg.activation);
  cfg.w_tv_init = fetch<double>(doc, path, "w_tv_init", cfg.w_tv_init);
  cfg.w_ta_init = fetch<double>(doc, path, "w_ta_init", cfg.w_ta_init);
  cfg.interaction_weights_learnable =
      fetch<bool>(doc, path, "interaction_weights_learnable", cfg.interaction_weights_learnable);
  cfg.use_autoencoder = fetch<bool>(doc, path, "use_autoencoder", cfg.use_autoencoder);
  cfg.use_fusion_module = fetch<bool>(doc, path, "use_fusion_module", cfg.use_fusion_module);
  cfg.use_interaction_module =
      fetch<bool>(doc, path, "use_interaction_module", cfg.use_interaction_module);
  cfg.seed = fetch<std::uint64_t>(doc, path, "seed", cfg.seed);
  return cfg;
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  nlohmann::json doc;
  doc["learning_rate"] = cfg.learning_rate;
  doc["weight_decay"] = cfg.weight_decay;
  doc["beta1"] = cfg.beta1;
  doc["beta2"] = cfg.beta2;
  doc["eps"] = cfg.eps;
  doc["epochs"] = cfg.epochs;
  doc["seed"] = cfg.seed;
  doc["shuffle"] = cfg.shuffle;
  doc["coupled_l2"] = cfg.coupled_l2;
  doc["clip_norm"] = cfg.clip_norm;
  doc["eval_every"] = cfg.eval_every;
  doc["target_val_map"] = cfg.target_val_map;
  return doc;
}

TrainConfig train_config_from_json(const nlohmann::json& doc, const std::string& path) {
  check_keys(doc, path,
             {"learning_rate", "weight_decay", "beta1", "beta2", "eps", "epochs", "seed",
              "shuffle", "coupled_l2", "clip_norm", "eval_every", "target_val_map"});
  TrainConfig cfg;
  cfg.learning_rate = fetch<double>(doc, path, "learning_rate", cfg.learning_rate);
  cfg.weight_decay = fetch<double>(doc, path, "weight_decay", cfg.weight_decay);
  cfg.beta1 = fetch<double>(doc, path, "beta1", cfg.beta1);
  cfg.beta2 = fetch<double>(doc, path, "beta2", cfg.beta2);
  cfg.eps = fetch<double>(doc, path, "eps", cfg.eps);
  cfg.epochs = fetch<std::size_t>(doc, path, "epochs", cfg.epochs);
  cfg.seed = fetch<std::uint64_t>(doc, path, "seed", cfg.seed);
  cfg.shuffle = fetch<bool>(doc, path, "shuffle", cfg.shuffle);
  cfg.coupled_l2 = fetch<bool>(doc, path, "coupled_l2", cfg.coupled_l2);
  cfg.clip_norm = fetch<double>(doc, path, "clip_norm", cfg.clip_norm);
  cfg.eval_every = fetch<std::size_t>(doc, path, "eval_every", cfg.eval_every);
  cfg.target_val_map = fetch<double>(doc, path, "target_val_map", cfg.target_val_map);
  return cfg;
}

nlohmann::json synth_config_to_json(const SynthConfig& cfg) {
  nlohmann::json doc;
  doc["n_samples"] = cfg.n_samples;
  doc["val_fraction"] = cfg.val_fraction;
  doc["n_concepts"] = cfg.n_concepts;
  doc["d_video"] = cfg.d_video;
  doc["d_audio"] = cfg.d_audio;
  doc["d_text"] = cfg.d_text;
  doc["min_clips"] = cfg.min_clips;
  doc["max_clips"] = cfg.max_clips;
  doc["min_tokens"] = cfg.min_tokens;
  doc["max_tokens"] = cfg.max_tokens;
  doc["noise_sigma"] = cfg.noise_sigma;
  doc["audio_informative_fraction"] = cfg.audio_informative_fraction;
  doc["seed"] = cfg.seed;
  return doc;
}

SynthConfig synth_config_from_json(const nlohmann::json& doc, const std::string& path) {
  check_keys(doc, path,
             {"n_samples", "val_fraction", "n_concepts", "d_video", "d_audio", "d_text",
              "min_clips", "max_clips", "min_tokens", "max_tokens", "noise_sigma",
              "audio_informative_fraction", "seed"});
  SynthConfig cfg;
  cfg.n_samples = fetch<std::size_t>(doc, path, "n_samples", cfg.n_samples);
  cfg.val_fraction = fetch<double>(doc, path, "val_fraction", cfg.val_fraction);
  cfg.n_concepts = fetch<std::size_t>(doc, path, "n_concepts", cfg.n_concepts);
  cfg.d_video = fetch<std::size_t>(doc, path, "d_video", cfg.d_video);
  cfg.d_audio = fetch<std::size_t>(doc, path, "d_audio", cfg.d_audio);
  cfg.d_text = fetch<std::size_t>(doc, path, "d_text", cfg.d_text);
  cfg.min_clips = fetch<std::size_t>(doc, path, "min_clips", cfg.min_clips);
  cfg.max_clips = fetch<std::size_t>(doc, path, "max_clips", cfg.max_clips);
  cfg.min_tokens = fetch<std::size_t>(doc, path, "min_tokens", cfg.min_tokens);
  cfg.max_tokens = fetch<std::size_t>(doc, path, "max_tokens", cfg.max_tokens);
  cfg.noise_sigma = fetch<double>(doc, path, "noise_sigma", cfg.noise_sigma);
  cfg.audio_informative_fraction =
      fetch<double>(doc, path, "audio_informative_fraction", cfg.audio_informative_fraction);
  cfg.seed = fetch<std::uint64_t>(doc, path, "seed", cfg.seed);
  return cfg;
}

std::string config_hash(const nlohmann::json& doc) {
  const std::string dump = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace cfsum
