#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cfsum/config_json.hpp"
#include "cfsum/data_io.hpp"
#include "cfsum/errors.hpp"
#include "cfsum/evaluation.hpp"
#include "cfsum/gradcheck.hpp"
#include "cfsum/model.hpp"
#include "cfsum/run_config.hpp"
#include "cfsum/training.hpp"

namespace fs = std::filesystem;

namespace {

enum class LogLevel { kQuiet = 0, kInfo = 1, kDebug = 2 };

LogLevel log_level() {
  const char* env = std::getenv("CFSUM_LOG");
  if (!env) return LogLevel::kInfo;
  const std::string value(env);
  if (value == "quiet") return LogLevel::kQuiet;
  if (value == "debug") return LogLevel::kDebug;
  return LogLevel::kInfo;
}

void log_info(const std::string& message) {
  if (log_level() >= LogLevel::kInfo) std::cerr << "[cfsum] " << message << "\n";
}

void log_debug(const std::string& message) {
  if (log_level() >= LogLevel::kDebug) std::cerr << "[cfsum] " << message << "\n";
}

nlohmann::json parse_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw cfsum::ConfigError("cannot open " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw cfsum::ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  return doc;
}

// --- synth -------------------------------------------------------------------

int cmd_synth(const std::string& config_path, const std::string& out, bool force) {
  cfsum::SynthConfig cfg =
      cfsum::synth_config_from_json(parse_json_file(config_path), "synth");
  cfg.validate();
  const fs::path out_dir(out);
  if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !force) {
    throw cfsum::ConfigError("output directory " + out_dir.string() +
                             " is not empty; pass --force to overwrite");
  }
  cfsum::SynthOutput result = cfsum::synth_generate(cfg, out_dir);
  std::cout << result.files_written << " files written under " << out_dir.string() << "\n";
  return 0;
}

// --- train -------------------------------------------------------------------

struct AblationFlags {
  std::string modalities;  // "", "v", "va", "vt", "vat"
  bool no_fusion = false;
  bool no_interaction = false;
  bool no_autoencoder = false;

  void apply(cfsum::ModelConfig& cfg) const {
    if (!modalities.empty()) {
      std::set<cfsum::Modality> set;
      for (char c : modalities) {
        switch (c) {
          case 'v': set.insert(cfsum::Modality::kVideo); break;
          case 'a': set.insert(cfsum::Modality::kAudio); break;
          case 't': set.insert(cfsum::Modality::kText); break;
          default:
            throw cfsum::ConfigError(std::string("--modalities: unknown modality '") + c + "'");
        }
      }
      cfg.enabled_modalities = set;
    }
    if (no_fusion) cfg.use_fusion_module = false;
    if (no_interaction) cfg.use_interaction_module = false;
    if (no_autoencoder) cfg.use_autoencoder = false;
  }
};

int cmd_train(const std::string& config_path, const AblationFlags& ablation,
              const std::string& out_override) {
  cfsum::RunConfig cfg = cfsum::load_run_config(config_path);
  ablation.apply(cfg.model);
  if (!out_override.empty()) cfg.output_dir = out_override;
  cfg.validate();

  const fs::path base_dir = fs::path(config_path).parent_path();
  const fs::path out_dir(cfg.output_dir);
  fs::create_directories(out_dir);

  std::vector<cfsum::MultiModalSample> train_set =
      cfsum::load_configured_split(cfg, base_dir, "train");
  std::vector<cfsum::MultiModalSample> val_set =
      cfsum::load_configured_split(cfg, base_dir, "val");
  log_info("loaded " + std::to_string(train_set.size()) + " train / " +
           std::to_string(val_set.size()) + " val samples");

  cfsum::CFSumModel model = cfsum::init_model(cfg.model);
  log_info("model has " + std::to_string(cfsum::count_params(model)) + " parameters");

  std::ofstream log(out_dir / "log.jsonl", std::ios::trunc);
  if (!log) throw cfsum::Error("cannot write log in " + out_dir.string());
  const nlohmann::json effective = cfsum::run_config_to_json(cfg);
  log << nlohmann::json({{"config_hash", cfsum::config_hash(effective)},
                         {"seed", cfg.train.seed}})
             .dump()
      << "\n";

  auto on_epoch = [&](const cfsum::EpochStats& stats) {
    nlohmann::json line;
    line["epoch"] = stats.epoch;
    line["train_loss"] = stats.train_loss;
    line["val_map"] = stats.val_map ? nlohmann::json(*stats.val_map) : nlohmann::json(nullptr);
    line["val_hit1"] = stats.val_hit1 ? nlohmann::json(*stats.val_hit1) : nlohmann::json(nullptr);
    log << line.dump() << "\n";
    log_debug("epoch " + std::to_string(stats.epoch) + " loss " +
              std::to_string(stats.train_loss));
  };

  cfsum::TrainResult result = cfsum::train(train_set, model, cfg.train,
                                           val_set.empty() ? nullptr : &val_set,
                                           cfg.eval.threshold, on_epoch);
  log.close();

  const fs::path ckpt = out_dir / "checkpoint.cfst";
  cfsum::save_checkpoint(ckpt, model);
  std::cout << "trained " << result.history.size() << " epochs; checkpoint at " << ckpt.string()
            << "\n";
  if (!result.history.empty()) {
    const cfsum::EpochStats& last = result.history.back();
    std::cout << "final train loss " << last.train_loss;
    if (last.val_map) std::cout << ", val mAP " << *last.val_map;
    std::cout << "\n";
  }
  return 0;
}

// --- eval --------------------------------------------------------------------

int cmd_eval(const std::string& config_path, const std::string& checkpoint_path) {
  cfsum::RunConfig cfg = cfsum::load_run_config(config_path);
  cfg.validate();
  cfsum::CFSumModel model = cfsum::load_checkpoint(checkpoint_path);

  const fs::path base_dir = fs::path(config_path).parent_path();
  std::vector<cfsum::MultiModalSample> val_set =
      cfsum::load_configured_split(cfg, base_dir, "val");
  if (val_set.empty()) throw cfsum::ConfigError("eval: no validation data configured");

  cfsum::MetricsReport report = cfsum::evaluate(model, val_set, cfg.eval.threshold);
  std::cout << cfsum::report_to_table(report);

  const fs::path out_dir(cfg.output_dir);
  fs::create_directories(out_dir);
  std::ofstream out(out_dir / "report.json", std::ios::trunc);
  out << cfsum::report_to_json(report) << "\n";
  log_info("report written to " + (out_dir / "report.json").string());
  return 0;
}

// --- predict -----------------------------------------------------------------

int cmd_predict(const std::string& checkpoint_path, const std::string& sample_path,
                const std::string& id) {
  cfsum::CFSumModel model = cfsum::load_checkpoint(checkpoint_path);
  cfsum::DatasetManifest manifest = cfsum::load_manifest(sample_path);
  if (manifest.records.empty()) {
    throw cfsum::ConfigError(sample_path + ": no records found");
  }
  const cfsum::ManifestRecord* chosen = nullptr;
  if (id.empty()) {
    chosen = &manifest.records.front();
  } else {
    for (const cfsum::ManifestRecord& r : manifest.records) {
      if (r.sample_id == id) {
        chosen = &r;
        break;
      }
    }
    if (!chosen) throw cfsum::ConfigError(sample_path + ": no sample with id '" + id + "'");
  }
  cfsum::MultiModalSample sample = cfsum::load_sample(manifest, *chosen);
  cfsum::Tape tape;
  cfsum::SaliencyPrediction pred = cfsum::cfsum_forward(tape, sample, model);
  const std::vector<double> scores = pred.flat();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    std::printf("%zu %.17g%s\n", i, scores[i], pred.valid[i] ? "" : " (padded)");
  }
  return 0;
}

// --- gradcheck -----------------------------------------------------------------

int cmd_gradcheck(std::uint64_t seed, double tolerance) {
  cfsum::gradcheck::Report report = cfsum::gradcheck::run_suite(seed, tolerance);
  for (const cfsum::gradcheck::CheckResult& check : report.checks) {
    std::printf("%-40s %10.3e %s\n", check.name.c_str(), check.max_rel_err,
                check.pass ? "ok" : "FAIL");
  }
  std::printf("%zu checks, worst rel. error %.3e, tolerance %.1e: %s\n", report.checks.size(),
              report.worst(), report.tolerance, report.all_pass ? "PASS" : "FAIL");
  return report.all_pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-modal clip-saliency model: data synthesis, training, evaluation"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint_path, sample_path, sample_id;
  bool force = false;
  AblationFlags ablation;
  std::uint64_t seed = 0;
  double tolerance = 1e-4;

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--config", config_path, "SynthConfig JSON file")->required();
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_flag("--force", force, "Overwrite a non-empty output directory");

  CLI::App* train = app.add_subcommand("train", "Train a model from a run config");
  train->add_option("--config", config_path, "Run config JSON file")->required();
  train->add_option("--out", out_dir, "Override output_dir");
  train->add_option("--modalities", ablation.modalities,
                    "Restrict input modalities (v, va, vt, vat)");
  train->add_flag("--no-fusion-module", ablation.no_fusion, "Ablate the modal fusion module");
  train->add_flag("--no-interaction-module", ablation.no_interaction,
                  "Ablate the feature interaction module");
  train->add_flag("--no-autoencoder", ablation.no_autoencoder,
                  "Ablate the autoencoder self-attention stage");

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--config", config_path, "Run config JSON file")->required();
  eval->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();

  CLI::App* predict = app.add_subcommand("predict", "Print per-clip scores for one sample");
  predict->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  predict->add_option("--sample", sample_path, "Manifest or single-record JSON-lines file")
      ->required();
  predict->add_option("--id", sample_id, "Sample id to pick from the file");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Run the finite-difference suite");
  gradcheck->add_option("--seed", seed, "Seed for the random instances");
  gradcheck->add_option("--tolerance", tolerance, "Max allowed relative error");

  try {
    app.parse(argc, argv);
    if (synth->parsed()) return cmd_synth(config_path, out_dir, force);
    if (train->parsed()) return cmd_train(config_path, ablation, out_dir);
    if (eval->parsed()) return cmd_eval(config_path, checkpoint_path);
    if (predict->parsed()) return cmd_predict(checkpoint_path, sample_path, sample_id);
    if (gradcheck->parsed()) return cmd_gradcheck(seed, tolerance);
    return 2;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const cfsum::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const cfsum::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
