#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cfsum/model.hpp"
#include "cfsum/sample.hpp"
#include "cfsum/tensor.hpp"

namespace cfsum {

// --- Tensor container file ---------------------------------------------------
// Little-endian throughout: magic "CFST", u8 version = 1, u32 entry count;
// per entry: u16 name length, name bytes, u8 dtype, u8 ndim, ndim x u64 dims,
// row-major payload. dtype 2 = float64 tensor; dtype 1 = raw bytes (used for
// the checkpoint config header). Corruption raises TensorFileError with a
// distinct kind per failure.

void write_tensor_file(const std::filesystem::path& path,
                       const std::map<std::string, Tensor>& entries);
std::map<std::string, Tensor> read_tensor_file(const std::filesystem::path& path);

struct ContainerEntry {
  std::string name;
  Tensor tensor;                    // defined iff dtype 2
  std::vector<std::uint8_t> bytes;  // used iff dtype 1
  bool is_bytes = false;
};

void write_container(const std::filesystem::path& path, const std::vector<ContainerEntry>& entries);
std::vector<ContainerEntry> read_container(const std::filesystem::path& path);

// --- Checkpoints --------------------------------------------------------------
// One bytes entry "config" holding the model config JSON, then one tensor
// entry per state tensor (parameters plus frozen interaction weights).

void save_checkpoint(const std::filesystem::path& path, const CFSumModel& model);
CFSumModel load_checkpoint(const std::filesystem::path& path);

// --- Dataset manifests ----------------------------------------------------------
// JSON-lines, one record per line. Feature paths are resolved relative to the
// manifest's directory. Labels are max-normalized to [0, 1] per sample at
// load; an all-zero label vector stays zero.

struct ManifestRecord {
  std::string sample_id;
  std::string video_path;
  std::optional<std::string> audio_path;
  std::optional<std::string> text_path;
  std::vector<double> labels;
  std::string split = "train";  // "train" or "val"
};

struct DatasetManifest {
  std::filesystem::path base_dir;
  std::vector<ManifestRecord> records;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
MultiModalSample load_sample(const DatasetManifest& manifest, const ManifestRecord& record);
std::vector<MultiModalSample> load_split(const DatasetManifest& manifest,
                                         const std::string& split);

std::vector<double> max_normalize_labels(std::vector<double> labels);

// --- Synthetic planted-signal data ----------------------------------------------
// K orthonormal concept vectors per modality; each clip carries one concept's
// video embedding plus noise, the query tokens carry the queried concepts'
// text embeddings plus noise, and a clip is salient iff its concept is
// queried. Informative audio (concept embedding plus noise) appears on a
// rho-fraction of the salient clips; all other clips get pure noise.

struct SynthConfig {
  std::size_t n_samples = 500;
  double val_fraction = 0.2;
  std::size_t n_concepts = 6;  // K
  std::size_t d_video = 32;
  std::size_t d_audio = 24;
  std::size_t d_text = 16;
  std::size_t min_clips = 6;
  std::size_t max_clips = 12;
  std::size_t min_tokens = 1;
  std::size_t max_tokens = 3;
  double noise_sigma = 0.3;
  double audio_informative_fraction = 1.0;  // rho
  std::uint64_t seed = 0;

  std::size_t n_val() const;
  void validate() const;
};

// Per-modality concept embeddings, rows orthonormal.
struct ConceptBank {
  Tensor video;  // K x d_video
  Tensor audio;  // K x d_audio
  Tensor text;   // K x d_text
};

ConceptBank synth_concepts(const SynthConfig& cfg);

// The concept assignments behind one generated sample, exposed so tests can
// run oracle classifiers against the generator.
struct SynthSampleInfo {
  std::vector<std::size_t> clip_concepts;
  std::vector<std::size_t> query_concepts;
};

MultiModalSample synth_sample(const SynthConfig& cfg, const ConceptBank& bank, std::size_t index,
                              SynthSampleInfo* info = nullptr);

// All samples, train split first (n_samples - n_val), then val.
std::vector<MultiModalSample> synth_samples(const SynthConfig& cfg);
std::vector<MultiModalSample> synth_split(const SynthConfig& cfg, const std::string& split);

struct SynthOutput {
  std::filesystem::path train_manifest;
  std::filesystem::path val_manifest;
  std::size_t files_written = 0;
};

// Writes <out>/train and <out>/val, each with manifest.jsonl plus one feature
// file per modality per sample. Byte-identical for a fixed config.
SynthOutput synth_generate(const SynthConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace cfsum
