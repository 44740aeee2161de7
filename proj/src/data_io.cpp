#include "cfsum/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cfsum/config_json.hpp"
#include "cfsum/errors.hpp"
#include "cfsum/rng.hpp"

namespace cfsum {

namespace {

constexpr char kMagic[4] = {'C', 'F', 'S', 'T'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kDtypeBytes = 1;
constexpr std::uint8_t kDtypeF64 = 2;

void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

void put_u16(std::string& out, std::uint16_t v) {
  for (int i = 0; i < 2; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u64(out, bits);
}

// Sequential reader over the whole file image; throws kTruncated with
// context when data runs out.
struct Reader {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos = 0;
  std::string context = "header";

  void need(std::size_t n) {
    if (pos + n > size) {
      throw TensorFileError(TensorFileError::Kind::kTruncated,
                            "tensor file truncated while reading " + context + " (need " +
                                std::to_string(n) + " bytes at offset " + std::to_string(pos) +
                                " of " + std::to_string(size) + ")");
    }
  }

  std::uint8_t u8() {
    need(1);
    return data[pos++];
  }

  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(data[pos + i]) << (8 * i);
    pos += 2;
    return v;
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }

  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string out(reinterpret_cast<const char*>(data + pos), n);
    pos += n;
    return out;
  }
};

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw TensorFileError(TensorFileError::Kind::kIo, "cannot open " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw TensorFileError(TensorFileError::Kind::kIo, "cannot open " + path.string() +
                                                          " for writing");
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw TensorFileError(TensorFileError::Kind::kIo, "short write to " + path.string());
  }
}

}  // namespace

void write_container(const std::filesystem::path& path,
                     const std::vector<ContainerEntry>& entries) {
  std::set<std::string> seen;
  std::string out;
  out.append(kMagic, 4);
  put_u8(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const ContainerEntry& e : entries) {
    if (e.name.empty()) throw ContractError("tensor file: entry names must be nonempty");
    if (e.name.size() > 0xffff) throw ContractError("tensor file: entry name too long");
    if (!seen.insert(e.name).second) {
      throw ContractError("tensor file: duplicate entry name '" + e.name + "'");
    }
    put_u16(out, static_cast<std::uint16_t>(e.name.size()));
    out.append(e.name);
    if (e.is_bytes) {
      put_u8(out, kDtypeBytes);
      put_u8(out, 1);
      put_u64(out, e.bytes.size());
      out.append(reinterpret_cast<const char*>(e.bytes.data()), e.bytes.size());
    } else {
      if (!e.tensor.defined()) throw ContractError("tensor file: entry '" + e.name + "' undefined");
      put_u8(out, kDtypeF64);
      const auto& shape = e.tensor.shape();
      put_u8(out, static_cast<std::uint8_t>(shape.size()));
      for (std::size_t d : shape) put_u64(out, d);
      for (double v : e.tensor.values()) put_f64(out, v);
    }
  }
  write_file_bytes(path, out);
}

std::vector<ContainerEntry> read_container(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  Reader r{reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()};

  r.context = "magic";
  const std::string magic = r.bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw TensorFileError(TensorFileError::Kind::kBadMagic,
                          path.string() + ": bad magic, not a tensor container");
  }
  r.context = "version";
  const std::uint8_t version = r.u8();
  if (version != kVersion) {
    throw TensorFileError(TensorFileError::Kind::kBadVersion,
                          path.string() + ": unsupported version " + std::to_string(version));
  }
  r.context = "entry count";
  const std::uint32_t count = r.u32();

  std::vector<ContainerEntry> entries;
  std::set<std::string> seen;
  entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    r.context = "entry " + std::to_string(i) + " header";
    const std::uint16_t name_len = r.u16();
    const std::string name = r.bytes(name_len);
    r.context = "entry '" + name + "'";
    if (!seen.insert(name).second) {
      throw TensorFileError(TensorFileError::Kind::kMalformed,
                            path.string() + ": duplicate entry name '" + name + "'");
    }
    const std::uint8_t dtype = r.u8();
    ContainerEntry entry;
    entry.name = name;
    if (dtype == kDtypeBytes) {
      entry.is_bytes = true;
      const std::uint8_t ndim = r.u8();
      if (ndim != 1) {
        throw TensorFileError(TensorFileError::Kind::kMalformed,
                              path.string() + ": bytes entry '" + name + "' must have ndim 1");
      }
      const std::uint64_t len = r.u64();
      r.context = "entry '" + name + "' payload";
      const std::string payload = r.bytes(len);
      entry.bytes.assign(payload.begin(), payload.end());
    } else if (dtype == kDtypeF64) {
      const std::uint8_t ndim = r.u8();
      std::vector<std::size_t> shape(ndim);
      std::size_t total = 1;
      for (std::uint8_t d = 0; d < ndim; ++d) {
        shape[d] = static_cast<std::size_t>(r.u64());
        if (shape[d] == 0) {
          throw TensorFileError(TensorFileError::Kind::kMalformed,
                                path.string() + ": entry '" + name + "' has a zero dimension");
        }
        total *= shape[d];
      }
      r.context = "entry '" + name + "' payload";
      std::vector<double> values(total);
      for (std::size_t j = 0; j < total; ++j) values[j] = r.f64();
      entry.tensor = Tensor(std::move(shape), std::move(values));
    } else {
      throw TensorFileError(TensorFileError::Kind::kBadDtype,
                            path.string() + ": entry '" + name + "' has unsupported dtype " +
                                std::to_string(dtype));
    }
    entries.push_back(std::move(entry));
  }
  if (r.pos != r.size) {
    throw TensorFileError(TensorFileError::Kind::kMalformed,
                          path.string() + ": " + std::to_string(r.size - r.pos) +
                              " trailing bytes after the last entry");
  }
  return entries;
}

void write_tensor_file(const std::filesystem::path& path,
                       const std::map<std::string, Tensor>& entries) {
  std::vector<ContainerEntry> out;
  out.reserve(entries.size());
  for (const auto& [name, tensor] : entries) {
    out.push_back(ContainerEntry{name, tensor, {}, false});
  }
  write_container(path, out);
}

std::map<std::string, Tensor> read_tensor_file(const std::filesystem::path& path) {
  std::map<std::string, Tensor> out;
  for (ContainerEntry& e : read_container(path)) {
    if (e.is_bytes) {
      throw TensorFileError(TensorFileError::Kind::kBadDtype,
                            path.string() + ": entry '" + e.name +
                                "' is not a float64 tensor");
    }
    out.emplace(std::move(e.name), std::move(e.tensor));
  }
  return out;
}

// --- Checkpoints ---------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const CFSumModel& model) {
  std::vector<ContainerEntry> entries;
  const std::string config = model_config_to_json(model.config).dump();
  ContainerEntry header;
  header.name = "config";
  header.is_bytes = true;
  header.bytes.assign(config.begin(), config.end());
  entries.push_back(std::move(header));
  for (const ParamInfo& p : model.state_tensors()) {
    entries.push_back(ContainerEntry{p.name, p.tensor, {}, false});
  }
  write_container(path, entries);
}

CFSumModel load_checkpoint(const std::filesystem::path& path) {
  std::vector<ContainerEntry> entries = read_container(path);
  if (entries.empty() || !entries.front().is_bytes || entries.front().name != "config") {
    throw TensorFileError(TensorFileError::Kind::kMalformed,
                          path.string() + ": missing config header entry");
  }
  nlohmann::json config_doc;
  try {
    config_doc = nlohmann::json::parse(
        std::string(entries.front().bytes.begin(), entries.front().bytes.end()));
  } catch (const nlohmann::json::exception& e) {
    throw TensorFileError(TensorFileError::Kind::kMalformed,
                          path.string() + ": config header is not valid JSON: " + e.what());
  }
  CFSumModel model = init_model(model_config_from_json(config_doc, "checkpoint config"));

  std::map<std::string, Tensor> stored;
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (entries[i].is_bytes) {
      throw TensorFileError(TensorFileError::Kind::kMalformed,
                            path.string() + ": unexpected bytes entry '" + entries[i].name + "'");
    }
    stored.emplace(entries[i].name, entries[i].tensor);
  }
  for (const ParamInfo& p : model.state_tensors()) {
    auto it = stored.find(p.name);
    if (it == stored.end()) {
      throw TensorFileError(TensorFileError::Kind::kMalformed,
                            path.string() + ": checkpoint is missing tensor '" + p.name + "'");
    }
    if (it->second.shape() != p.tensor.shape()) {
      throw TensorFileError(TensorFileError::Kind::kMalformed,
                            path.string() + ": tensor '" + p.name + "' has shape " +
                                shape_str(it->second.shape()) + ", expected " +
                                shape_str(p.tensor.shape()));
    }
    Tensor target = p.tensor;
    target.mutable_values() = it->second.values();
    stored.erase(it);
  }
  if (!stored.empty()) {
    throw TensorFileError(TensorFileError::Kind::kMalformed,
                          path.string() + ": checkpoint has unknown tensor '" +
                              stored.begin()->first + "'");
  }
  return model;
}

// --- Manifests -------------------------------------------------------------------

namespace {

ManifestRecord parse_record(const nlohmann::json& doc, const std::string& where) {
  if (!doc.is_object()) throw ConfigError(where + ": manifest record must be a JSON object");
  static const std::set<std::string> kAllowed = {"sample_id", "video_path", "audio_path",
                                                 "text_path", "labels",     "split"};
  for (const auto& [key, _] : doc.items()) {
    if (!kAllowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
  ManifestRecord record;
  try {
    record.sample_id = doc.at("sample_id").get<std::string>();
    record.video_path = doc.at("video_path").get<std::string>();
    if (doc.contains("audio_path") && !doc["audio_path"].is_null()) {
      record.audio_path = doc["audio_path"].get<std::string>();
    }
    if (doc.contains("text_path") && !doc["text_path"].is_null()) {
      record.text_path = doc["text_path"].get<std::string>();
    }
    record.labels = doc.at("labels").get<std::vector<double>>();
    record.split = doc.value("split", std::string("train"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
  if (record.split != "train" && record.split != "val") {
    throw ConfigError(where + ": split must be 'train' or 'val', got '" + record.split + "'");
  }
  return record;
}

}  // namespace

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw TensorFileError(TensorFileError::Kind::kIo, "cannot open manifest " + path.string());
  }
  DatasetManifest manifest;
  manifest.base_dir = path.parent_path();
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where + ": invalid JSON: " + e.what());
    }
    ManifestRecord record = parse_record(doc, where);
    if (!ids.insert(record.sample_id).second) {
      throw ContractError(where + ": duplicate sample_id '" + record.sample_id + "'");
    }
    manifest.records.push_back(std::move(record));
  }
  return manifest;
}

std::vector<double> max_normalize_labels(std::vector<double> labels) {
  double max_label = 0.0;
  for (double v : labels) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ContractError("labels must be finite and nonnegative for max-normalization");
    }
    max_label = std::max(max_label, v);
  }
  if (max_label > 0.0) {
    for (double& v : labels) v /= max_label;
  }
  return labels;
}

namespace {

FeatureSequence load_feature_file(const std::filesystem::path& base,
                                  const std::string& rel_path, Modality modality) {
  std::filesystem::path path(rel_path);
  if (path.is_relative()) path = base / path;
  std::map<std::string, Tensor> entries = read_tensor_file(path);
  auto it = entries.find("features");
  if (it == entries.end()) {
    throw TensorFileError(TensorFileError::Kind::kMalformed,
                          path.string() + ": missing 'features' entry");
  }
  if (it->second.ndim() != 2) {
    throw ShapeError(path.string() + ": features must be 2-d, got " +
                     shape_str(it->second.shape()));
  }
  FeatureSequence seq;
  seq.modality = modality;
  seq.features = it->second;
  auto mask_it = entries.find("mask");
  if (mask_it != entries.end()) {
    if (mask_it->second.size() != seq.length()) {
      throw ShapeError(path.string() + ": mask entry does not match feature length");
    }
    seq.mask.valid.resize(seq.length());
    for (std::size_t i = 0; i < seq.length(); ++i) {
      seq.mask.valid[i] = mask_it->second.values()[i] != 0.0;
    }
  } else {
    seq.mask = PaddingMask::all_valid(seq.length());
  }
  return seq;
}

}  // namespace

MultiModalSample load_sample(const DatasetManifest& manifest, const ManifestRecord& record) {
  MultiModalSample sample;
  sample.sample_id = record.sample_id;
  sample.video = load_feature_file(manifest.base_dir, record.video_path, Modality::kVideo);
  if (record.audio_path) {
    sample.audio = load_feature_file(manifest.base_dir, *record.audio_path, Modality::kAudio);
  }
  if (record.text_path) {
    sample.text = load_feature_file(manifest.base_dir, *record.text_path, Modality::kText);
  }
  if (record.labels.size() != sample.video.length()) {
    throw ShapeError("sample " + record.sample_id + ": " + std::to_string(record.labels.size()) +
                     " labels for " + std::to_string(sample.video.length()) + " clips");
  }
  sample.saliency = max_normalize_labels(record.labels);
  sample.validate();
  return sample;
}

std::vector<MultiModalSample> load_split(const DatasetManifest& manifest,
                                         const std::string& split) {
  std::vector<MultiModalSample> out;
  for (const ManifestRecord& record : manifest.records) {
    if (record.split == split) out.push_back(load_sample(manifest, record));
  }
  return out;
}

// --- Synthetic data ----------------------------------------------------------------

std::size_t SynthConfig::n_val() const {
  return static_cast<std::size_t>(std::llround(static_cast<double>(n_samples) * val_fraction));
}

void SynthConfig::validate() const {
  if (n_samples == 0) throw ConfigError("synth config: n_samples must be positive");
  if (val_fraction < 0.0 || val_fraction >= 1.0) {
    throw ConfigError("synth config: val_fraction must lie in [0, 1)");
  }
  if (n_val() >= n_samples) throw ConfigError("synth config: no training samples left");
  if (n_concepts < 2) throw ConfigError("synth config: need at least 2 concepts");
  if (d_video < n_concepts || d_audio < n_concepts || d_text < n_concepts) {
    throw ConfigError("synth config: every feature dim must be >= n_concepts to build an "
                      "orthonormal concept set");
  }
  if (min_clips == 0 || min_clips > max_clips) {
    throw ConfigError("synth config: invalid clip-count range");
  }
  if (min_tokens == 0 || min_tokens > max_tokens) {
    throw ConfigError("synth config: invalid token-count range");
  }
  if (noise_sigma < 0.0) throw ConfigError("synth config: noise_sigma must be >= 0");
  if (audio_informative_fraction < 0.0 || audio_informative_fraction > 1.0) {
    throw ConfigError("synth config: audio_informative_fraction must lie in [0, 1]");
  }
}

namespace {

// K orthonormal rows in R^d via Gram-Schmidt over gaussian draws.
Tensor orthonormal_rows(Rng& rng, std::size_t k, std::size_t d) {
  std::vector<std::vector<double>> rows;
  rows.reserve(k);
  while (rows.size() < k) {
    std::vector<double> v(d);
    for (double& x : v) x = rng.gaussian();
    for (const auto& u : rows) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += v[i] * u[i];
      for (std::size_t i = 0; i < d; ++i) v[i] -= dot * u[i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-8) continue;  // essentially impossible; redraw
    for (double& x : v) x /= norm;
    rows.push_back(std::move(v));
  }
  std::vector<double> flat;
  flat.reserve(k * d);
  for (const auto& row : rows) flat.insert(flat.end(), row.begin(), row.end());
  return Tensor({k, d}, std::move(flat));
}

}  // namespace

ConceptBank synth_concepts(const SynthConfig& cfg) {
  cfg.validate();
  ConceptBank bank;
  Rng rv = Rng::keyed(cfg.seed, "concepts.video");
  Rng ra = Rng::keyed(cfg.seed, "concepts.audio");
  Rng rt = Rng::keyed(cfg.seed, "concepts.text");
  bank.video = orthonormal_rows(rv, cfg.n_concepts, cfg.d_video);
  bank.audio = orthonormal_rows(ra, cfg.n_concepts, cfg.d_audio);
  bank.text = orthonormal_rows(rt, cfg.n_concepts, cfg.d_text);
  return bank;
}

MultiModalSample synth_sample(const SynthConfig& cfg, const ConceptBank& bank, std::size_t index,
                              SynthSampleInfo* info) {
  Rng rng = Rng::keyed(cfg.seed, /*a=*/index + 1);
  const std::size_t k = cfg.n_concepts;
  const std::size_t n_c = cfg.min_clips + rng.uniform_index(cfg.max_clips - cfg.min_clips + 1);
  std::size_t n_t = cfg.min_tokens + rng.uniform_index(cfg.max_tokens - cfg.min_tokens + 1);
  n_t = std::min(n_t, k);

  std::vector<std::size_t> concept_order(k);
  std::iota(concept_order.begin(), concept_order.end(), std::size_t{0});
  rng.shuffle(concept_order);
  std::vector<std::size_t> query(concept_order.begin(),
                                 concept_order.begin() + static_cast<std::ptrdiff_t>(n_t));
  std::set<std::size_t> query_set(query.begin(), query.end());

  std::vector<double> video_values(n_c * cfg.d_video);
  std::vector<double> audio_values(n_c * cfg.d_audio);
  std::vector<double> labels(n_c);
  std::vector<std::size_t> clip_concepts(n_c);
  for (std::size_t i = 0; i < n_c; ++i) {
    const std::size_t concept_id = rng.uniform_index(k);
    clip_concepts[i] = concept_id;
    const bool salient = query_set.count(concept_id) > 0;
    labels[i] = salient ? 1.0 : 0.0;
    for (std::size_t j = 0; j < cfg.d_video; ++j) {
      video_values[i * cfg.d_video + j] =
          bank.video.at(concept_id, j) + rng.gaussian(cfg.noise_sigma);
    }
    const bool informative_audio =
        salient && rng.uniform() < cfg.audio_informative_fraction;
    for (std::size_t j = 0; j < cfg.d_audio; ++j) {
      const double base = informative_audio ? bank.audio.at(concept_id, j) : 0.0;
      audio_values[i * cfg.d_audio + j] = base + rng.gaussian(cfg.noise_sigma);
    }
  }
  std::vector<double> text_values(n_t * cfg.d_text);
  for (std::size_t q = 0; q < n_t; ++q) {
    for (std::size_t j = 0; j < cfg.d_text; ++j) {
      text_values[q * cfg.d_text + j] = bank.text.at(query[q], j) + rng.gaussian(cfg.noise_sigma);
    }
  }

  char id[32];
  std::snprintf(id, sizeof(id), "synth_%06zu", index);
  MultiModalSample sample;
  sample.sample_id = id;
  sample.video = FeatureSequence{Modality::kVideo,
                                 Tensor({n_c, cfg.d_video}, std::move(video_values)),
                                 PaddingMask::all_valid(n_c)};
  sample.audio = FeatureSequence{Modality::kAudio,
                                 Tensor({n_c, cfg.d_audio}, std::move(audio_values)),
                                 PaddingMask::all_valid(n_c)};
  sample.text = FeatureSequence{Modality::kText,
                                Tensor({n_t, cfg.d_text}, std::move(text_values)),
                                PaddingMask::all_valid(n_t)};
  sample.saliency = std::move(labels);
  if (info) {
    info->clip_concepts = std::move(clip_concepts);
    info->query_concepts = std::move(query);
  }
  return sample;
}

std::vector<MultiModalSample> synth_samples(const SynthConfig& cfg) {
  const ConceptBank bank = synth_concepts(cfg);
  std::vector<MultiModalSample> out;
  out.reserve(cfg.n_samples);
  for (std::size_t i = 0; i < cfg.n_samples; ++i) out.push_back(synth_sample(cfg, bank, i));
  return out;
}

std::vector<MultiModalSample> synth_split(const SynthConfig& cfg, const std::string& split) {
  std::vector<MultiModalSample> all = synth_samples(cfg);
  const std::size_t n_train = cfg.n_samples - cfg.n_val();
  if (split == "train") {
    all.resize(n_train);
    return all;
  }
  if (split == "val") {
    return std::vector<MultiModalSample>(all.begin() + static_cast<std::ptrdiff_t>(n_train),
                                         all.end());
  }
  throw ConfigError("synth_split: unknown split '" + split + "'");
}

SynthOutput synth_generate(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  const ConceptBank bank = synth_concepts(cfg);
  const std::size_t n_train = cfg.n_samples - cfg.n_val();

  SynthOutput result;
  for (const char* split : {"train", "val"}) {
    const bool is_train = std::string(split) == "train";
    const std::size_t begin = is_train ? 0 : n_train;
    const std::size_t end = is_train ? n_train : cfg.n_samples;
    const std::filesystem::path dir = out_dir / split;
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.jsonl", std::ios::trunc);
    if (!manifest) {
      throw TensorFileError(TensorFileError::Kind::kIo,
                            "cannot write manifest in " + dir.string());
    }
    for (std::size_t i = begin; i < end; ++i) {
      MultiModalSample sample = synth_sample(cfg, bank, i);
      const std::string vid = sample.sample_id + "_video.cfst";
      const std::string aud = sample.sample_id + "_audio.cfst";
      const std::string txt = sample.sample_id + "_text.cfst";
      write_tensor_file(dir / vid, {{"features", sample.video.features}});
      write_tensor_file(dir / aud, {{"features", sample.audio->features}});
      write_tensor_file(dir / txt, {{"features", sample.text->features}});
      result.files_written += 3;
      nlohmann::json line = {{"sample_id", sample.sample_id}, {"video_path", vid},
                             {"audio_path", aud},             {"text_path", txt},
                             {"labels", sample.saliency},     {"split", split}};
      manifest << line.dump() << "\n";
    }
    if (is_train) {
      result.train_manifest = dir / "manifest.jsonl";
    } else {
      result.val_manifest = dir / "manifest.jsonl";
    }
    result.files_written += 1;  // the manifest itself
  }
  return result;
}

}  // namespace cfsum
