#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "cfsum/data_io.hpp"
#include "cfsum/errors.hpp"
#include "cfsum/evaluation.hpp"
#include "cfsum/rng.hpp"

using namespace cfsum;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("cfsum_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void spit(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-100.0, 100.0);
  return Tensor(std::move(shape), std::move(v));
}

TensorFileError::Kind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const TensorFileError& e) {
    return e.kind();
  }
  FAIL("expected TensorFileError");
  return TensorFileError::Kind::kIo;
}

}  // namespace

TEST_CASE("tensor file round trip") {
  const fs::path dir = fresh_dir("roundtrip");
  SUBCASE("single 2x3 tensor is bit-identical") {
    Tensor t({2, 3}, {1.5, -2.25, 3.0, 0.0, -0.0, 1e-300});
    write_tensor_file(dir / "a.cfst", {{"features", t}});
    auto back = read_tensor_file(dir / "a.cfst");
    REQUIRE(back.count("features") == 1);
    CHECK(back.at("features").shape() == t.shape());
    CHECK(bit_equal(back.at("features").values(), t.values()));
  }
  SUBCASE("empty map produces a valid file") {
    write_tensor_file(dir / "empty.cfst", {});
    CHECK(read_tensor_file(dir / "empty.cfst").empty());
  }
  SUBCASE("multiple entries with mixed ranks") {
    Rng rng(1);
    std::map<std::string, Tensor> entries = {
        {"vec", random_tensor(rng, {7})},
        {"mat", random_tensor(rng, {3, 4})},
        {"cube", random_tensor(rng, {2, 3, 2})},
    };
    write_tensor_file(dir / "multi.cfst", entries);
    auto back = read_tensor_file(dir / "multi.cfst");
    REQUIRE(back.size() == 3);
    for (const auto& [name, t] : entries) {
      CHECK(back.at(name).shape() == t.shape());
      CHECK(bit_equal(back.at(name).values(), t.values()));
    }
  }
  SUBCASE("non-finite and denormal payloads survive bitwise") {
    std::vector<double> specials = {std::numeric_limits<double>::quiet_NaN(),
                                    std::numeric_limits<double>::infinity(),
                                    -std::numeric_limits<double>::infinity(),
                                    std::numeric_limits<double>::denorm_min(),
                                    -0.0,
                                    1e308};
    Tensor t({6}, specials);
    write_tensor_file(dir / "special.cfst", {{"x", t}});
    auto back = read_tensor_file(dir / "special.cfst");
    CHECK(std::memcmp(back.at("x").values().data(), specials.data(),
                      specials.size() * sizeof(double)) == 0);
  }
  SUBCASE("random tensors round trip") {
    Rng rng(2);
    for (int i = 0; i < 60; ++i) {
      std::vector<std::size_t> shape;
      const std::size_t ndim = 1 + rng.uniform_index(3);
      for (std::size_t d = 0; d < ndim; ++d) shape.push_back(1 + rng.uniform_index(5));
      Tensor t = random_tensor(rng, shape);
      write_tensor_file(dir / "r.cfst", {{"t", t}});
      auto back = read_tensor_file(dir / "r.cfst");
      CHECK(back.at("t").shape() == t.shape());
      CHECK(bit_equal(back.at("t").values(), t.values()));
    }
  }
}

TEST_CASE("corrupted tensor files raise distinct errors") {
  const fs::path dir = fresh_dir("corrupt");
  Tensor t({2, 2}, {1, 2, 3, 4});
  const fs::path good_path = dir / "good.cfst";
  write_tensor_file(good_path, {{"weights", t}});
  const std::string good = slurp(good_path);

  SUBCASE("bad magic") {
    std::string bad = good;
    bad[0] = 'X';
    spit(dir / "bad.cfst", bad);
    CHECK(kind_of([&] { read_tensor_file(dir / "bad.cfst"); }) ==
          TensorFileError::Kind::kBadMagic);
  }
  SUBCASE("unsupported version") {
    std::string bad = good;
    bad[4] = 9;
    spit(dir / "bad.cfst", bad);
    CHECK(kind_of([&] { read_tensor_file(dir / "bad.cfst"); }) ==
          TensorFileError::Kind::kBadVersion);
  }
  SUBCASE("unsupported dtype") {
    std::string bad = good;
    // magic(4) + version(1) + count(4) + name_len(2) + name(7) -> dtype byte
    bad[4 + 1 + 4 + 2 + 7] = 7;
    spit(dir / "bad.cfst", bad);
    CHECK(kind_of([&] { read_tensor_file(dir / "bad.cfst"); }) ==
          TensorFileError::Kind::kBadDtype);
  }
  SUBCASE("payload truncated mid-tensor names the entry") {
    std::string bad = good.substr(0, good.size() - 9);
    spit(dir / "bad.cfst", bad);
    try {
      read_tensor_file(dir / "bad.cfst");
      FAIL("expected TensorFileError");
    } catch (const TensorFileError& e) {
      CHECK(e.kind() == TensorFileError::Kind::kTruncated);
      CHECK(std::string(e.what()).find("weights") != std::string::npos);
    }
  }
  SUBCASE("trailing bytes are rejected") {
    std::string bad = good + "junk";
    spit(dir / "bad.cfst", bad);
    CHECK(kind_of([&] { read_tensor_file(dir / "bad.cfst"); }) ==
          TensorFileError::Kind::kMalformed);
  }
  SUBCASE("missing file is an io error") {
    CHECK(kind_of([&] { read_tensor_file(dir / "nope.cfst"); }) == TensorFileError::Kind::kIo);
  }
}

TEST_CASE("checkpoint save and load") {
  const fs::path dir = fresh_dir("ckpt");
  ModelConfig cfg;
  cfg.d_video = 6;
  cfg.d_audio = 4;
  cfg.d_text = 4;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.ffn_hidden = 8;
  cfg.seed = 77;
  CFSumModel model = init_model(cfg);
  save_checkpoint(dir / "model.cfst", model);
  CFSumModel loaded = load_checkpoint(dir / "model.cfst");

  CHECK(loaded.config.d_video == cfg.d_video);
  CHECK(loaded.config.seed == cfg.seed);
  auto a = model.state_tensors();
  auto b = loaded.state_tensors();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(bit_equal(a[i].tensor.values(), b[i].tensor.values()));
  }

  SUBCASE("missing tensor entry is malformed") {
    auto entries = read_container(dir / "model.cfst");
    entries.pop_back();
    write_container(dir / "broken.cfst", entries);
    CHECK(kind_of([&] { load_checkpoint(dir / "broken.cfst"); }) ==
          TensorFileError::Kind::kMalformed);
  }
  SUBCASE("unknown tensor entry is malformed") {
    auto entries = read_container(dir / "model.cfst");
    ContainerEntry extra;
    extra.name = "zzz.unknown";
    extra.tensor = Tensor({1}, {0.0});
    entries.push_back(extra);
    write_container(dir / "broken.cfst", entries);
    CHECK(kind_of([&] { load_checkpoint(dir / "broken.cfst"); }) ==
          TensorFileError::Kind::kMalformed);
  }
}

TEST_CASE("label normalization") {
  CHECK(max_normalize_labels({2.0, 4.0}) == std::vector<double>{0.5, 1.0});
  CHECK(max_normalize_labels({0.0, 0.0}) == std::vector<double>{0.0, 0.0});
  CHECK_THROWS_AS(max_normalize_labels({-1.0, 2.0}), ContractError);
  CHECK_THROWS_AS(max_normalize_labels({std::numeric_limits<double>::quiet_NaN()}),
                  ContractError);
}

TEST_CASE("manifest loading") {
  const fs::path dir = fresh_dir("manifest");
  Rng rng(5);
  Tensor video = random_tensor(rng, {3, 6});
  Tensor audio = random_tensor(rng, {3, 4});
  write_tensor_file(dir / "v.cfst", {{"features", video}});
  write_tensor_file(dir / "a.cfst", {{"features", audio}});

  SUBCASE("record without text yields an absent text modality") {
    spit(dir / "manifest.jsonl",
         R"({"sample_id":"s1","video_path":"v.cfst","audio_path":"a.cfst","labels":[2,4,0],"split":"train"})"
         "\n");
    DatasetManifest manifest = load_manifest(dir / "manifest.jsonl");
    REQUIRE(manifest.records.size() == 1);
    MultiModalSample sample = load_sample(manifest, manifest.records[0]);
    CHECK(!sample.text.has_value());
    CHECK(sample.audio.has_value());
    CHECK(bit_equal(sample.video.features.values(), video.values()));
    CHECK(sample.saliency == std::vector<double>{0.5, 1.0, 0.0});
  }
  SUBCASE("duplicate ids rejected") {
    spit(dir / "manifest.jsonl",
         R"({"sample_id":"s1","video_path":"v.cfst","labels":[1,1,1]})"
         "\n"
         R"({"sample_id":"s1","video_path":"v.cfst","labels":[1,1,1]})"
         "\n");
    CHECK_THROWS_AS(load_manifest(dir / "manifest.jsonl"), ContractError);
  }
  SUBCASE("label count must match the clip count") {
    spit(dir / "manifest.jsonl",
         R"({"sample_id":"s1","video_path":"v.cfst","labels":[1,2]})"
         "\n");
    DatasetManifest manifest = load_manifest(dir / "manifest.jsonl");
    CHECK_THROWS_AS(load_sample(manifest, manifest.records[0]), ShapeError);
  }
  SUBCASE("unknown keys are rejected with their path") {
    spit(dir / "manifest.jsonl",
         R"({"sample_id":"s1","video_path":"v.cfst","labels":[1,1,1],"surprise":1})"
         "\n");
    try {
      load_manifest(dir / "manifest.jsonl");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("surprise") != std::string::npos);
    }
  }
  SUBCASE("unresolvable path") {
    spit(dir / "manifest.jsonl",
         R"({"sample_id":"s1","video_path":"missing.cfst","labels":[1,1,1]})"
         "\n");
    DatasetManifest manifest = load_manifest(dir / "manifest.jsonl");
    CHECK_THROWS_AS(load_sample(manifest, manifest.records[0]), TensorFileError);
  }
}

TEST_CASE("synthetic generation is deterministic and separable") {
  SynthConfig cfg;
  cfg.n_samples = 40;
  cfg.val_fraction = 0.25;
  cfg.n_concepts = 4;
  cfg.d_video = 8;
  cfg.d_audio = 6;
  cfg.d_text = 5;
  cfg.min_clips = 3;
  cfg.max_clips = 6;
  cfg.min_tokens = 1;
  cfg.max_tokens = 2;
  cfg.noise_sigma = 0.0;
  cfg.audio_informative_fraction = 1.0;
  cfg.seed = 9;

  SUBCASE("same seed twice gives byte-identical files") {
    const fs::path d1 = fresh_dir("synth1");
    const fs::path d2 = fresh_dir("synth2");
    SynthOutput o1 = synth_generate(cfg, d1);
    SynthOutput o2 = synth_generate(cfg, d2);
    CHECK(o1.files_written == o2.files_written);
    CHECK(o1.files_written == cfg.n_samples * 3 + 2);
    for (const char* split : {"train", "val"}) {
      for (const auto& entry : fs::directory_iterator(d1 / split)) {
        const fs::path rel = entry.path().filename();
        CHECK(slurp(entry.path()) == slurp(d2 / split / rel));
      }
    }
  }

  SUBCASE("generated manifests load cleanly and split sizes match") {
    const fs::path dir = fresh_dir("synth3");
    SynthOutput out = synth_generate(cfg, dir);
    DatasetManifest train = load_manifest(out.train_manifest);
    DatasetManifest val = load_manifest(out.val_manifest);
    CHECK(train.records.size() == cfg.n_samples - cfg.n_val());
    CHECK(val.records.size() == cfg.n_val());
    auto samples = load_split(train, "train");
    CHECK(samples.size() == train.records.size());
    for (const auto& s : samples) s.validate();

    // Disk and in-memory generation agree.
    auto mem = synth_split(cfg, "train");
    REQUIRE(mem.size() == samples.size());
    for (std::size_t i = 0; i < mem.size(); ++i) {
      CHECK(mem[i].sample_id == samples[i].sample_id);
      CHECK(bit_equal(mem[i].video.features.values(), samples[i].video.features.values()));
      CHECK(mem[i].saliency == samples[i].saliency);
    }
  }

  SUBCASE("noiseless nearest-concept classifier reaches mAP 1") {
    const ConceptBank bank = synth_concepts(cfg);
    double ap_sum = 0.0;
    std::size_t scored = 0;
    for (std::size_t i = 0; i < cfg.n_samples; ++i) {
      SynthSampleInfo info;
      MultiModalSample sample = synth_sample(cfg, bank, i, &info);

      // Recover the query concepts from the text tokens, then score each clip
      // by whether its nearest video concept is queried.
      std::set<std::size_t> query;
      for (std::size_t tok = 0; tok < sample.text->length(); ++tok) {
        double best = -1e300;
        std::size_t arg = 0;
        for (std::size_t c = 0; c < cfg.n_concepts; ++c) {
          double dot = 0.0;
          for (std::size_t j = 0; j < cfg.d_text; ++j) {
            dot += sample.text->features.at(tok, j) * bank.text.at(c, j);
          }
          if (dot > best) {
            best = dot;
            arg = c;
          }
        }
        query.insert(arg);
      }
      std::vector<double> scores(sample.n_clips());
      for (std::size_t clip = 0; clip < sample.n_clips(); ++clip) {
        double best = -1e300;
        std::size_t arg = 0;
        for (std::size_t c = 0; c < cfg.n_concepts; ++c) {
          double dot = 0.0;
          for (std::size_t j = 0; j < cfg.d_video; ++j) {
            dot += sample.video.features.at(clip, j) * bank.video.at(c, j);
          }
          if (dot > best) {
            best = dot;
            arg = c;
          }
        }
        scores[clip] = query.count(arg) ? 1.0 : 0.0;
      }
      std::vector<bool> positives = binarize_labels(sample.saliency, 0.5);
      if (std::none_of(positives.begin(), positives.end(), [](bool b) { return b; })) continue;
      ap_sum += average_precision(scores, positives);
      ++scored;
    }
    REQUIRE(scored > 0);
    CHECK(ap_sum / static_cast<double>(scored) == 1.0);
  }

  SUBCASE("positive rate tracks mean query size over concepts") {
    SynthConfig big = cfg;
    big.n_samples = 500;
    big.val_fraction = 0.0;
    big.n_concepts = 6;
    big.d_video = 8;
    big.d_audio = 6;
    big.d_text = 6;
    big.min_tokens = 1;
    big.max_tokens = 3;
    std::size_t positives = 0, clips = 0;
    for (const auto& sample : synth_samples(big)) {
      for (double s : sample.saliency) {
        positives += s >= 0.5 ? 1 : 0;
        ++clips;
      }
    }
    const double rate = static_cast<double>(positives) / static_cast<double>(clips);
    CHECK(std::abs(rate - 2.0 / 6.0) < 0.05);
  }

  SUBCASE("dims below the concept count are rejected") {
    SynthConfig bad = cfg;
    bad.d_text = 3;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}
