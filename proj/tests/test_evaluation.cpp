#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "cfsum/data_io.hpp"
#include "cfsum/errors.hpp"
#include "cfsum/evaluation.hpp"
#include "cfsum/model.hpp"
#include "cfsum/rng.hpp"

using namespace cfsum;

namespace {

// Independent AP oracle: no sorting; each item's rank is counted pairwise
// with the same tie-break (higher score first, lower index wins ties).
double brute_force_ap(const std::vector<double>& scores, const std::vector<bool>& positives) {
  const std::size_t n = scores.size();
  double ap = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!positives[i]) continue;
    ++n_pos;
    std::size_t rank = 1;
    std::size_t positives_at_or_above = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const bool outranks = scores[j] > scores[i] || (scores[j] == scores[i] && j < i);
      if (j != i && outranks) ++rank;
      if ((j == i || outranks) && positives[j]) ++positives_at_or_above;
    }
    ap += static_cast<double>(positives_at_or_above) / static_cast<double>(rank);
  }
  return ap / static_cast<double>(n_pos);
}

std::vector<bool> random_labels(Rng& rng, std::size_t n, bool ensure_positive = true) {
  std::vector<bool> out(n);
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = rng.uniform() < 0.4;
    any = any || out[i];
  }
  if (ensure_positive && !any) out[rng.uniform_index(n)] = true;
  return out;
}

}  // namespace

TEST_CASE("binarize_labels") {
  CHECK(binarize_labels({0.2, 0.7}, 0.5) == std::vector<bool>{false, true});
  CHECK(binarize_labels({0.2, 0.7}, -std::numeric_limits<double>::infinity()) ==
        std::vector<bool>{true, true});
  CHECK(binarize_labels({0.2, 0.7}, 0.8) == std::vector<bool>{false, false});
  CHECK(binarize_labels({0.5}, 0.5) == std::vector<bool>{true});  // >= threshold
}

TEST_CASE("average precision hand-ranked cases") {
  CHECK(average_precision({0.9, 0.1, 0.5}, {true, false, true}) == 1.0);
  CHECK(average_precision({0.9, 0.1}, {false, true}) == 0.5);

  Rng rng(3);
  for (int i = 0; i < 10; ++i) {
    const std::size_t n = 1 + rng.uniform_index(6);
    std::vector<double> scores(n);
    for (double& s : scores) s = rng.uniform();
    CHECK(average_precision(scores, std::vector<bool>(n, true)) == 1.0);
  }

  CHECK_THROWS_AS(average_precision({0.1, 0.2}, {false, false}), UndefinedApError);
  CHECK_THROWS_AS(average_precision({0.1}, {true, false}), ShapeError);
}

TEST_CASE("reversed perfect ranker with one positive scores 1/n") {
  for (std::size_t n : {2, 3, 5, 7}) {
    std::vector<double> scores(n);
    std::vector<bool> positives(n, false);
    positives[n - 1] = true;  // worst-ranked item is the only positive
    for (std::size_t i = 0; i < n; ++i) scores[i] = static_cast<double>(n - i);
    CHECK(average_precision(scores, positives) ==
          doctest::Approx(1.0 / static_cast<double>(n)).epsilon(1e-12));
  }
}

TEST_CASE("hit at 1") {
  CHECK(hit_at_1({0.9, 0.1}, {true, false}) == 1);
  CHECK(hit_at_1({0.9, 0.1}, {false, true}) == 0);
  // Ties break toward the lower index.
  CHECK(hit_at_1({0.5, 0.5}, {false, true}) == 0);
  CHECK(hit_at_1({0.5, 0.5}, {true, false}) == 1);
}

TEST_CASE("library AP equals the brute-force oracle on short vectors") {
  Rng rng(11);
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(7);
    std::vector<double> scores(n);
    // Draw from a coarse grid so ties actually happen.
    for (double& s : scores) s = static_cast<double>(rng.uniform_index(4)) / 4.0;
    std::vector<bool> positives = random_labels(rng, n);
    const double lib = average_precision(scores, positives);
    const double oracle = brute_force_ap(scores, positives);
    CHECK(std::abs(lib - oracle) < 1e-12);
  }
}

TEST_CASE("AP is invariant under strictly monotone score transforms") {
  Rng rng(13);
  auto transforms = std::vector<std::function<double(double)>>{
      [](double x) { return 2.0 * x + 1.0; },
      [](double x) { return std::atan(x); },
      [](double x) { return x * x * x; },
      [](double x) { return std::exp(x); },
  };
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(7);
    std::vector<double> scores(n);
    for (double& s : scores) s = static_cast<double>(rng.uniform_index(32)) / 8.0 - 2.0;
    std::vector<bool> positives = random_labels(rng, n);
    const double base = average_precision(scores, positives);
    for (const auto& f : transforms) {
      std::vector<double> mapped(n);
      for (std::size_t i = 0; i < n; ++i) mapped[i] = f(scores[i]);
      CHECK(average_precision(mapped, positives) == doctest::Approx(base).epsilon(1e-12));
    }
  }
}

TEST_CASE("evaluate aggregates over samples and reports skips") {
  SynthConfig scfg;
  scfg.n_samples = 12;
  scfg.val_fraction = 0.0;
  scfg.n_concepts = 3;
  scfg.d_video = 6;
  scfg.d_audio = 4;
  scfg.d_text = 4;
  scfg.min_clips = 3;
  scfg.max_clips = 5;
  scfg.min_tokens = 1;
  scfg.max_tokens = 2;
  scfg.noise_sigma = 0.2;
  scfg.seed = 21;
  auto samples = synth_samples(scfg);

  ModelConfig mcfg;
  mcfg.d_video = scfg.d_video;
  mcfg.d_audio = scfg.d_audio;
  mcfg.d_text = scfg.d_text;
  mcfg.d_model = 8;
  mcfg.n_heads = 2;
  mcfg.ffn_hidden = 8;
  CFSumModel model = init_model(mcfg);

  MetricsReport report = evaluate(model, samples, 0.5);
  CHECK(report.per_sample.size() + report.skipped_no_positive.size() == samples.size());
  CHECK(report.threshold == 0.5);
  CHECK(report.map >= 0.0);
  CHECK(report.map <= 1.0);
  for (const SampleMetrics& s : report.per_sample) {
    CHECK(s.ap >= 0.0);
    CHECK(s.ap <= 1.0);
    CHECK((s.hit1 == 0 || s.hit1 == 1));
  }
  CHECK(std::is_sorted(report.per_sample.begin(), report.per_sample.end(),
                       [](const SampleMetrics& a, const SampleMetrics& b) {
                         return a.sample_id < b.sample_id;
                       }));

  // The means match a direct recomputation in the documented order.
  double ap_sum = 0.0;
  for (const SampleMetrics& s : report.per_sample) ap_sum += s.ap;
  CHECK(report.map == ap_sum / static_cast<double>(report.per_sample.size()));

  SUBCASE("threshold above every label skips everything") {
    CHECK_THROWS_AS(evaluate(model, samples, 2.0), UndefinedApError);
  }
  SUBCASE("empty dataset rejected") {
    CHECK_THROWS_AS(evaluate(model, {}, 0.5), ContractError);
  }
}

TEST_CASE("constant-score model matches the brute-force tie-break AP") {
  SynthConfig scfg;
  scfg.n_samples = 8;
  scfg.val_fraction = 0.0;
  scfg.n_concepts = 3;
  scfg.d_video = 6;
  scfg.d_audio = 4;
  scfg.d_text = 4;
  scfg.min_clips = 3;
  scfg.max_clips = 7;
  scfg.min_tokens = 1;
  scfg.max_tokens = 2;
  scfg.noise_sigma = 0.2;
  scfg.seed = 31;
  auto samples = synth_samples(scfg);

  ModelConfig mcfg;
  mcfg.d_video = scfg.d_video;
  mcfg.d_audio = scfg.d_audio;
  mcfg.d_text = scfg.d_text;
  mcfg.d_model = 8;
  mcfg.n_heads = 2;
  mcfg.ffn_hidden = 8;
  CFSumModel model = init_model(mcfg);
  for (const ParamInfo& p : model.state_tensors()) {
    Tensor t = p.tensor;
    std::fill(t.mutable_values().begin(), t.mutable_values().end(), 0.0);
  }

  MetricsReport report = evaluate(model, samples, 0.5);
  for (const SampleMetrics& metrics : report.per_sample) {
    const MultiModalSample* sample = nullptr;
    for (const auto& s : samples) {
      if (s.sample_id == metrics.sample_id) sample = &s;
    }
    REQUIRE(sample != nullptr);
    std::vector<double> constant(sample->n_clips(), 0.0);
    const double oracle = brute_force_ap(constant, binarize_labels(sample->saliency, 0.5));
    CHECK(metrics.ap == doctest::Approx(oracle).epsilon(1e-12));
  }
}
