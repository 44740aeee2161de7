#include "cfsum/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "cfsum/errors.hpp"

namespace cfsum {

std::vector<bool> binarize_labels(const std::vector<double>& labels, double threshold) {
  std::vector<bool> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!std::isfinite(labels[i])) throw ContractError("binarize_labels: non-finite label");
    out[i] = labels[i] >= threshold;
  }
  return out;
}

namespace {

// Descending score, ties by ascending original index.
std::vector<std::size_t> ranking(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

double average_precision(const std::vector<double>& scores, const std::vector<bool>& positives) {
  if (scores.size() != positives.size()) {
    throw ShapeError("average_precision: " + std::to_string(scores.size()) + " scores vs " +
                     std::to_string(positives.size()) + " labels");
  }
  if (scores.empty()) throw ContractError("average_precision: empty input");
  const std::size_t n_pos = static_cast<std::size_t>(
      std::count(positives.begin(), positives.end(), true));
  if (n_pos == 0) throw UndefinedApError("average_precision: no positive labels");

  const auto order = ranking(scores);
  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (positives[order[rank]]) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  return ap / static_cast<double>(n_pos);
}

int hit_at_1(const std::vector<double>& scores, const std::vector<bool>& positives) {
  if (scores.size() != positives.size()) {
    throw ShapeError("hit_at_1: " + std::to_string(scores.size()) + " scores vs " +
                     std::to_string(positives.size()) + " labels");
  }
  if (scores.empty()) throw ContractError("hit_at_1: empty input");
  const auto order = ranking(scores);
  return positives[order.front()] ? 1 : 0;
}

MetricsReport evaluate(const CFSumModel& model, const std::vector<MultiModalSample>& dataset,
                       double threshold) {
  if (dataset.empty()) throw ContractError("evaluate: empty dataset");
  MetricsReport report;
  report.threshold = threshold;
  for (const MultiModalSample& sample : dataset) {
    Tape tape;
    SaliencyPrediction pred = cfsum_forward(tape, sample, model);
    std::vector<double> scores;
    std::vector<double> labels;
    const auto flat = pred.flat();
    for (std::size_t i = 0; i < pred.n_clips(); ++i) {
      if (!pred.valid[i]) continue;
      scores.push_back(flat[i]);
      labels.push_back(sample.saliency[i]);
    }
    const std::vector<bool> positives = binarize_labels(labels, threshold);
    if (std::none_of(positives.begin(), positives.end(), [](bool b) { return b; })) {
      report.skipped_no_positive.push_back(sample.sample_id);
      continue;
    }
    report.per_sample.push_back(SampleMetrics{sample.sample_id,
                                              average_precision(scores, positives),
                                              hit_at_1(scores, positives)});
  }
  if (report.per_sample.empty()) {
    throw UndefinedApError("evaluate: no sample has a positive clip at threshold " +
                           std::to_string(threshold));
  }
  // Fixed aggregation order for bit-reproducibility.
  std::sort(report.per_sample.begin(), report.per_sample.end(),
            [](const SampleMetrics& a, const SampleMetrics& b) {
              return a.sample_id < b.sample_id;
            });
  double ap_sum = 0.0, hit_sum = 0.0;
  for (const SampleMetrics& s : report.per_sample) {
    ap_sum += s.ap;
    hit_sum += s.hit1;
  }
  report.map = ap_sum / static_cast<double>(report.per_sample.size());
  report.hit_at_1 = hit_sum / static_cast<double>(report.per_sample.size());
  return report;
}

std::string report_to_json(const MetricsReport& report) {
  nlohmann::json doc;
  doc["map"] = report.map;
  doc["hit_at_1"] = report.hit_at_1;
  doc["threshold"] = report.threshold;
  doc["n_scored"] = report.per_sample.size();
  doc["skipped_no_positive"] = report.skipped_no_positive;
  nlohmann::json per = nlohmann::json::array();
  for (const SampleMetrics& s : report.per_sample) {
    per.push_back({{"sample_id", s.sample_id}, {"ap", s.ap}, {"hit1", s.hit1}});
  }
  doc["per_sample"] = per;
  return doc.dump(2);
}

std::string report_to_table(const MetricsReport& report) {
  std::ostringstream out;
  out << "sample_id            ap      hit@1\n";
  out << "-----------------------------------\n";
  for (const SampleMetrics& s : report.per_sample) {
    out << s.sample_id;
    for (std::size_t pad = s.sample_id.size(); pad < 21; ++pad) out << ' ';
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f  %d\n", s.ap, s.hit1);
    out << buf;
  }
  out << "-----------------------------------\n";
  char buf[128];
  std::snprintf(buf, sizeof(buf), "mAP %.4f   HIT@1 %.4f   (threshold %.3g, %zu scored, %zu skipped)\n",
                report.map, report.hit_at_1, report.threshold, report.per_sample.size(),
                report.skipped_no_positive.size());
  out << buf;
  return out.str();
}

}  // namespace cfsum
