#pragma once

#include <string>
#include <vector>

#include "cfsum/model.hpp"
#include "cfsum/sample.hpp"

namespace cfsum {

struct SampleMetrics {
  std::string sample_id;
  double ap = 0.0;
  int hit1 = 0;
};

struct MetricsReport {
  std::vector<SampleMetrics> per_sample;  // scored samples, ascending sample_id
  double map = 0.0;
  double hit_at_1 = 0.0;
  double threshold = 0.0;
  std::vector<std::string> skipped_no_positive;  // excluded from the means
};

// Positive iff label >= threshold.
std::vector<bool> binarize_labels(const std::vector<double>& labels, double threshold);

// Ranks by descending score with ties broken by ascending original index,
// then averages precision at each positive's rank. Throws UndefinedApError
// when there is no positive.
double average_precision(const std::vector<double>& scores, const std::vector<bool>& positives);

// 1 iff the top-ranked item (same tie-break as AP) is positive.
int hit_at_1(const std::vector<double>& scores, const std::vector<bool>& positives);

// Scores every sample with the model and aggregates AP / HIT@1 over samples
// that have at least one positive clip. Only valid clips participate.
MetricsReport evaluate(const CFSumModel& model, const std::vector<MultiModalSample>& dataset,
                       double threshold);

std::string report_to_json(const MetricsReport& report);
std::string report_to_table(const MetricsReport& report);

}  // namespace cfsum
