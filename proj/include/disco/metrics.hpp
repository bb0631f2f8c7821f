#ifndef DISCO_METRICS_HPP
#define DISCO_METRICS_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"

namespace disco {

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> precision;  // per class
  std::vector<double> recall;
  std::vector<double> f1;
  std::vector<std::vector<std::size_t>> confusion;  // [gold][predicted]
  std::size_t total = 0;

  nlohmann::json to_json() const;
  // Plain-text table, one row per class plus the summary line.
  std::string to_table(const std::vector<std::string>& class_names) const;
};

// Scores predictions against gold label sets (1 or 2 ids per instance; a
// prediction is correct if it matches either). The confusion row uses the
// matched gold label when correct, the first gold label otherwise.
Metrics evaluate(const std::vector<int>& predictions,
                 const std::vector<std::vector<int>>& gold, std::size_t n_classes);

// Recomputes every derived figure from a confusion matrix alone; evaluate and
// the CV aggregator both reduce to this.
Metrics metrics_from_confusion(std::vector<std::vector<std::size_t>> confusion);

struct CvMetrics {
  std::vector<Metrics> folds;
  double accuracy_mean = 0.0;
  double accuracy_stddev = 0.0;  // sample standard deviation
  double macro_f1_mean = 0.0;
  double macro_f1_stddev = 0.0;
  Metrics pooled;  // confusion matrices summed, metrics recomputed

  nlohmann::json to_json() const;
};

CvMetrics aggregate_cv(const std::vector<Metrics>& folds);

}  // namespace disco

#endif
