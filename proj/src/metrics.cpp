#include "disco/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "disco/error.hpp"

namespace disco {

using nlohmann::json;

namespace {

Metrics metrics_from_confusion_impl(std::vector<std::vector<std::size_t>> confusion) {
  const std::size_t c = confusion.size();
  Metrics m;
  m.confusion = std::move(confusion);
  m.precision.assign(c, 0.0);
  m.recall.assign(c, 0.0);
  m.f1.assign(c, 0.0);

  std::size_t correct = 0;
  for (std::size_t i = 0; i < c; ++i) {
    correct += m.confusion[i][i];
    for (std::size_t j = 0; j < c; ++j) m.total += m.confusion[i][j];
  }
  m.accuracy = m.total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(m.total);

  double f1_sum = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    std::size_t row = 0, col = 0;
    for (std::size_t j = 0; j < c; ++j) {
      row += m.confusion[i][j];
      col += m.confusion[j][i];
    }
    const double tp = static_cast<double>(m.confusion[i][i]);
    m.precision[i] = col == 0 ? 0.0 : tp / static_cast<double>(col);
    m.recall[i] = row == 0 ? 0.0 : tp / static_cast<double>(row);
    const double pr = m.precision[i] + m.recall[i];
    m.f1[i] = pr == 0.0 ? 0.0 : 2.0 * m.precision[i] * m.recall[i] / pr;
    f1_sum += m.f1[i];
  }
  m.macro_f1 = c == 0 ? 0.0 : f1_sum / static_cast<double>(c);
  return m;
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_stddev(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double mu = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

Metrics metrics_from_confusion(std::vector<std::vector<std::size_t>> confusion) {
  return metrics_from_confusion_impl(std::move(confusion));
}

Metrics evaluate(const std::vector<int>& predictions,
                 const std::vector<std::vector<int>>& gold, std::size_t n_classes) {
  if (predictions.size() != gold.size()) {
    throw Error(ErrorKind::usage, "got " + std::to_string(predictions.size()) +
                                      " predictions for " + std::to_string(gold.size()) +
                                      " gold instances");
  }
  std::vector<std::vector<std::size_t>> confusion(n_classes,
                                                  std::vector<std::size_t>(n_classes, 0));
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const int pred = predictions[i];
    if (pred < 0 || static_cast<std::size_t>(pred) >= n_classes) {
      throw Error(ErrorKind::label, "prediction " + std::to_string(pred) +
                                        " outside the " + std::to_string(n_classes) +
                                        "-class label set");
    }
    if (gold[i].empty() || gold[i].size() > 2) {
      throw Error(ErrorKind::label,
                  "gold instance " + std::to_string(i) + " must carry 1 or 2 labels");
    }
    for (int g : gold[i]) {
      if (g < 0 || static_cast<std::size_t>(g) >= n_classes) {
        throw Error(ErrorKind::label, "gold label " + std::to_string(g) +
                                          " outside the " + std::to_string(n_classes) +
                                          "-class label set");
      }
    }
    const bool hit = std::find(gold[i].begin(), gold[i].end(), pred) != gold[i].end();
    const int row = hit ? pred : gold[i][0];
    confusion[static_cast<std::size_t>(row)][static_cast<std::size_t>(pred)] += 1;
  }
  return metrics_from_confusion_impl(std::move(confusion));
}

json Metrics::to_json() const {
  json j;
  j["accuracy"] = accuracy;
  j["macro_f1"] = macro_f1;
  j["precision"] = precision;
  j["recall"] = recall;
  j["f1"] = f1;
  j["confusion"] = confusion;
  j["total"] = total;
  return j;
}

std::string Metrics::to_table(const std::vector<std::string>& class_names) const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << std::setw(32) << std::left << "class" << std::right << std::setw(10) << "precision"
     << std::setw(10) << "recall" << std::setw(10) << "f1" << '\n';
  for (std::size_t i = 0; i < f1.size(); ++i) {
    const std::string name = i < class_names.size() ? class_names[i] : std::to_string(i);
    os << std::setw(32) << std::left << name << std::right << std::setw(10) << precision[i]
       << std::setw(10) << recall[i] << std::setw(10) << f1[i] << '\n';
  }
  os << std::setw(32) << std::left << "accuracy" << std::right << std::setw(10) << accuracy
     << "  macro-f1 " << macro_f1 << "  n=" << total << '\n';
  return os.str();
}

CvMetrics aggregate_cv(const std::vector<Metrics>& folds) {
  if (folds.size() < 2) {
    throw Error(ErrorKind::usage, "cross-validation aggregation needs at least 2 folds");
  }
  CvMetrics cv;
  cv.folds = folds;
  std::vector<double> accs, f1s;
  const std::size_t c = folds.front().confusion.size();
  std::vector<std::vector<std::size_t>> pooled(c, std::vector<std::size_t>(c, 0));
  for (const auto& f : folds) {
    if (f.confusion.size() != c) {
      throw Error(ErrorKind::usage, "folds disagree on class count");
    }
    accs.push_back(f.accuracy);
    f1s.push_back(f.macro_f1);
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < c; ++j) pooled[i][j] += f.confusion[i][j];
  }
  cv.accuracy_mean = mean_of(accs);
  cv.accuracy_stddev = sample_stddev(accs);
  cv.macro_f1_mean = mean_of(f1s);
  cv.macro_f1_stddev = sample_stddev(f1s);
  cv.pooled = metrics_from_confusion_impl(std::move(pooled));
  return cv;
}

json CvMetrics::to_json() const {
  json j;
  j["accuracy_mean"] = accuracy_mean;
  j["accuracy_stddev"] = accuracy_stddev;
  j["macro_f1_mean"] = macro_f1_mean;
  j["macro_f1_stddev"] = macro_f1_stddev;
  j["pooled"] = pooled.to_json();
  json folds_json = json::array();
  for (const auto& f : folds) folds_json.push_back(f.to_json());
  j["folds"] = folds_json;
  return j;
}

}  // namespace disco
