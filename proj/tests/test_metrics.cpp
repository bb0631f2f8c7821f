#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "disco/metrics.hpp"
#include "testutil.hpp"

using namespace disco;
using namespace testutil;

namespace {

// Independent loop-based scorer for single-label gold vectors.
struct LoopScores {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> precision, recall, f1;
};

LoopScores loop_score(const std::vector<int>& pred, const std::vector<int>& gold,
                      std::size_t n_classes) {
  LoopScores out;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == gold[i]) ++correct;
  out.accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const bool p = pred[i] == static_cast<int>(c);
      const bool g = gold[i] == static_cast<int>(c);
      if (p && g) ++tp;
      if (p && !g) ++fp;
      if (!p && g) ++fn;
    }
    const double prec = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double rec = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double f = prec + rec == 0.0 ? 0.0 : 2.0 * prec * rec / (prec + rec);
    out.precision.push_back(prec);
    out.recall.push_back(rec);
    out.f1.push_back(f);
    out.macro_f1 += f;
  }
  out.macro_f1 /= static_cast<double>(n_classes);
  return out;
}

std::vector<std::vector<int>> wrap(const std::vector<int>& gold) {
  std::vector<std::vector<int>> out;
  for (int g : gold) out.push_back({g});
  return out;
}

}  // namespace

TEST_CASE("all-correct predictions score one everywhere") {
  std::vector<int> pred = {0, 1, 2, 0, 1, 2};
  Metrics m = evaluate(pred, wrap(pred), 3);
  CHECK(m.accuracy == 1.0);
  CHECK(m.macro_f1 == 1.0);
  for (double p : m.precision) CHECK(p == 1.0);
  for (double r : m.recall) CHECK(r == 1.0);
  CHECK(m.total == 6);
}

TEST_CASE("symmetric two-class confusion gives F1 two-thirds") {
  // gold 0: predicted 0 twice, 1 once; gold 1: predicted 0 once, 1 twice.
  std::vector<int> pred = {0, 0, 1, 0, 1, 1};
  std::vector<int> gold = {0, 0, 0, 1, 1, 1};
  Metrics m = evaluate(pred, wrap(gold), 2);
  CHECK(m.confusion[0][0] == 2);
  CHECK(m.confusion[0][1] == 1);
  CHECK(m.confusion[1][0] == 1);
  CHECK(m.confusion[1][1] == 2);
  CHECK(approx(m.f1[0], 2.0 / 3.0, 1e-15));
  CHECK(approx(m.f1[1], 2.0 / 3.0, 1e-15));
  CHECK(approx(m.macro_f1, 2.0 / 3.0, 1e-15));
  CHECK(approx(m.accuracy, 2.0 / 3.0, 1e-15));
}

TEST_CASE("majority-class accuracy is exact decimal arithmetic") {
  // 2611 of 10000 instances belong to the majority class.
  std::vector<int> pred(10000, 0);
  std::vector<int> gold(10000, 1);
  for (int i = 0; i < 2611; ++i) gold[static_cast<std::size_t>(i)] = 0;
  Metrics m = evaluate(pred, wrap(gold), 2);
  CHECK(m.accuracy == 0.2611);
}

TEST_CASE("two-label gold counts either match as correct") {
  std::vector<int> pred = {1, 2, 0};
  std::vector<std::vector<int>> gold = {{0, 1}, {0, 1}, {0, 2}};
  Metrics m = evaluate(pred, gold, 3);
  // First: pred 1 matches second gold -> confusion row 1. Second: wrong,
  // row uses first gold label 0. Third: pred 0 matches first gold.
  CHECK(approx(m.accuracy, 2.0 / 3.0, 1e-15));
  CHECK(m.confusion[1][1] == 1);
  CHECK(m.confusion[0][2] == 1);
  CHECK(m.confusion[0][0] == 1);
}

TEST_CASE("shape and range violations are reported") {
  CHECK_THROWS_AS_KIND(evaluate({0, 1}, wrap({0}), 2), ErrorKind::usage);
  CHECK_THROWS_AS_KIND(evaluate({5}, wrap({0}), 2), ErrorKind::label);
  CHECK_THROWS_AS_KIND(evaluate({0}, wrap({7}), 2), ErrorKind::label);
  CHECK_THROWS_AS_KIND(evaluate({0}, {{}}, 2), ErrorKind::label);
}

TEST_CASE("evaluate agrees with a brute-force scorer on random vectors") {
  std::mt19937_64 rng(404);
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<std::size_t> n_dist(1, 60);
    std::uniform_int_distribution<int> c_dist(2, 7);
    const std::size_t n = n_dist(rng);
    const int classes = c_dist(rng);
    std::uniform_int_distribution<int> label(0, classes - 1);
    std::vector<int> pred(n), gold(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = label(rng);
      gold[i] = label(rng);
    }
    Metrics m = evaluate(pred, wrap(gold), static_cast<std::size_t>(classes));
    LoopScores ref = loop_score(pred, gold, static_cast<std::size_t>(classes));
    CHECK(m.accuracy == ref.accuracy);
    CHECK(m.macro_f1 == ref.macro_f1);
    for (int c = 0; c < classes; ++c) {
      const auto ci = static_cast<std::size_t>(c);
      CHECK(m.precision[ci] == ref.precision[ci]);
      CHECK(m.recall[ci] == ref.recall[ci]);
      CHECK(m.f1[ci] == ref.f1[ci]);
    }
  }
}

TEST_CASE("metrics_from_confusion matches evaluate") {
  std::vector<int> pred = {0, 0, 1, 2, 2, 1, 0};
  std::vector<int> gold = {0, 1, 1, 2, 0, 2, 0};
  Metrics direct = evaluate(pred, wrap(gold), 3);
  Metrics redone = metrics_from_confusion(direct.confusion);
  CHECK(redone.accuracy == direct.accuracy);
  CHECK(redone.macro_f1 == direct.macro_f1);
  CHECK(redone.total == direct.total);
  CHECK(redone.f1 == direct.f1);
}

TEST_CASE("cv aggregation: identical folds have zero spread") {
  std::vector<int> pred = {0, 1, 1, 0};
  std::vector<int> gold = {0, 1, 0, 0};
  Metrics fold = evaluate(pred, wrap(gold), 2);
  CvMetrics cv = aggregate_cv({fold, fold, fold});
  CHECK(cv.accuracy_mean == fold.accuracy);
  CHECK(cv.accuracy_stddev == 0.0);
  CHECK(cv.macro_f1_stddev == 0.0);
  CHECK(cv.pooled.total == 3 * fold.total);
  CHECK(cv.pooled.accuracy == fold.accuracy);
}

TEST_CASE("cv aggregation: mean and sample stddev of two folds") {
  // Fold accuracies 0.4 and 0.6 on 10 instances each.
  std::vector<int> gold(10, 0);
  std::vector<int> pred4(10, 1), pred6(10, 1);
  for (int i = 0; i < 4; ++i) pred4[static_cast<std::size_t>(i)] = 0;
  for (int i = 0; i < 6; ++i) pred6[static_cast<std::size_t>(i)] = 0;
  Metrics a = evaluate(pred4, wrap(gold), 2);
  Metrics b = evaluate(pred6, wrap(gold), 2);
  CHECK(a.accuracy == 0.4);
  CHECK(b.accuracy == 0.6);
  CvMetrics cv = aggregate_cv({a, b});
  CHECK(cv.accuracy_mean == 0.5);
  CHECK(cv.accuracy_stddev == 0.14142135623730948);
  CHECK(cv.pooled.total == 20);
  CHECK(cv.pooled.accuracy == 0.5);
  CHECK_THROWS_AS_KIND(aggregate_cv({a}), ErrorKind::usage);
}

TEST_CASE("table rendering names every class") {
  std::vector<int> pred = {0, 1};
  Metrics m = evaluate(pred, wrap(pred), 2);
  std::string table = m.to_table({"Cause", "Contrast"});
  CHECK(table.find("Cause") != std::string::npos);
  CHECK(table.find("Contrast") != std::string::npos);
  CHECK(table.find("accuracy") != std::string::npos);
}
