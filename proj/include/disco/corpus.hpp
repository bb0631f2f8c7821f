#ifndef DISCO_CORPUS_HPP
#define DISCO_CORPUS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "disco/error.hpp"

namespace disco {

// One relation instance: two argument spans, the annotator-inserted
// connective (absent at prediction time), one or two relation labels,
// and the corpus section the instance came from.
struct Instance {
  std::string id;
  std::string arg1;
  std::string arg2;
  std::string conn;                     // empty = no connective available
  std::vector<std::string> relations;   // 1 or 2 raw label strings
  int section = 0;
};

enum class LabelTask { second_level, top_level, binary };

// Ordered class universe for one task. Raw corpus labels are second-level
// sense strings ("Comparison.Contrast"); coarser tasks map them down.
struct LabelSet {
  LabelTask task = LabelTask::second_level;
  std::vector<std::string> names;   // order defines the class index
  std::string positive;             // binary task only

  static LabelSet from_file(const std::string& path, LabelTask task);
  static LabelSet from_names(std::vector<std::string> names, LabelTask task);
  static LabelSet binary_one_vs_all(const std::string& positive_class);

  std::size_t size() const { return names.size(); }
  // Class id for a raw corpus label under this task; nullopt when the label
  // does not belong to the task's universe.
  std::optional<int> map_relation(const std::string& raw) const;
  const std::string& name_of(int id) const;

 private:
  std::unordered_map<std::string, int> index_;
  void rebuild_index();
};

// Relation tags that the second-level convention drops from the data:
// non-implicit relation types plus the low-frequency senses excluded from
// the 11-way set. Dropping them is silent filtering, not an error.
bool is_excluded_relation(const std::string& raw);

struct CorpusStats {
  std::size_t lines = 0;
  std::size_t kept = 0;
  std::size_t skipped_excluded = 0;   // all relations excluded by convention
  std::size_t skipped_empty = 0;      // empty argument text
  std::size_t dropped_relations = 0;  // excluded labels removed from kept instances
};

// JSON-lines corpus reader. Each line is one object with the Instance field
// names; "conn" may be absent or null. Labels outside both the task universe
// and the documented excluded set raise a label error naming the offender.
std::vector<Instance> load_corpus(const std::string& path, const LabelSet& labels,
                                  CorpusStats* stats = nullptr);
void save_corpus(const std::string& path, const std::vector<Instance>& instances);

// Each 2-label instance becomes two single-label instances sharing the same
// text. Train-split only; dev/test keep both labels for either-match scoring.
std::vector<Instance> duplicate_multilabel(const std::vector<Instance>& instances);

enum class SplitScheme { lin, ji, cross_validation };
SplitScheme split_scheme_from_name(const std::string& name);
std::string split_scheme_name(SplitScheme s);

struct Splits {
  std::vector<Instance> train;
  std::vector<Instance> dev;
  std::vector<Instance> test;
};

// Section-based assignment: lin = train 2-21 / dev 22 / test 23,
// ji = train 2-20 / dev 0-1 / test 21-22. Duplication is not applied here.
Splits make_splits(const std::vector<Instance>& instances, SplitScheme scheme);

// 10-fold assignment: sections 0-23 are shuffled once with `seed` and dealt
// round-robin into `folds` buckets; fold i tests on bucket i, uses bucket
// (i+1) mod folds as dev, and trains on the rest.
std::vector<Splits> make_cv_splits(const std::vector<Instance>& instances, int folds,
                                   std::uint64_t seed);

// Synthetic corpus with the label recoverable from planted marker tokens:
// arg1 carries one label-specific marker, arg2 another, and the connective
// is a fixed phrase per label. Everything else is filler drawn from a small
// token pool. Deterministic given the seed.
struct SynthSpec {
  std::size_t n = 100;
  std::vector<std::size_t> class_counts;  // per-label counts; empty = spread evenly
  std::size_t filler_vocab = 60;
  double multilabel_frac = 0.0;           // fraction carrying a second label
  std::uint64_t seed = 1;
};

std::vector<Instance> synth_corpus(const SynthSpec& spec, const LabelSet& labels);

// FNV-1a 64-bit over a file's bytes, hex-encoded; used to fingerprint corpora.
std::string file_checksum(const std::string& path);

}  // namespace disco

#endif
