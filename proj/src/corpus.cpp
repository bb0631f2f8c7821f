#include "disco/corpus.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

namespace disco {

using nlohmann::json;

namespace {

const std::array<const char*, 8> kExcluded = {
    // Non-implicit relation types present in raw PDTB exports.
    "AltLex", "EntRel", "NoRel",
    // Low-frequency second-level senses dropped by the 11-way convention.
    "Comparison.Pragmatic concession", "Comparison.Pragmatic contrast",
    "Contingency.Condition", "Contingency.Pragmatic condition",
    "Expansion.Exception"};

std::string top_level_of(const std::string& raw) {
  auto dot = raw.find('.');
  return dot == std::string::npos ? raw : raw.substr(0, dot);
}

bool is_top_level_name(const std::string& s) {
  return s == "Comparison" || s == "Contingency" || s == "Expansion" || s == "Temporal";
}

}  // namespace

bool is_excluded_relation(const std::string& raw) {
  return std::find(kExcluded.begin(), kExcluded.end(), raw) != kExcluded.end();
}

// ---- LabelSet -------------------------------------------------------------

void LabelSet::rebuild_index() {
  index_.clear();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!index_.emplace(names[i], static_cast<int>(i)).second) {
      throw Error(ErrorKind::label, "duplicate label name: " + names[i]);
    }
  }
}

LabelSet LabelSet::from_file(const std::string& path, LabelTask task) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open labels file: " + path);
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (!line.empty() && line[0] != '#') names.push_back(line);
  }
  if (names.empty()) throw Error(ErrorKind::label, "labels file is empty: " + path);
  return from_names(std::move(names), task);
}

LabelSet LabelSet::from_names(std::vector<std::string> names, LabelTask task) {
  LabelSet s;
  s.task = task;
  s.names = std::move(names);
  s.rebuild_index();
  return s;
}

LabelSet LabelSet::binary_one_vs_all(const std::string& positive_class) {
  LabelSet s;
  s.task = LabelTask::binary;
  s.positive = positive_class;
  s.names = {positive_class, "Other"};
  s.rebuild_index();
  return s;
}

std::optional<int> LabelSet::map_relation(const std::string& raw) const {
  switch (task) {
    case LabelTask::second_level: {
      auto it = index_.find(raw);
      if (it == index_.end()) return std::nullopt;
      return it->second;
    }
    case LabelTask::top_level: {
      auto it = index_.find(top_level_of(raw));
      if (it == index_.end()) return std::nullopt;
      return it->second;
    }
    case LabelTask::binary: {
      std::string top = top_level_of(raw);
      if (!is_top_level_name(top)) return std::nullopt;
      return top == positive ? 0 : 1;
    }
  }
  return std::nullopt;
}

const std::string& LabelSet::name_of(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= names.size()) {
    throw Error(ErrorKind::label, "label id " + std::to_string(id) + " out of range");
  }
  return names[static_cast<std::size_t>(id)];
}

// ---- corpus I/O -----------------------------------------------------------

std::vector<Instance> load_corpus(const std::string& path, const LabelSet& labels,
                                  CorpusStats* stats) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open corpus file: " + path);

  CorpusStats st;
  std::vector<Instance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++st.lines;

    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::parse,
                  path + ":" + std::to_string(lineno) + ": invalid JSON: " + e.what());
    }

    auto require = [&](const char* field) -> const json& {
      if (!j.contains(field)) {
        throw Error(ErrorKind::parse, path + ":" + std::to_string(lineno) +
                                          ": missing field \"" + field + "\"");
      }
      return j.at(field);
    };

    Instance inst;
    try {
      inst.id = require("id").get<std::string>();
      inst.arg1 = require("arg1").get<std::string>();
      inst.arg2 = require("arg2").get<std::string>();
      inst.section = require("section").get<int>();
      if (j.contains("conn") && !j.at("conn").is_null()) {
        inst.conn = j.at("conn").get<std::string>();
      }
      for (const auto& r : require("relations")) inst.relations.push_back(r.get<std::string>());
    } catch (const json::exception& e) {
      throw Error(ErrorKind::parse,
                  path + ":" + std::to_string(lineno) + ": bad field type: " + e.what());
    }

    if (inst.relations.empty() || inst.relations.size() > 2) {
      throw Error(ErrorKind::parse, path + ":" + std::to_string(lineno) + ": instance " +
                                        inst.id + " must carry 1 or 2 relations, has " +
                                        std::to_string(inst.relations.size()));
    }
    if (inst.section < 0 || inst.section > 23) {
      throw Error(ErrorKind::parse, path + ":" + std::to_string(lineno) + ": instance " +
                                        inst.id + " has section " +
                                        std::to_string(inst.section) + " outside 0-23");
    }

    // Validate labels against the task universe; silently drop the
    // convention-excluded ones, reject everything else.
    std::vector<std::string> kept;
    std::size_t dropped_here = 0;
    for (const auto& r : inst.relations) {
      if (labels.map_relation(r).has_value()) {
        kept.push_back(r);
      } else if (is_excluded_relation(r)) {
        ++dropped_here;
      } else {
        throw Error(ErrorKind::label, path + ":" + std::to_string(lineno) +
                                          ": unknown relation label \"" + r + "\"");
      }
    }
    if (kept.empty()) {
      ++st.skipped_excluded;
      continue;
    }
    st.dropped_relations += dropped_here;
    inst.relations = std::move(kept);

    if (inst.arg1.find_first_not_of(" \t") == std::string::npos ||
        inst.arg2.find_first_not_of(" \t") == std::string::npos) {
      ++st.skipped_empty;
      continue;
    }

    out.push_back(std::move(inst));
    ++st.kept;
  }
  if (stats) *stats = st;
  return out;
}

void save_corpus(const std::string& path, const std::vector<Instance>& instances) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write corpus file: " + path);
  for (const auto& inst : instances) {
    json j;
    j["id"] = inst.id;
    j["arg1"] = inst.arg1;
    j["arg2"] = inst.arg2;
    if (inst.conn.empty()) {
      j["conn"] = nullptr;
    } else {
      j["conn"] = inst.conn;
    }
    j["relations"] = inst.relations;
    j["section"] = inst.section;
    out << j.dump() << '\n';
  }
  if (!out) throw Error(ErrorKind::io, "write failed: " + path);
}

// ---- splits ---------------------------------------------------------------

std::vector<Instance> duplicate_multilabel(const std::vector<Instance>& instances) {
  std::vector<Instance> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) {
    if (inst.relations.size() == 1) {
      out.push_back(inst);
      continue;
    }
    for (std::size_t i = 0; i < inst.relations.size(); ++i) {
      Instance copy = inst;
      copy.relations = {inst.relations[i]};
      copy.id = inst.id + "#" + std::to_string(i);
      out.push_back(std::move(copy));
    }
  }
  return out;
}

SplitScheme split_scheme_from_name(const std::string& name) {
  if (name == "lin") return SplitScheme::lin;
  if (name == "ji") return SplitScheme::ji;
  if (name == "cv") return SplitScheme::cross_validation;
  throw Error(ErrorKind::config, "unknown split scheme \"" + name + "\" (use lin, ji, or cv)");
}

std::string split_scheme_name(SplitScheme s) {
  switch (s) {
    case SplitScheme::lin: return "lin";
    case SplitScheme::ji: return "ji";
    case SplitScheme::cross_validation: return "cv";
  }
  return "?";
}

namespace {

Splits split_by_sections(const std::vector<Instance>& instances, int train_lo, int train_hi,
                         int dev_lo, int dev_hi, int test_lo, int test_hi,
                         const char* scheme_name) {
  Splits s;
  for (const auto& inst : instances) {
    if (inst.section >= train_lo && inst.section <= train_hi) {
      s.train.push_back(inst);
    } else if (inst.section >= dev_lo && inst.section <= dev_hi) {
      s.dev.push_back(inst);
    } else if (inst.section >= test_lo && inst.section <= test_hi) {
      s.test.push_back(inst);
    }
  }
  if (s.train.empty() || s.dev.empty() || s.test.empty()) {
    throw Error(ErrorKind::corpus, std::string("scheme ") + scheme_name +
                                       " produced an empty split (train " +
                                       std::to_string(s.train.size()) + ", dev " +
                                       std::to_string(s.dev.size()) + ", test " +
                                       std::to_string(s.test.size()) + ")");
  }
  return s;
}

}  // namespace

Splits make_splits(const std::vector<Instance>& instances, SplitScheme scheme) {
  switch (scheme) {
    case SplitScheme::lin:
      return split_by_sections(instances, 2, 21, 22, 22, 23, 23, "lin");
    case SplitScheme::ji:
      return split_by_sections(instances, 2, 20, 0, 1, 21, 22, "ji");
    case SplitScheme::cross_validation:
      throw Error(ErrorKind::usage, "cross-validation splits come from make_cv_splits");
  }
  throw Error(ErrorKind::usage, "unreachable split scheme");
}

std::vector<Splits> make_cv_splits(const std::vector<Instance>& instances, int folds,
                                   std::uint64_t seed) {
  if (folds < 2 || folds > 24) {
    throw Error(ErrorKind::config, "fold count must lie in [2,24], got " + std::to_string(folds));
  }
  std::vector<int> sections(24);
  std::iota(sections.begin(), sections.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(sections.begin(), sections.end(), rng);

  // Deal shuffled sections round-robin into fold buckets.
  std::vector<int> bucket_of(24);
  for (int i = 0; i < 24; ++i) bucket_of[sections[static_cast<std::size_t>(i)]] = i % folds;

  std::vector<Splits> out(static_cast<std::size_t>(folds));
  for (int f = 0; f < folds; ++f) {
    const int dev_bucket = (f + 1) % folds;
    Splits& s = out[static_cast<std::size_t>(f)];
    for (const auto& inst : instances) {
      const int b = bucket_of[static_cast<std::size_t>(inst.section)];
      if (b == f) {
        s.test.push_back(inst);
      } else if (b == dev_bucket) {
        s.dev.push_back(inst);
      } else {
        s.train.push_back(inst);
      }
    }
    if (s.train.empty() || s.dev.empty() || s.test.empty()) {
      throw Error(ErrorKind::corpus,
                  "cv fold " + std::to_string(f) + " produced an empty split");
    }
  }
  return out;
}

// ---- synthetic corpus -----------------------------------------------------

namespace {

std::string marker_token(std::size_t label, char side) {
  return "mk" + std::to_string(label) + side;
}

std::string connective_phrase(std::size_t label) {
  // One label gets a two-token connective so span handling is exercised.
  if (label == 1) return "cn" + std::to_string(label) + " indeed";
  return "cn" + std::to_string(label);
}

}  // namespace

std::vector<Instance> synth_corpus(const SynthSpec& spec, const LabelSet& labels) {
  if (spec.n == 0) throw Error(ErrorKind::config, "synthetic corpus needs n >= 1");
  if (spec.filler_vocab == 0) throw Error(ErrorKind::config, "filler_vocab must be >= 1");
  if (!spec.class_counts.empty() && spec.class_counts.size() != labels.size()) {
    throw Error(ErrorKind::config,
                "class_counts length " + std::to_string(spec.class_counts.size()) +
                    " does not match " + std::to_string(labels.size()) + " labels");
  }
  if (spec.multilabel_frac < 0.0 || spec.multilabel_frac > 1.0) {
    throw Error(ErrorKind::config, "multilabel_frac must lie in [0,1]");
  }

  // Expand per-class counts into a label sequence of length n.
  std::vector<std::size_t> label_of;
  label_of.reserve(spec.n);
  if (spec.class_counts.empty()) {
    for (std::size_t i = 0; i < spec.n; ++i) label_of.push_back(i % labels.size());
  } else {
    std::size_t total = 0;
    for (std::size_t c = 0; c < spec.class_counts.size(); ++c) {
      total += spec.class_counts[c];
      for (std::size_t i = 0; i < spec.class_counts[c]; ++i) label_of.push_back(c);
    }
    if (total != spec.n) {
      throw Error(ErrorKind::config, "class_counts sum " + std::to_string(total) +
                                         " does not equal n = " + std::to_string(spec.n));
    }
  }

  std::mt19937_64 rng(spec.seed);
  std::shuffle(label_of.begin(), label_of.end(), rng);

  std::uniform_int_distribution<std::size_t> len_dist(3, 8);
  std::uniform_int_distribution<std::size_t> filler_dist(0, spec.filler_vocab - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto make_arg = [&](std::size_t label, char side) {
    const std::size_t len = len_dist(rng);
    std::uniform_int_distribution<std::size_t> pos_dist(0, len - 1);
    const std::size_t marker_pos = pos_dist(rng);
    std::ostringstream os;
    for (std::size_t i = 0; i < len; ++i) {
      if (i) os << ' ';
      if (i == marker_pos) {
        os << marker_token(label, side);
      } else {
        os << 'w' << filler_dist(rng);
      }
    }
    return os.str();
  };

  std::vector<Instance> out;
  out.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const std::size_t label = label_of[i];
    Instance inst;
    std::ostringstream id;
    id << "synth-" << std::setw(5) << std::setfill('0') << i;
    inst.id = id.str();
    inst.arg1 = make_arg(label, 'a');
    inst.arg2 = make_arg(label, 'b');
    inst.conn = connective_phrase(label);
    inst.relations = {labels.names[label]};
    if (spec.multilabel_frac > 0.0 && labels.size() > 1 && unit(rng) < spec.multilabel_frac) {
      inst.relations.push_back(labels.names[(label + 1) % labels.size()]);
    }
    inst.section = static_cast<int>(i % 24);
    out.push_back(std::move(inst));
  }
  return out;
}

std::string file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open file for checksum: " + path);
  std::uint64_t h = 14695981039346656037ull;  // FNV-1a offset basis
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (!in) break;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace disco
