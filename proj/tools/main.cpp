#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "disco/checkpoint.hpp"
#include "disco/metrics.hpp"
#include "disco/train.hpp"

namespace fs = std::filesystem;
using disco::Error;
using disco::ErrorKind;
using nlohmann::json;

namespace {

int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::config: return 2;
    case ErrorKind::parse:
    case ErrorKind::label:
    case ErrorKind::instance:
    case ErrorKind::corpus: return 3;
    case ErrorKind::checkpoint: return 4;
    case ErrorKind::training: return 5;
    case ErrorKind::usage: return 64;
    default: return 1;
  }
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  out += '\'';
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  out << content;
  if (!out) throw Error(ErrorKind::io, "short write to " + path);
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, path + ": " + e.what());
  }
}

// ---- shared option bundles -------------------------------------------

struct LabelOpts {
  std::string task = "second_level";
  std::string labels_file;
  std::string positive;

  void attach(CLI::App* cmd) {
    cmd->add_option("--task", task, "label task: second_level, top_level, binary")
        ->check(CLI::IsMember({"second_level", "top_level", "binary"}));
    cmd->add_option("--labels", labels_file, "label inventory file, one name per line");
    cmd->add_option("--positive", positive, "positive class for the binary task");
  }

  disco::LabelSet resolve() const {
    const disco::LabelTask t = disco::label_task_from_name(task);
    if (t == disco::LabelTask::binary) {
      if (positive.empty()) {
        throw Error(ErrorKind::config, "binary task needs --positive <class>");
      }
      return disco::LabelSet::binary_one_vs_all(positive);
    }
    if (labels_file.empty()) {
      throw Error(ErrorKind::config, "task " + task + " needs --labels <file>");
    }
    return disco::LabelSet::from_file(labels_file, t);
  }
};

// Every training knob doubles as a long flag overriding the config file.
const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "d",          "hidden",          "k",
      "q1",         "q2",              "lr1",
      "lr2",        "lambda",          "w",
      "seed",       "min_count",       "batch_size",
      "phase1_epochs", "phase1_patience", "phase2_epochs",
      "phase2_patience", "teacher_end", "grad_clip",
      "skip_phase1", "fusion",         "decoder_init",
      "forget_bias_one", "embeddings"};
  return keys;
}

struct ConfigOpts {
  std::string config_file;
  std::map<std::string, std::string> overrides;
  std::map<std::string, CLI::Option*> opts;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "key=value config file");
    for (const auto& key : config_keys()) {
      opts[key] = cmd->add_option("--" + key, overrides[key], "override config key " + key)
                      ->group("Config overrides");
    }
  }

  disco::TrainConfig resolve() const {
    disco::TrainConfig cfg;
    if (!config_file.empty()) cfg = disco::TrainConfig::from_file(config_file);
    for (const auto& key : config_keys()) {
      if (opts.at(key)->count() > 0) cfg.set(key, overrides.at(key));
    }
    cfg.validate();
    return cfg;
  }
};

// ---- prediction core ------------------------------------------------------

struct Prediction {
  std::string id;
  int pred = 0;
  std::vector<double> dist;
  std::vector<int> gold;
};

std::vector<Prediction> predict_all(disco::Model& model, const std::vector<disco::Instance>& insts,
                                    std::size_t* skipped) {
  std::vector<Prediction> out;
  out.reserve(insts.size());
  for (const auto& inst : insts) {
    disco::EncodedInstance enc;
    try {
      enc = disco::encode_instance(inst, model.vocab, model.labels, true);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::instance && e.kind() != ErrorKind::label) throw;
      if (skipped) ++*skipped;
      std::cerr << "skipping " << inst.id << ": " << e.what() << '\n';
      continue;
    }
    disco::Tape tape(false);
    disco::ForwardOpts o;
    o.gold_target = false;
    disco::Forward f = disco::forward(tape, model, enc, o);
    Prediction p;
    p.id = enc.instance_id;
    p.pred = static_cast<int>(disco::argmax(f.dist));
    p.dist = f.dist.values();
    p.gold = enc.label_ids;
    out.push_back(std::move(p));
  }
  return out;
}

// Coarsening map for scoring a fine-grained checkpoint under a coarser task:
// second-level names collapse to their top-level prefix, and any task can be
// collapsed to positive-vs-other.
struct LabelMapping {
  std::vector<std::string> names;  // coarse class names
  std::vector<int> to_coarse;      // fine id -> coarse id
};

LabelMapping top_level_mapping(const disco::LabelSet& fine) {
  LabelMapping m;
  std::map<std::string, int> index;
  for (const auto& name : fine.names) {
    const std::string top = name.substr(0, name.find('.'));
    auto it = index.find(top);
    if (it == index.end()) {
      it = index.emplace(top, static_cast<int>(m.names.size())).first;
      m.names.push_back(top);
    }
    m.to_coarse.push_back(it->second);
  }
  return m;
}

LabelMapping binary_mapping(const disco::LabelSet& fine, const std::string& positive) {
  LabelMapping m;
  m.names = {positive, "Other"};
  for (const auto& name : fine.names) {
    const std::string top = name.substr(0, name.find('.'));
    m.to_coarse.push_back(name == positive || top == positive ? 0 : 1);
  }
  return m;
}

// ---- manifest plumbing -----------------------------------------------

disco::RunManifest make_manifest(const disco::TrainConfig& cfg, const std::string& corpus_path,
                                 const std::string& ckpt_path, const disco::LabelSet& labels,
                                 const json& extra) {
  disco::RunManifest m;
  m.seed = cfg.seed;
  m.corpus_checksum = disco::file_checksum(corpus_path);
  m.config = cfg.to_json();
  m.config["task"] = disco::label_task_name(labels.task);
  m.config["label_names"] = labels.names;
  for (auto it = extra.begin(); it != extra.end(); ++it) m.config[it.key()] = it.value();
  m.checkpoint_path = ckpt_path;
  return m;
}

void write_train_artifacts(const std::string& dir, const disco::Model& model,
                           const disco::RunManifest& manifest,
                           const std::vector<json>& history) {
  fs::create_directories(dir);
  disco::save_checkpoint(manifest.checkpoint_path, model, manifest);
  std::string lines;
  for (const auto& j : history) lines += j.dump() + "\n";
  write_file(dir + "/history.jsonl", lines);
  write_file(dir + "/manifest.json", manifest.to_json().dump(2) + "\n");
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string corpus;
  std::string scheme = "lin";
  std::string out_dir;
  LabelOpts labels;
  ConfigOpts config;
  int folds = 10;
  int fold = -1;  // worker mode: run exactly this CV fold
  int jobs = 1;
};

disco::Metrics eval_fold_test(disco::Model& model, const std::vector<disco::Instance>& test,
                              std::size_t* skipped) {
  auto preds = predict_all(model, test, skipped);
  std::vector<int> p;
  std::vector<std::vector<int>> g;
  for (const auto& pr : preds) {
    p.push_back(pr.pred);
    g.push_back(pr.gold);
  }
  return disco::evaluate(p, g, model.labels.size());
}

void run_one_cv_fold(const TrainArgs& a, const disco::LabelSet& labels,
                     const disco::TrainConfig& cfg, const std::vector<disco::Splits>& splits,
                     int fold) {
  const auto& sp = splits.at(fold);
  const std::string fold_dir = a.out_dir + "/fold" + std::to_string(fold);
  fs::create_directories(fold_dir);
  auto train = disco::duplicate_multilabel(sp.train);
  disco::TrainResult res = disco::train_model(train, sp.dev, labels, cfg, &std::cerr);
  json extra = {{"scheme", "cv"}, {"folds", a.folds}, {"fold", fold}};
  disco::RunManifest manifest =
      make_manifest(cfg, a.corpus, fold_dir + "/model.ckpt", labels, extra);
  write_train_artifacts(fold_dir, res.model, manifest, res.history);

  std::size_t skipped = 0;
  disco::Metrics m = eval_fold_test(res.model, sp.test, &skipped);
  json report;
  report["fold"] = fold;
  report["manifest"] = manifest.to_json();
  report["metrics"] = m.to_json();
  report["skipped"] = skipped;
  write_file(fold_dir + "/fold_metrics.json", report.dump(2) + "\n");
  std::cerr << "fold " << fold << ": test accuracy " << m.accuracy << ", macro F1 " << m.macro_f1
            << '\n';
}

void spawn_cv_workers(const TrainArgs& a, const std::vector<std::string>& raw_args) {
  std::string exe = raw_args.at(0);
  std::error_code ec;
  const fs::path self = fs::read_symlink("/proc/self/exe", ec);
  if (!ec) exe = self.string();

  std::string base = shell_quote(exe);
  for (std::size_t i = 1; i < raw_args.size(); ++i) base += " " + shell_quote(raw_args[i]);

  for (int start = 0; start < a.folds; start += a.jobs) {
    const int stop = std::min(a.folds, start + a.jobs);
    std::string cmd;
    for (int f = start; f < stop; ++f) {
      const std::string log = a.out_dir + "/fold" + std::to_string(f) + ".log";
      if (!cmd.empty()) cmd += " & ";
      cmd += base + " --fold " + std::to_string(f) + " 2> " + shell_quote(log);
    }
    cmd += " & wait";
    std::cerr << "running folds " << start << ".." << stop - 1 << '\n';
    if (std::system(cmd.c_str()) == -1) {
      throw Error(ErrorKind::io, "could not spawn fold workers");
    }
  }
  for (int f = 0; f < a.folds; ++f) {
    const std::string marker = a.out_dir + "/fold" + std::to_string(f) + "/fold_metrics.json";
    if (!fs::exists(marker)) {
      throw Error(ErrorKind::training, "fold " + std::to_string(f) + " produced no metrics; see " +
                                           a.out_dir + "/fold" + std::to_string(f) + ".log");
    }
  }
}

void aggregate_cv_dir(const std::string& out_dir, int folds) {
  std::vector<disco::Metrics> fold_metrics;
  json first_manifest;
  for (int f = 0; f < folds; ++f) {
    const json report = read_json_file(out_dir + "/fold" + std::to_string(f) +
                                       "/fold_metrics.json");
    if (f == 0) first_manifest = report.at("manifest");
    fold_metrics.push_back(disco::metrics_from_confusion(
        report.at("metrics").at("confusion").get<std::vector<std::vector<std::size_t>>>()));
  }
  disco::CvMetrics cv = disco::aggregate_cv(fold_metrics);
  json report;
  report["manifest"] = first_manifest;
  report["folds"] = folds;
  report["cv"] = cv.to_json();
  const std::string text = report.dump(2) + "\n";
  write_file(out_dir + "/cv_metrics.json", text);
  std::cout << text;
  std::cerr << "cv accuracy " << cv.accuracy_mean << " +- " << cv.accuracy_stddev << ", macro F1 "
            << cv.macro_f1_mean << " +- " << cv.macro_f1_stddev << '\n';
}

int cmd_train(const TrainArgs& a, const std::vector<std::string>& raw_args) {
  disco::LabelSet labels = a.labels.resolve();
  disco::TrainConfig cfg = a.config.resolve();

  disco::CorpusStats stats;
  auto instances = disco::load_corpus(a.corpus, labels, &stats);
  std::cerr << "corpus: " << stats.kept << " instances kept, " << stats.skipped_excluded
            << " excluded, " << stats.skipped_empty << " empty\n";

  if (a.scheme == "cv") {
    auto splits = disco::make_cv_splits(instances, a.folds, cfg.seed);
    if (a.fold >= 0) {
      if (a.fold >= a.folds) {
        throw Error(ErrorKind::usage, "--fold " + std::to_string(a.fold) + " out of range for " +
                                          std::to_string(a.folds) + " folds");
      }
      run_one_cv_fold(a, labels, cfg, splits, a.fold);
      return 0;
    }
    fs::create_directories(a.out_dir);
    if (a.jobs > 1) {
      spawn_cv_workers(a, raw_args);
    } else {
      for (int f = 0; f < a.folds; ++f) run_one_cv_fold(a, labels, cfg, splits, f);
    }
    aggregate_cv_dir(a.out_dir, a.folds);
    return 0;
  }

  if (a.fold >= 0) throw Error(ErrorKind::usage, "--fold only applies to --scheme cv");
  disco::Splits sp = disco::make_splits(instances, disco::split_scheme_from_name(a.scheme));
  auto train = disco::duplicate_multilabel(sp.train);
  std::cerr << "split " << a.scheme << ": train " << train.size() << " (after duplication), dev "
            << sp.dev.size() << ", test " << sp.test.size() << '\n';
  disco::TrainResult res = disco::train_model(train, sp.dev, labels, cfg, &std::cerr);
  disco::RunManifest manifest = make_manifest(cfg, a.corpus, a.out_dir + "/model.ckpt", labels,
                                              {{"scheme", a.scheme}});
  write_train_artifacts(a.out_dir, res.model, manifest, res.history);
  std::cerr << "best dev accuracy " << res.best_dev_accuracy << "; checkpoint at "
            << manifest.checkpoint_path << '\n';
  return 0;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string corpus;
  std::string scheme = "lin";
  std::string split = "test";
  std::string task;  // optional coarsening of the checkpoint's task
  std::string positive;
  std::string out;
};

const std::vector<disco::Instance>& pick_split(const disco::Splits& sp, const std::string& name) {
  if (name == "train") return sp.train;
  if (name == "dev") return sp.dev;
  return sp.test;
}

json eval_one_model(disco::Model& model, const std::vector<disco::Instance>& insts,
                    const EvalArgs& a, disco::Metrics* out_metrics) {
  std::size_t skipped = 0;
  auto preds = predict_all(model, insts, &skipped);
  if (preds.empty()) throw Error(ErrorKind::corpus, "no scorable instances in the chosen split");

  std::vector<int> p;
  std::vector<std::vector<int>> g;
  for (const auto& pr : preds) {
    p.push_back(pr.pred);
    g.push_back(pr.gold);
  }

  json report;
  std::vector<std::string> score_names = model.labels.names;
  std::size_t n_classes = model.labels.size();
  const std::string own_task = disco::label_task_name(model.labels.task);
  if (!a.task.empty() && a.task != own_task) {
    LabelMapping map;
    if (a.task == "top_level" && model.labels.task == disco::LabelTask::second_level) {
      map = top_level_mapping(model.labels);
    } else if (a.task == "binary") {
      if (a.positive.empty()) throw Error(ErrorKind::config, "--task binary needs --positive");
      map = binary_mapping(model.labels, a.positive);
    } else {
      throw Error(ErrorKind::config,
                  "cannot score a " + own_task + " model under task " + a.task);
    }
    for (auto& x : p) x = map.to_coarse.at(static_cast<std::size_t>(x));
    for (auto& gs : g)
      for (auto& x : gs) x = map.to_coarse.at(static_cast<std::size_t>(x));
    report["label_mapping"] = {{"from", own_task}, {"to", a.task}, {"classes", map.names}};
    score_names = map.names;
    n_classes = map.names.size();
  }

  disco::Metrics m = disco::evaluate(p, g, n_classes);
  report["metrics"] = m.to_json();
  report["skipped"] = skipped;
  std::cerr << m.to_table(score_names);
  if (out_metrics) *out_metrics = m;
  return report;
}

int cmd_eval(const EvalArgs& a) {
  if (a.scheme == "cv") {
    int folds = 0;
    while (fs::exists(a.checkpoint + "/fold" + std::to_string(folds) + "/model.ckpt")) ++folds;
    if (folds == 0) {
      throw Error(ErrorKind::checkpoint,
                  "no fold checkpoints under " + a.checkpoint + " (expected fold0/model.ckpt)");
    }
    auto first = disco::load_checkpoint(a.checkpoint + "/fold0/model.ckpt");
    auto instances = disco::load_corpus(a.corpus, first.model.labels, nullptr);
    const int manifest_folds = first.manifest.config.value("folds", folds);
    auto splits = disco::make_cv_splits(instances, manifest_folds, first.manifest.seed);
    std::vector<disco::Metrics> fold_metrics;
    json per_fold = json::array();
    for (int f = 0; f < folds; ++f) {
      auto lc = f == 0 ? std::move(first)
                       : disco::load_checkpoint(a.checkpoint + "/fold" + std::to_string(f) +
                                                "/model.ckpt");
      std::cerr << "fold " << f << ":\n";
      disco::Metrics m;
      json rep = eval_one_model(lc.model, pick_split(splits.at(f), a.split), a, &m);
      rep["fold"] = f;
      per_fold.push_back(std::move(rep));
      fold_metrics.push_back(std::move(m));
    }
    disco::CvMetrics cv = disco::aggregate_cv(fold_metrics);
    json report;
    report["manifest"] = read_json_file(a.checkpoint + "/fold0/manifest.json");
    report["scheme"] = "cv";
    report["split"] = a.split;
    report["per_fold"] = std::move(per_fold);
    report["cv"] = cv.to_json();
    const std::string text = report.dump(2) + "\n";
    std::cout << text;
    if (!a.out.empty()) write_file(a.out, text);
    std::cerr << "cv accuracy " << cv.accuracy_mean << " +- " << cv.accuracy_stddev
              << ", macro F1 " << cv.macro_f1_mean << " +- " << cv.macro_f1_stddev << '\n';
    return 0;
  }

  auto lc = disco::load_checkpoint(a.checkpoint);
  auto instances = disco::load_corpus(a.corpus, lc.model.labels, nullptr);
  disco::Splits sp = disco::make_splits(instances, disco::split_scheme_from_name(a.scheme));
  json report = eval_one_model(lc.model, pick_split(sp, a.split), a, nullptr);
  report["manifest"] = lc.manifest.to_json();
  report["scheme"] = a.scheme;
  report["split"] = a.split;
  const std::string text = report.dump(2) + "\n";
  std::cout << text;
  if (!a.out.empty()) write_file(a.out, text);
  return 0;
}

// ---- predict ---------------------------------------------------------

struct PredictArgs {
  std::string checkpoint;
  std::string corpus;
  std::string out;  // empty = stdout
};

int cmd_predict(const PredictArgs& a) {
  auto lc = disco::load_checkpoint(a.checkpoint);
  auto instances = disco::load_corpus(a.corpus, lc.model.labels, nullptr);
  std::size_t skipped = 0;
  auto preds = predict_all(lc.model, instances, &skipped);

  std::ostringstream body;
  body << json{{"manifest", lc.manifest.to_json()}}.dump() << '\n';
  for (const auto& p : preds) {
    json line;
    line["id"] = p.id;
    line["pred"] = p.pred;
    line["pred_label"] = lc.model.labels.name_of(p.pred);
    line["dist"] = p.dist;
    json gold = json::array();
    for (int gid : p.gold) gold.push_back(lc.model.labels.name_of(gid));
    line["gold"] = std::move(gold);
    body << line.dump() << '\n';
  }
  if (a.out.empty()) std::cout << body.str();
  else write_file(a.out, body.str());
  std::cerr << preds.size() << " predictions, " << skipped << " skipped\n";
  return 0;
}

// ---- dumps ----------------------------------------------------------------

disco::Instance load_single_instance(const std::string& path, const disco::LabelSet& labels) {
  auto insts = disco::load_corpus(path, labels, nullptr);
  if (insts.size() != 1) {
    throw Error(ErrorKind::usage, path + " must hold exactly one usable instance, found " +
                                      std::to_string(insts.size()));
  }
  return insts.front();
}

struct AttentionArgs {
  std::string checkpoint;
  std::string instance;
  std::string out;
  bool gold_conn = false;
};

int cmd_dump_attention(const AttentionArgs& a) {
  auto lc = disco::load_checkpoint(a.checkpoint);
  disco::Model& model = lc.model;
  const disco::Instance inst = load_single_instance(a.instance, model.labels);
  disco::EncodedInstance enc =
      disco::encode_instance(inst, model.vocab, model.labels, !a.gold_conn);

  disco::Tape tape(false);
  disco::ForwardOpts o;
  o.run_classifier = false;
  o.gold_target = a.gold_conn;
  disco::Forward f = disco::forward(tape, model, enc, o);

  const auto src = disco::decode_ids(enc.source_ids, model.vocab);
  const auto tgt = disco::decode_ids(enc.target_ids, model.vocab);

  std::ostringstream tsv;
  tsv << "# manifest " << lc.manifest.to_json().dump() << '\n';
  tsv << std::setprecision(17);
  for (const auto& tok : src) tsv << '\t' << tok;
  tsv << '\n';
  for (std::size_t t = 0; t < tgt.size(); ++t) {
    tsv << tgt[t];
    const auto& row = f.dec.attn.at(t).values();
    for (double x : row) tsv << '\t' << x;
    tsv << '\n';
  }
  if (a.out.empty()) std::cout << tsv.str();
  else write_file(a.out, tsv.str());
  std::cerr << tgt.size() << " x " << src.size() << " attention matrix for " << enc.instance_id
            << '\n';
  return 0;
}

struct NeighborArgs {
  std::string checkpoint;
  std::string instance;
  std::string out;
  std::size_t top_n = 2;
};

int cmd_dump_memory_neighbors(const NeighborArgs& a) {
  auto lc = disco::load_checkpoint(a.checkpoint);
  disco::Model& model = lc.model;
  if (model.memory.empty()) {
    throw Error(ErrorKind::checkpoint, a.checkpoint + " holds no memory matrix (trained without "
                                                      "phase 2?)");
  }
  const disco::Instance inst = load_single_instance(a.instance, model.labels);
  disco::EncodedInstance enc = disco::encode_instance(inst, model.vocab, model.labels, true);

  disco::Tape tape(false);
  disco::ForwardOpts o;
  o.gold_target = false;
  disco::Forward f = disco::forward(tape, model, enc, o);

  const auto& w = f.mem_weights.values();
  std::vector<std::size_t> order(w.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return w[x] > w[y]; });
  const std::size_t n = std::min(a.top_n, order.size());

  json neighbors = json::array();
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t col = order[r];
    json nb;
    nb["rank"] = r;
    nb["id"] = model.memory.column_ids[col];
    nb["weight"] = w[col];
    if (!model.memory.column_labels.empty()) {
      const int lab = model.memory.column_labels[col];
      nb["label"] = lab;
      nb["label_name"] = model.labels.name_of(lab);
    }
    neighbors.push_back(std::move(nb));
  }
  json report;
  report["manifest"] = lc.manifest.to_json();
  report["instance_id"] = enc.instance_id;
  report["predicted"] = model.labels.name_of(static_cast<int>(disco::argmax(f.dist)));
  report["top_n"] = a.top_n;
  report["neighbors"] = std::move(neighbors);
  const std::string text = report.dump(2) + "\n";
  if (a.out.empty()) std::cout << text;
  else write_file(a.out, text);
  return 0;
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::string counts;
  std::string labels_file;
  std::string labels_out;
  std::size_t n = 100;
  std::size_t classes = 4;
  std::size_t filler_vocab = 60;
  double multilabel_frac = 0.0;
  std::uint64_t seed = 1;
};

int cmd_synth(const SynthArgs& a) {
  disco::LabelSet labels;
  if (!a.labels_file.empty()) {
    labels = disco::LabelSet::from_file(a.labels_file, disco::LabelTask::second_level);
  } else {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < a.classes; ++i) names.push_back("Class" + std::to_string(i));
    labels = disco::LabelSet::from_names(std::move(names), disco::LabelTask::second_level);
  }

  disco::SynthSpec spec;
  spec.n = a.n;
  spec.filler_vocab = a.filler_vocab;
  spec.multilabel_frac = a.multilabel_frac;
  spec.seed = a.seed;
  if (!a.counts.empty()) {
    std::istringstream in(a.counts);
    std::string piece;
    while (std::getline(in, piece, ',')) {
      try {
        spec.class_counts.push_back(std::stoull(piece));
      } catch (const std::exception&) {
        throw Error(ErrorKind::config, "--counts needs comma-separated integers, got \"" +
                                           piece + "\"");
      }
    }
  }

  auto insts = disco::synth_corpus(spec, labels);
  disco::save_corpus(a.out, insts);
  if (!a.labels_out.empty()) {
    std::string text;
    for (const auto& name : labels.names) text += name + "\n";
    write_file(a.labels_out, text);
  }
  std::cerr << "wrote " << insts.size() << " instances to " << a.out << " (checksum "
            << disco::file_checksum(a.out) << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> raw_args(argv, argv + argc);
  CLI::App app{"encoder-decoder discourse relation classifier"};
  app.require_subcommand(1);
  bool no_finite_checks = false;
  app.add_flag("--no-finite-checks", no_finite_checks,
               "skip NaN/Inf detection in tensor ops (marginally faster)");

  TrainArgs ta;
  auto* t = app.add_subcommand("train", "two-phase training; writes checkpoint + history");
  t->add_option("--corpus", ta.corpus, "JSON-lines corpus")->required();
  t->add_option("--scheme", ta.scheme, "split scheme: lin, ji, cv")
      ->check(CLI::IsMember({"lin", "ji", "cv"}));
  t->add_option("--out", ta.out_dir, "output directory")->required();
  t->add_option("--folds", ta.folds, "fold count for --scheme cv");
  t->add_option("--fold", ta.fold, "run a single CV fold (worker mode)");
  t->add_option("--jobs", ta.jobs, "parallel fold workers for --scheme cv");
  ta.labels.attach(t);
  ta.config.attach(t);

  EvalArgs ea;
  auto* e = app.add_subcommand("eval", "score a checkpoint on a corpus split");
  e->add_option("--checkpoint", ea.checkpoint,
                "model file, or a CV output directory for --scheme cv")
      ->required();
  e->add_option("--corpus", ea.corpus, "JSON-lines corpus")->required();
  e->add_option("--scheme", ea.scheme, "split scheme: lin, ji, cv")
      ->check(CLI::IsMember({"lin", "ji", "cv"}));
  e->add_option("--split", ea.split, "which split to score")
      ->check(CLI::IsMember({"train", "dev", "test"}));
  e->add_option("--task", ea.task, "coarsen labels for scoring: top_level or binary")
      ->check(CLI::IsMember({"second_level", "top_level", "binary"}));
  e->add_option("--positive", ea.positive, "positive class for --task binary");
  e->add_option("--out", ea.out, "also write the report JSON here");

  PredictArgs pa;
  auto* p = app.add_subcommand("predict", "per-instance predictions as JSON lines");
  p->add_option("--checkpoint", pa.checkpoint, "model file")->required();
  p->add_option("--corpus", pa.corpus, "JSON-lines corpus")->required();
  p->add_option("--out", pa.out, "output file (default stdout)");

  AttentionArgs aa;
  auto* da = app.add_subcommand("dump-attention", "attention matrix TSV for one instance");
  da->add_option("--checkpoint", aa.checkpoint, "model file")->required();
  da->add_option("--instance", aa.instance, "file holding one corpus-format instance")
      ->required();
  da->add_flag("--gold-conn", aa.gold_conn,
               "decode the annotated connective instead of the placeholder");
  da->add_option("--out", aa.out, "output file (default stdout)");

  NeighborArgs na;
  auto* dm = app.add_subcommand("dump-memory-neighbors",
                                "top memory columns attended for one instance");
  dm->add_option("--checkpoint", na.checkpoint, "model file")->required();
  dm->add_option("--instance", na.instance, "file holding one corpus-format instance")
      ->required();
  dm->add_option("--top-n", na.top_n, "how many neighbors to list");
  dm->add_option("--out", na.out, "output file (default stdout)");

  SynthArgs sa;
  auto* s = app.add_subcommand("synth", "generate a synthetic corpus");
  s->add_option("--out", sa.out, "output corpus path")->required();
  s->add_option("--n", sa.n, "instance count");
  s->add_option("--classes", sa.classes, "label count when no --labels file is given");
  s->add_option("--counts", sa.counts, "comma-separated per-class counts (sum must equal --n)");
  s->add_option("--labels", sa.labels_file, "label inventory file");
  s->add_option("--labels-out", sa.labels_out, "also write the label names here");
  s->add_option("--filler-vocab", sa.filler_vocab, "filler token pool size");
  s->add_option("--multilabel-frac", sa.multilabel_frac, "fraction with a second label");
  s->add_option("--seed", sa.seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : 64;
  }

  disco::set_finite_checks(!no_finite_checks);
  try {
    if (app.got_subcommand(t)) return cmd_train(ta, raw_args);
    if (app.got_subcommand(e)) return cmd_eval(ea);
    if (app.got_subcommand(p)) return cmd_predict(pa);
    if (app.got_subcommand(da)) return cmd_dump_attention(aa);
    if (app.got_subcommand(dm)) return cmd_dump_memory_neighbors(na);
    if (app.got_subcommand(s)) return cmd_synth(sa);
  } catch (const Error& err) {
    std::cerr << "error (" << disco::error_kind_name(err.kind()) << "): " << err.what() << '\n';
    return exit_code_for(err.kind());
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
