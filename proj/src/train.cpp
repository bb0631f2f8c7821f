#include "disco/train.hpp"

#include "disco/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace disco {

using nlohmann::json;

// ---- TrainConfig ------------------------------------------------------

namespace {

std::size_t parse_size(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size() || v < 0) throw std::invalid_argument(value);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw Error(ErrorKind::config, "config key " + key + " needs a non-negative integer, got \"" +
                                       value + "\"");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::config,
                "config key " + key + " needs a number, got \"" + value + "\"");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  throw Error(ErrorKind::config,
              "config key " + key + " needs true/false, got \"" + value + "\"");
}

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "d") d = parse_size(key, value);
  else if (key == "hidden") hidden = parse_size(key, value);
  else if (key == "k") k = parse_size(key, value);
  else if (key == "q1") q1 = parse_double(key, value);
  else if (key == "q2") q2 = parse_double(key, value);
  else if (key == "lr1") lr1 = parse_double(key, value);
  else if (key == "lr2") lr2 = parse_double(key, value);
  else if (key == "lambda") lambda = parse_double(key, value);
  else if (key == "w") w = parse_double(key, value);
  else if (key == "seed") seed = parse_size(key, value);
  else if (key == "min_count") min_count = parse_size(key, value);
  else if (key == "batch_size") batch_size = parse_size(key, value);
  else if (key == "phase1_epochs") phase1_epochs = parse_size(key, value);
  else if (key == "phase1_patience") phase1_patience = parse_size(key, value);
  else if (key == "phase2_epochs") phase2_epochs = parse_size(key, value);
  else if (key == "phase2_patience") phase2_patience = parse_size(key, value);
  else if (key == "teacher_end") teacher_end = parse_double(key, value);
  else if (key == "grad_clip") grad_clip = parse_double(key, value);
  else if (key == "skip_phase1") skip_phase1 = parse_bool(key, value);
  else if (key == "fusion") {
    if (value == "sum") fusion_concat = false;
    else if (value == "concat") fusion_concat = true;
    else throw Error(ErrorKind::config, "config key fusion must be sum or concat");
  } else if (key == "decoder_init") {
    if (value == "encoder") decoder_zero_init = false;
    else if (value == "zero") decoder_zero_init = true;
    else throw Error(ErrorKind::config, "config key decoder_init must be encoder or zero");
  } else if (key == "forget_bias_one") forget_bias_one = parse_bool(key, value);
  else if (key == "embeddings") embeddings = value;
  else throw Error(ErrorKind::config, "unknown config key \"" + key + "\"");
}

TrainConfig TrainConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open config file: " + path);
  TrainConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::config,
                  path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

void TrainConfig::validate() const {
  if (d == 0 || hidden == 0 || k == 0) {
    throw Error(ErrorKind::config, "d, hidden, and k must all be >= 1");
  }
  if (q1 < 0.0 || q1 >= 1.0 || q2 < 0.0 || q2 >= 1.0) {
    throw Error(ErrorKind::config, "dropout rates must lie in [0,1)");
  }
  if (lr1 <= 0.0 || lr2 <= 0.0) throw Error(ErrorKind::config, "learning rates must be positive");
  if (lambda < 0.0) throw Error(ErrorKind::config, "lambda must be non-negative");
  if (w < 0.0 || w > 1.0) throw Error(ErrorKind::config, "w must lie in [0,1]");
  if (teacher_end < 0.0 || teacher_end > 1.0) {
    throw Error(ErrorKind::config, "teacher_end must lie in [0,1]");
  }
  if (batch_size == 0) throw Error(ErrorKind::config, "batch_size must be >= 1");
  if (phase2_epochs == 0) throw Error(ErrorKind::config, "phase2_epochs must be >= 1");
  if (grad_clip < 0.0) throw Error(ErrorKind::config, "grad_clip must be non-negative");
}

json TrainConfig::to_json() const {
  json j;
  j["d"] = d;
  j["hidden"] = hidden;
  j["k"] = k;
  j["q1"] = q1;
  j["q2"] = q2;
  j["lr1"] = lr1;
  j["lr2"] = lr2;
  j["lambda"] = lambda;
  j["w"] = w;
  j["seed"] = seed;
  j["min_count"] = min_count;
  j["batch_size"] = batch_size;
  j["phase1_epochs"] = phase1_epochs;
  j["phase1_patience"] = phase1_patience;
  j["phase2_epochs"] = phase2_epochs;
  j["phase2_patience"] = phase2_patience;
  j["teacher_end"] = teacher_end;
  j["grad_clip"] = grad_clip;
  j["skip_phase1"] = skip_phase1;
  j["fusion"] = fusion_concat ? "concat" : "sum";
  j["decoder_init"] = decoder_zero_init ? "zero" : "encoder";
  j["forget_bias_one"] = forget_bias_one;
  j["embeddings"] = embeddings;
  return j;
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.d = d;
  m.hidden = hidden;
  m.k = k;
  m.fusion_concat = fusion_concat;
  m.decoder_zero_init = decoder_zero_init;
  m.forget_bias_one = forget_bias_one;
  return m;
}

// ---- losses -------------------------------------------------------------

namespace {

Tensor l2_term(Tape& tape, double lambda, const std::vector<Tensor>& theta) {
  std::vector<Tensor> squares;
  squares.reserve(theta.size());
  for (const Tensor& p : theta) squares.push_back(sumsq(tape, p));
  return scale(tape, sum(tape, stack_scalars(tape, squares)), lambda / 2.0);
}

}  // namespace

Tensor loss_decoder(Tape& tape, const std::vector<Tensor>& logits,
                    const std::vector<std::size_t>& target_ids, const std::vector<bool>& mask,
                    double lambda, const std::vector<Tensor>& theta_de) {
  if (logits.size() != target_ids.size() || mask.size() != target_ids.size()) {
    throw Error(ErrorKind::dimension,
                "loss_decoder: got " + std::to_string(logits.size()) + " logit rows, " +
                    std::to_string(target_ids.size()) + " targets, " +
                    std::to_string(mask.size()) + " mask entries");
  }
  std::vector<Tensor> terms;
  for (std::size_t t = 0; t < logits.size(); ++t) {
    if (!mask[t]) continue;
    terms.push_back(pick(tape, log_softmax(tape, logits[t]), target_ids[t]));
  }
  if (terms.empty()) {
    throw Error(ErrorKind::instance, "loss_decoder: every position is masked out");
  }
  Tensor ce = scale(tape, sum(tape, stack_scalars(tape, terms)),
                    -1.0 / static_cast<double>(terms.size()));
  if (lambda == 0.0) return ce;
  return add(tape, ce, l2_term(tape, lambda, theta_de));
}

Tensor loss_classifier(Tape& tape, const Tensor& dist, int gold, double lambda,
                       const std::vector<Tensor>& theta_cl) {
  if (gold < 0 || static_cast<std::size_t>(gold) >= dist.size()) {
    throw Error(ErrorKind::label, "gold label " + std::to_string(gold) +
                                      " out of range for " + std::to_string(dist.size()) +
                                      " classes");
  }
  Tensor ce = scale(tape, log(tape, pick(tape, dist, static_cast<std::size_t>(gold))), -1.0);
  if (lambda == 0.0) return ce;
  return add(tape, ce, l2_term(tape, lambda, theta_cl));
}

Tensor loss_joint(Tape& tape, const Tensor& l_de, const Tensor& l_cl, double w) {
  if (w < 0.0 || w > 1.0) {
    throw Error(ErrorKind::config, "joint weight w must lie in [0,1], got " + std::to_string(w));
  }
  return add(tape, scale(tape, l_de, w), scale(tape, l_cl, 1.0 - w));
}

// ---- Optimizer ----------------------------------------------------------

void Optimizer::add_group(std::vector<Tensor> params, double lr) {
  Group g;
  g.params = std::move(params);
  g.lr = lr;
  g.m.resize(g.params.size());
  g.v.resize(g.params.size());
  for (std::size_t i = 0; i < g.params.size(); ++i) {
    g.m[i].assign(g.params[i].size(), 0.0);
    g.v[i].assign(g.params[i].size(), 0.0);
  }
  groups_.push_back(std::move(g));
}

void Optimizer::step() {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  bool any_grad = false;
  for (auto& g : groups_)
    for (auto& p : g.params) any_grad = any_grad || p.has_grad();
  if (!any_grad) {
    throw Error(ErrorKind::training,
                "optimizer step with no gradients anywhere — backward was not run");
  }

  if (grad_clip_ > 0.0) {
    double norm_sq = 0.0;
    for (auto& g : groups_)
      for (auto& p : g.params) {
        if (!p.has_grad()) continue;
        for (double x : p.grad()) norm_sq += x * x;
      }
    const double norm = std::sqrt(norm_sq);
    if (norm > grad_clip_) {
      const double sc = grad_clip_ / norm;
      for (auto& g : groups_)
        for (auto& p : g.params) {
          if (!p.has_grad()) continue;
          for (double& x : p.grad()) x *= sc;
        }
    }
  }

  ++t_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (auto& g : groups_) {
    for (std::size_t i = 0; i < g.params.size(); ++i) {
      Tensor& p = g.params[i];
      auto& vals = p.values();
      auto& m = g.m[i];
      auto& v = g.v[i];
      const bool has = p.has_grad();
      const std::vector<double>* grad = has ? &p.grad() : nullptr;
      for (std::size_t j = 0; j < vals.size(); ++j) {
        const double gj = has ? (*grad)[j] : 0.0;
        m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
        v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        vals[j] -= g.lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }
}

void Optimizer::zero_grad() {
  for (auto& g : groups_)
    for (auto& p : g.params) p.zero_grad();
}

// ---- training loop --------------------------------------------------------

namespace {

struct EncodedSet {
  std::vector<EncodedInstance> gold;  // gold-connective targets (training form)
  std::vector<EncodedInstance> test;  // placeholder targets (prediction form)
  std::size_t skipped = 0;
};

EncodedSet encode_all(const std::vector<Instance>& insts, const Vocab& vocab,
                      const LabelSet& labels, std::ostream* log) {
  EncodedSet out;
  for (const auto& inst : insts) {
    try {
      EncodedInstance g = encode_instance(inst, vocab, labels, false);
      EncodedInstance t = encode_instance(inst, vocab, labels, true);
      out.gold.push_back(std::move(g));
      out.test.push_back(std::move(t));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::instance && e.kind() != ErrorKind::label) throw;
      ++out.skipped;
      if (log) *log << "skipping " << inst.id << ": " << e.what() << '\n';
    }
  }
  return out;
}

double scheduled_teacher_prob(std::size_t epoch, std::size_t budget, double floor) {
  if (budget <= 1) return floor;
  const double frac = static_cast<double>(epoch - 1) / static_cast<double>(budget - 1);
  return 1.0 - (1.0 - floor) * frac;
}

std::vector<bool> all_on(std::size_t n) { return std::vector<bool>(n, true); }

void scale_grads(const std::vector<Tensor>& params, double sc) {
  if (sc == 1.0) return;
  for (const Tensor& p : params) {
    Tensor t = p;
    if (!t.has_grad()) continue;
    for (double& g : t.grad()) g *= sc;
  }
}

}  // namespace

TrainResult train_model(const std::vector<Instance>& train_insts,
                        const std::vector<Instance>& dev_insts, const LabelSet& labels,
                        const TrainConfig& cfg, std::ostream* log) {
  cfg.validate();
  if (train_insts.empty()) throw Error(ErrorKind::corpus, "training split is empty");
  if (dev_insts.empty()) throw Error(ErrorKind::corpus, "dev split is empty");

  std::mt19937_64 rng(cfg.seed);

  Vocab vocab = build_vocab(train_insts, cfg.min_count);
  std::optional<Tensor> pre;
  if (!cfg.embeddings.empty()) pre = load_embeddings(cfg.embeddings, vocab, cfg.d, rng);

  TrainResult res{Model::init(cfg.model_config(), std::move(vocab), labels, rng, pre), {}, 0.0,
                  0.0, 0, 0};
  Model& model = res.model;

  EncodedSet train = encode_all(train_insts, model.vocab, labels, log);
  EncodedSet dev = encode_all(dev_insts, model.vocab, labels, log);
  res.skipped_train = train.skipped;
  res.skipped_dev = dev.skipped;
  if (train.gold.empty()) throw Error(ErrorKind::corpus, "no usable training instances");
  if (dev.gold.empty()) throw Error(ErrorKind::corpus, "no usable dev instances");

  const auto theta_de = model.encoder_decoder_params();
  const auto theta_cl = model.classifier_params();

  auto dev_decoder_loss = [&]() {
    double total = 0.0;
    for (const auto& enc : dev.gold) {
      Tape tape(false);
      ForwardOpts o;
      o.run_classifier = false;
      Forward f = forward(tape, model, enc, o);
      total += loss_decoder(tape, f.dec.logits, enc.target_ids, all_on(enc.target_ids.size()),
                            cfg.lambda, theta_de)
                   .item();
    }
    return total / static_cast<double>(dev.gold.size());
  };

  auto emit = [&](json j) {
    if (log) *log << j.dump() << '\n';
    res.history.push_back(std::move(j));
  };

  std::vector<std::size_t> order(train.gold.size());
  std::iota(order.begin(), order.end(), 0);

  // ---- phase 1: decoder objective only, scheduled sampling ----
  if (!cfg.skip_phase1 && cfg.phase1_epochs > 0) {
    Optimizer opt;
    opt.add_group(theta_de, cfg.lr1);
    opt.set_grad_clip(cfg.grad_clip);

    double best = dev_decoder_loss();
    auto best_snap = model.snapshot();
    std::size_t patience = cfg.phase1_patience;
    emit({{"phase", 1}, {"epoch", 0}, {"dev_decoder_loss", best}});

    for (std::size_t epoch = 1; epoch <= cfg.phase1_epochs; ++epoch) {
      const double tp = scheduled_teacher_prob(epoch, cfg.phase1_epochs, cfg.teacher_end);
      std::shuffle(order.begin(), order.end(), rng);
      double total = 0.0;
      try {
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
          const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
          opt.zero_grad();
          for (std::size_t i = start; i < stop; ++i) {
            const auto& enc = train.gold[order[i]];
            Tape tape;
            ForwardOpts o;
            o.training = true;
            o.teacher_prob = tp;
            o.run_classifier = false;
            o.q1 = cfg.q1;
            o.rng = &rng;
            Forward f = forward(tape, model, enc, o);
            Tensor l = loss_decoder(tape, f.dec.logits, enc.target_ids,
                                    all_on(enc.target_ids.size()), cfg.lambda, theta_de);
            tape.backward(l);
            total += l.item();
          }
          scale_grads(theta_de, 1.0 / static_cast<double>(stop - start));
          opt.step();
        }
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::numeric) throw;
        throw Error(ErrorKind::training, "phase 1 diverged at epoch " + std::to_string(epoch) +
                                             ": " + e.what());
      }
      const double dev_l = dev_decoder_loss();
      const bool improved = dev_l < best - 1e-9;
      if (improved) {
        best = dev_l;
        best_snap = model.snapshot();
        patience = cfg.phase1_patience;
      } else if (patience > 0) {
        --patience;
      }
      emit({{"phase", 1},
            {"epoch", epoch},
            {"teacher_prob", tp},
            {"train_decoder_loss", total / static_cast<double>(order.size())},
            {"dev_decoder_loss", dev_l},
            {"best", improved}});
      if (patience == 0) break;
    }
    model.restore(best_snap);
    res.best_phase1_dev_loss = best;
  }

  // ---- phase 2: joint objective with the memory attached ----
  {
    std::vector<std::string> column_ids;
    std::vector<int> column_labels;
    column_ids.reserve(train.gold.size());
    column_labels.reserve(train.gold.size());
    for (const auto& enc : train.gold) {
      column_ids.push_back(enc.instance_id);
      column_labels.push_back(enc.label_ids.front());
    }
    model.memory = MemoryMatrix::init(model.fused_width(), column_ids, rng);
    model.memory.column_labels = std::move(column_labels);

    Optimizer opt;
    opt.add_group(theta_de, cfg.lr1);
    opt.add_group(theta_cl, cfg.lr2);
    opt.set_grad_clip(cfg.grad_clip);

    auto all_params = model.all_params();
    double best_acc = -1.0;
    double best_loss = std::numeric_limits<double>::infinity();
    auto best_snap = model.snapshot();
    std::size_t patience = cfg.phase2_patience;

    std::vector<std::vector<int>> dev_gold_labels;
    dev_gold_labels.reserve(dev.test.size());
    for (const auto& enc : dev.test) dev_gold_labels.push_back(enc.label_ids);

    for (std::size_t epoch = 1; epoch <= cfg.phase2_epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      double total = 0.0;
      std::size_t correct = 0;
      try {
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
          const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
          opt.zero_grad();
          for (std::size_t i = start; i < stop; ++i) {
            const auto& enc = train.gold[order[i]];
            Tape tape;
            ForwardOpts o;
            o.training = true;
            o.teacher_prob = cfg.teacher_end;
            o.q1 = cfg.q1;
            o.q2 = cfg.q2;
            o.exclude_id = enc.instance_id;
            o.rng = &rng;
            Forward f = forward(tape, model, enc, o);
            const int gold = enc.label_ids.front();
            Tensor l_cl = loss_classifier(tape, f.dist, gold, cfg.lambda, theta_cl);
            Tensor joint =
                cfg.w > 0.0
                    ? loss_joint(tape,
                                 loss_decoder(tape, f.dec.logits, enc.target_ids,
                                              all_on(enc.target_ids.size()), cfg.lambda,
                                              theta_de),
                                 l_cl, cfg.w)
                    : l_cl;  // w = 0 zeroes the decoder term of the joint loss
            tape.backward(joint);
            memory_write(model.memory, enc.instance_id, f.h_star);
            total += joint.item();
            if (static_cast<int>(argmax(f.dist)) == gold) ++correct;
          }
          scale_grads(all_params, 1.0 / static_cast<double>(stop - start));
          opt.step();
        }
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::numeric) throw;
        throw Error(ErrorKind::training, "phase 2 diverged at epoch " + std::to_string(epoch) +
                                             ": " + e.what());
      }

      // Dev pass: classification on the placeholder form; the decoder part
      // of the dev joint loss uses the gold-target form.
      std::vector<int> preds;
      double dev_cl = 0.0;
      preds.reserve(dev.test.size());
      for (const auto& enc : dev.test) {
        Tape tape(false);
        ForwardOpts o;
        o.gold_target = false;
        Forward f = forward(tape, model, enc, o);
        preds.push_back(static_cast<int>(argmax(f.dist)));
        dev_cl += loss_classifier(tape, f.dist, enc.label_ids.front(), cfg.lambda, theta_cl)
                      .item();
      }
      dev_cl /= static_cast<double>(dev.test.size());
      const double dev_joint = cfg.w * (cfg.w > 0.0 ? dev_decoder_loss() : 0.0) +
                               (1.0 - cfg.w) * dev_cl;
      const Metrics dev_metrics = evaluate(preds, dev_gold_labels, model.labels.size());

      const bool acc_improved = dev_metrics.accuracy > best_acc + 1e-12;
      const bool loss_improved = dev_joint < best_loss - 1e-9;
      if (acc_improved) {
        best_acc = dev_metrics.accuracy;
        best_snap = model.snapshot();
      }
      if (loss_improved) best_loss = dev_joint;
      if (acc_improved || loss_improved) {
        patience = cfg.phase2_patience;
      } else if (patience > 0) {
        --patience;
      }
      emit({{"phase", 2},
            {"epoch", epoch},
            {"train_joint_loss", total / static_cast<double>(order.size())},
            {"train_accuracy",
             static_cast<double>(correct) / static_cast<double>(order.size())},
            {"dev_accuracy", dev_metrics.accuracy},
            {"dev_joint_loss", dev_joint},
            {"best", acc_improved}});
      if (patience == 0) break;
    }
    model.restore(best_snap);
    res.best_dev_accuracy = best_acc < 0.0 ? 0.0 : best_acc;
  }

  return res;
}

}  // namespace disco
