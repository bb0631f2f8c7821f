#include "disco/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace disco {

namespace {

bool whitelisted(char c) {
  if (c >= 'a' && c <= 'z') return true;
  if (c >= '0' && c <= '9') return true;
  static const std::string punct = ".,!?;:'\"()-$%&";
  return punct.find(c) != std::string::npos;
}

// Marks that split into standalone tokens; apostrophe and hyphen stay inside
// words ("don't", "well-known").
bool standalone(char c) {
  static const std::string punct = ".,!?;:\"()$%&";
  return punct.find(c) != std::string::npos;
}

}  // namespace

std::vector<std::string> normalize_text(const std::string& raw) {
  std::string cleaned;
  cleaned.reserve(raw.size() * 2);
  for (char ch : raw) {
    char c = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (!whitelisted(c)) {
      cleaned.push_back(' ');
    } else if (standalone(c)) {
      cleaned.push_back(' ');
      cleaned.push_back(c);
      cleaned.push_back(' ');
    } else {
      cleaned.push_back(c);
    }
  }
  std::vector<std::string> tokens;
  std::istringstream in(cleaned);
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

// ---- Vocab ------------------------------------------------------------

Vocab::Vocab() {
  id_to_token = {"<pad>", "<unk>", "<conn>", "</conn>", "impl_conn"};
  for (std::size_t i = 0; i < id_to_token.size(); ++i) token_to_id[id_to_token[i]] = i;
}

std::size_t Vocab::id_of(const std::string& tok) const {
  auto it = token_to_id.find(tok);
  return it == token_to_id.end() ? unk_id : it->second;
}

const std::string& Vocab::token_of(std::size_t id) const {
  if (id >= id_to_token.size()) {
    throw Error(ErrorKind::dimension,
                "token id " + std::to_string(id) + " out of range for vocab of " +
                    std::to_string(id_to_token.size()));
  }
  return id_to_token[id];
}

std::size_t Vocab::add(const std::string& tok) {
  auto it = token_to_id.find(tok);
  if (it != token_to_id.end()) return it->second;
  const std::size_t id = id_to_token.size();
  id_to_token.push_back(tok);
  token_to_id[tok] = id;
  return id;
}

Vocab build_vocab(const std::vector<std::vector<std::string>>& sequences,
                  std::size_t min_count) {
  if (min_count < 1) throw Error(ErrorKind::config, "min_count must be >= 1");
  if (sequences.empty()) throw Error(ErrorKind::corpus, "cannot build a vocabulary from nothing");
  std::map<std::string, std::size_t> freq;  // ordered: lexicographic tie-break for free
  for (const auto& seq : sequences)
    for (const auto& tok : seq) ++freq[tok];

  std::vector<std::pair<std::string, std::size_t>> by_freq(freq.begin(), freq.end());
  std::stable_sort(by_freq.begin(), by_freq.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocab v;
  for (const auto& [tok, count] : by_freq) {
    if (count >= min_count) v.add(tok);
  }
  return v;
}

Vocab build_vocab(const std::vector<Instance>& instances, std::size_t min_count) {
  if (instances.empty()) throw Error(ErrorKind::corpus, "cannot build a vocabulary from nothing");
  std::vector<std::vector<std::string>> seqs;
  seqs.reserve(instances.size() * 3);
  for (const auto& inst : instances) {
    seqs.push_back(normalize_text(inst.arg1));
    seqs.push_back(normalize_text(inst.arg2));
    if (!inst.conn.empty()) seqs.push_back(normalize_text(inst.conn));
  }
  return build_vocab(seqs, min_count);
}

// ---- encoding ---------------------------------------------------------

namespace {

std::vector<std::size_t> to_ids(const std::vector<std::string>& tokens, const Vocab& vocab) {
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab.id_of(t));
  return ids;
}

}  // namespace

EncodedInstance encode_instance(const Instance& inst, const Vocab& vocab,
                                const LabelSet& labels, bool test_mode) {
  auto a1 = to_ids(normalize_text(inst.arg1), vocab);
  auto a2 = to_ids(normalize_text(inst.arg2), vocab);
  if (a1.empty() || a2.empty()) {
    throw Error(ErrorKind::instance,
                "instance " + inst.id + " has an empty argument after normalization");
  }

  EncodedInstance enc;
  enc.instance_id = inst.id;
  enc.source_ids = a1;
  enc.source_ids.insert(enc.source_ids.end(), a2.begin(), a2.end());

  std::vector<std::size_t> conn_ids;
  if (!test_mode && !inst.conn.empty()) {
    conn_ids = to_ids(normalize_text(inst.conn), vocab);
  }
  if (conn_ids.empty()) conn_ids = {Vocab::impl_conn_id};

  enc.conn_start = a1.size();
  enc.target_ids = a1;
  enc.target_ids.push_back(Vocab::conn_open_id);
  enc.target_ids.insert(enc.target_ids.end(), conn_ids.begin(), conn_ids.end());
  enc.target_ids.push_back(Vocab::conn_close_id);
  enc.conn_end = enc.target_ids.size();
  enc.target_ids.insert(enc.target_ids.end(), a2.begin(), a2.end());

  for (const auto& rel : inst.relations) {
    auto id = labels.map_relation(rel);
    if (!id) {
      throw Error(ErrorKind::label,
                  "instance " + inst.id + " carries label \"" + rel +
                      "\" outside the active label set");
    }
    if (std::find(enc.label_ids.begin(), enc.label_ids.end(), *id) == enc.label_ids.end()) {
      enc.label_ids.push_back(*id);
    }
  }
  if (enc.label_ids.empty()) {
    throw Error(ErrorKind::instance, "instance " + inst.id + " has no usable label");
  }
  return enc;
}

std::vector<std::string> decode_ids(const std::vector<std::size_t>& ids, const Vocab& vocab) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (auto id : ids) out.push_back(vocab.token_of(id));
  return out;
}

// ---- embeddings ---------------------------------------------------------

Tensor init_embeddings(const Vocab& vocab, std::size_t d, std::mt19937_64& rng) {
  if (d == 0) throw Error(ErrorKind::config, "embedding size must be >= 1");
  return Tensor::uniform({vocab.size(), d}, -0.1, 0.1, rng, true);
}

Tensor load_embeddings(const std::string& path, const Vocab& vocab, std::size_t d,
                       std::mt19937_64& rng) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open embedding file: " + path);

  std::string header;
  if (!std::getline(in, header)) {
    throw Error(ErrorKind::parse, path + ":1: missing header line");
  }
  std::istringstream hs(header);
  std::size_t count = 0, dim = 0;
  if (!(hs >> count >> dim)) {
    throw Error(ErrorKind::parse, path + ":1: header must be \"count dim\"");
  }
  if (dim != d) {
    throw Error(ErrorKind::config, "embedding file has dimension " + std::to_string(dim) +
                                       " but the model is configured for " + std::to_string(d));
  }

  Tensor emb = init_embeddings(vocab, d, rng);
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token)) {
      throw Error(ErrorKind::parse, path + ":" + std::to_string(lineno) + ": missing token");
    }
    std::vector<double> vec;
    vec.reserve(d);
    double v;
    while (ls >> v) vec.push_back(v);
    if (vec.size() != d) {
      throw Error(ErrorKind::parse, path + ":" + std::to_string(lineno) + ": expected " +
                                        std::to_string(d) + " values, found " +
                                        std::to_string(vec.size()));
    }
    if (!vocab.contains(token)) continue;
    const std::size_t row = vocab.token_to_id.at(token);
    std::copy(vec.begin(), vec.end(), emb.values().begin() + row * d);
  }
  return emb;
}

}  // namespace disco
