#ifndef DISCO_TEXT_HPP
#define DISCO_TEXT_HPP

#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "disco/corpus.hpp"
#include "disco/tensor.hpp"

namespace disco {

// Lowercases, replaces every character outside the documented whitelist
// (a-z, 0-9, and . , ! ? ; : ' " ( ) - $ % &) with a space, splits the
// sentence punctuation marks out as standalone tokens (apostrophe and hyphen
// stay word-internal), and tokenizes on whitespace.
std::vector<std::string> normalize_text(const std::string& raw);

// Token table with five fixed reserved entries. The whitelist above cannot
// produce any reserved surface form, so ids 0-4 never collide with corpus text.
struct Vocab {
  static constexpr std::size_t pad_id = 0;        // also the decoder start-of-sequence input
  static constexpr std::size_t unk_id = 1;
  static constexpr std::size_t conn_open_id = 2;  // <conn>
  static constexpr std::size_t conn_close_id = 3; // </conn>
  static constexpr std::size_t impl_conn_id = 4;  // test-time connective placeholder
  static constexpr std::size_t reserved_count = 5;

  Vocab();

  std::size_t size() const { return id_to_token.size(); }
  bool contains(const std::string& tok) const { return token_to_id.count(tok) != 0; }
  // Lookup with UNK fallback.
  std::size_t id_of(const std::string& tok) const;
  const std::string& token_of(std::size_t id) const;
  // Insert if absent; returns the id either way.
  std::size_t add(const std::string& tok);

  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, std::size_t> token_to_id;
};

// Frequency-thresholded vocabulary over normalized argument and connective
// text. Insertion order: frequency descending, then lexicographic — identical
// vocabularies across runs regardless of input order.
Vocab build_vocab(const std::vector<std::vector<std::string>>& sequences,
                  std::size_t min_count = 1);
Vocab build_vocab(const std::vector<Instance>& instances, std::size_t min_count = 1);

// Id-level view of one instance. Source is [arg1; arg2]; target wraps the
// connective tokens in the two indicator ids between the argument spans.
// Test form replaces the connective with the single placeholder id.
struct EncodedInstance {
  std::string instance_id;
  std::vector<std::size_t> source_ids;
  std::vector<std::size_t> target_ids;
  std::size_t conn_start = 0;  // index of <conn> in target_ids
  std::size_t conn_end = 0;    // one past </conn>
  std::vector<int> label_ids;  // 1 or 2 class ids under the active LabelSet
};

// test_mode (or an instance without a connective) produces the placeholder
// target. Empty arguments and unmappable labels reject the instance.
EncodedInstance encode_instance(const Instance& inst, const Vocab& vocab,
                                const LabelSet& labels, bool test_mode);

std::vector<std::string> decode_ids(const std::vector<std::size_t>& ids, const Vocab& vocab);

// Embedding rows for the whole vocab, all drawn uniform [-0.1, 0.1].
Tensor init_embeddings(const Vocab& vocab, std::size_t d, std::mt19937_64& rng);

// word2vec text format: header "count dim", then "token v1 ... vd" per line.
// In-vocab tokens get their file vectors; everything else keeps the uniform
// initialization. Requires dim == d.
Tensor load_embeddings(const std::string& path, const Vocab& vocab, std::size_t d,
                       std::mt19937_64& rng);

}  // namespace disco

#endif
