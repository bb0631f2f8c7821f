#ifndef DISCO_MODEL_HPP
#define DISCO_MODEL_HPP

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "disco/corpus.hpp"
#include "disco/decoder.hpp"
#include "disco/encoder.hpp"
#include "disco/fusion.hpp"
#include "disco/memory.hpp"
#include "disco/text.hpp"

namespace disco {

// Architecture knobs (the optimization knobs live in TrainConfig).
struct ModelConfig {
  std::size_t d = 100;       // embedding width
  std::size_t hidden = 100;  // LSTM hidden size
  std::size_t k = 5;         // pooling constant
  bool fusion_concat = false;
  bool decoder_zero_init = false;  // default: decoder starts from the final forward encoder state
  bool forget_bias_one = true;
};

struct Model {
  ModelConfig cfg;
  Vocab vocab;
  LabelSet labels;

  Tensor embeddings;  // [V, d]
  LstmParams enc_fwd;
  LstmParams enc_bwd;
  LstmParams dec;
  AttentionParams attn;
  FusionParams fusion;
  RelationClassifierParams cls;
  MemoryMatrix memory;  // empty until phase 2 attaches it

  static Model init(const ModelConfig& cfg, Vocab vocab, LabelSet labels,
                    std::mt19937_64& rng, std::optional<Tensor> pretrained_embeddings = {});

  std::size_t fused_width() const { return fusion.fused_width(); }

  // The two optimizer groups. Together they partition every trainable
  // parameter; the memory matrix belongs to neither.
  std::vector<Tensor> encoder_decoder_params() const;
  std::vector<Tensor> classifier_params() const;
  std::vector<Tensor> all_params() const;

  // Deep copies of all parameter values plus the memory contents.
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& snap);
};

struct ForwardOpts {
  bool training = false;       // dropout + scheduled sampling live
  double teacher_prob = 1.0;
  bool gold_target = true;     // false = placeholder-form test decoding
  bool run_classifier = true;  // phase 1 skips classification entirely
  double q1 = 0.0;             // post-embedding dropout rate
  double q2 = 0.0;             // pre-classifier dropout rate
  std::optional<std::string> exclude_id;  // self-column exclusion for memory reads
  std::mt19937_64* rng = nullptr;
};

struct Forward {
  std::vector<Tensor> h_e;
  DecoderOutput dec;
  Tensor h_star;
  Tensor k_vec;
  Tensor mem_weights;
  Tensor dist;  // relation distribution (only when run_classifier)
};

Forward forward(Tape& tape, Model& model, const EncodedInstance& enc, const ForwardOpts& opts);

}  // namespace disco

#endif
