#ifndef DISCO_DECODER_HPP
#define DISCO_DECODER_HPP

#include <random>
#include <vector>

#include "disco/encoder.hpp"
#include "disco/tensor.hpp"
#include "disco/text.hpp"

namespace disco {

struct AttentionParams {
  Tensor W_alpha;  // [H, H] bilinear score
  Tensor W_c;      // [H, 2H] over [context; h_d]
  Tensor W_s;      // [V, H] word prediction
  Tensor b_s;      // [V]

  static AttentionParams init(std::size_t hidden, std::size_t vocab, std::mt19937_64& rng);
};

struct Attended {
  Tensor context;  // [H] weighted average of encoder states
  Tensor weights;  // [n] softmax over encoder positions
};

// score_j = h_d^T W_alpha h_e_j, weights = softmax(score), context = sum_j w_j h_e_j.
Attended attention(Tape& tape, const Tensor& h_d, const std::vector<Tensor>& h_e,
                   const Tensor& W_alpha);

struct DecoderStep {
  Tensor hd_hat;  // [H] predictive vector tanh(W_c [context; h_d])
  Tensor logits;  // [V] pre-softmax word scores
  Tensor attn;    // [n]
  LstmState state;
};

DecoderStep decode_step(Tape& tape, const Tensor& y_emb, const LstmState& prev,
                        const std::vector<Tensor>& h_e, const LstmParams& cell,
                        const AttentionParams& p);

struct DecoderOutput {
  std::vector<Tensor> hd_hat;             // m predictive vectors
  std::vector<Tensor> logits;             // m word-score rows
  std::vector<Tensor> attn;               // m attention rows over n source positions
  std::vector<std::size_t> inputs_used;   // actual input id fed at each step
};

// Options shared by both decoding modes. Dropout applies to the input
// embeddings (the post-embedding dropout layer) when training is on.
struct DecodeOpts {
  double emb_dropout = 0.0;
  bool training = false;
  std::mt19937_64* rng = nullptr;  // needed when training with dropout or sampling
};

// Training-mode pass over the gold target. Step 0 is fed the PAD id in its
// start-of-sequence role; step t>0 is fed gold y_{t-1} with probability
// teacher_prob, otherwise the model's own previous argmax (scheduled
// sampling). teacher_prob == 1 consumes no randomness for sampling.
DecoderOutput decode_train(Tape& tape, const std::vector<std::size_t>& target_ids,
                           const std::vector<Tensor>& h_e, const Tensor& embeddings,
                           const LstmParams& cell, const AttentionParams& p,
                           const LstmState& init_state, double teacher_prob,
                           const DecodeOpts& opts);

// Test-mode pass: the placeholder-form target itself is the decoder input,
// unshifted — step t consumes target_ids[t]. No sampling, no randomness.
// Requires the <conn> impl_conn </conn> placeholder in the target.
DecoderOutput decode_test(Tape& tape, const EncodedInstance& enc,
                          const std::vector<Tensor>& h_e, const Tensor& embeddings,
                          const LstmParams& cell, const AttentionParams& p,
                          const LstmState& init_state);

}  // namespace disco

#endif
