#include "disco/decoder.hpp"

namespace disco {

AttentionParams AttentionParams::init(std::size_t hidden, std::size_t vocab,
                                      std::mt19937_64& rng) {
  if (hidden == 0 || vocab == 0) {
    throw Error(ErrorKind::config, "attention dimensions must be >= 1");
  }
  AttentionParams p;
  p.W_alpha = Tensor::uniform({hidden, hidden}, -0.1, 0.1, rng, true);
  p.W_c = Tensor::uniform({hidden, 2 * hidden}, -0.1, 0.1, rng, true);
  p.W_s = Tensor::uniform({vocab, hidden}, -0.1, 0.1, rng, true);
  p.b_s = Tensor::uniform({vocab}, -0.1, 0.1, rng, true);
  return p;
}

Attended attention(Tape& tape, const Tensor& h_d, const std::vector<Tensor>& h_e,
                   const Tensor& W_alpha) {
  if (h_e.empty()) {
    throw Error(ErrorKind::dimension, "attention: no encoder states");
  }
  // h_d^T W_alpha h_e_j == (W_alpha^T h_d) . h_e_j; hoist the matrix product.
  Tensor query = matmul_tn(tape, W_alpha, h_d);
  std::vector<Tensor> scores;
  scores.reserve(h_e.size());
  for (const Tensor& he_j : h_e) scores.push_back(dot(tape, query, he_j));
  Attended out;
  out.weights = softmax(tape, stack_scalars(tape, scores));
  out.context = weighted_sum(tape, out.weights, h_e);
  return out;
}

DecoderStep decode_step(Tape& tape, const Tensor& y_emb, const LstmState& prev,
                        const std::vector<Tensor>& h_e, const LstmParams& cell,
                        const AttentionParams& p) {
  DecoderStep step;
  step.state = lstm_cell(tape, y_emb, prev, cell);
  Attended att = attention(tape, step.state.h, h_e, p.W_alpha);
  step.attn = att.weights;
  Tensor joined = concat(tape, att.context, step.state.h);
  step.hd_hat = tanh(tape, matmul(tape, p.W_c, joined));
  step.logits = add(tape, matmul(tape, p.W_s, step.hd_hat), p.b_s);
  return step;
}

namespace {

DecoderOutput run_decoder(Tape& tape, const std::vector<std::size_t>& input_plan,
                          const std::vector<std::size_t>& gold_prev, double teacher_prob,
                          const std::vector<Tensor>& h_e, const Tensor& embeddings,
                          const LstmParams& cell, const AttentionParams& p,
                          const LstmState& init_state, const DecodeOpts& opts) {
  // input_plan: fixed input ids (test mode) — empty when sampling applies.
  // gold_prev: shifted gold ids (train mode) — empty in test mode.
  const std::size_t m = input_plan.empty() ? gold_prev.size() : input_plan.size();
  const bool sampling = input_plan.empty();
  if ((opts.training && opts.emb_dropout > 0.0 && opts.rng == nullptr) ||
      (sampling && teacher_prob < 1.0 && opts.rng == nullptr)) {
    throw Error(ErrorKind::usage, "decoder needs an rng for dropout or scheduled sampling");
  }

  DecoderOutput out;
  out.hd_hat.reserve(m);
  out.logits.reserve(m);
  out.attn.reserve(m);
  out.inputs_used.reserve(m);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  LstmState state = init_state;
  std::size_t prev_argmax = 0;
  for (std::size_t t = 0; t < m; ++t) {
    std::size_t input_id;
    if (!sampling) {
      input_id = input_plan[t];
    } else if (t == 0 || teacher_prob >= 1.0) {
      input_id = gold_prev[t];
    } else {
      input_id = unit(*opts.rng) < teacher_prob ? gold_prev[t] : prev_argmax;
    }
    out.inputs_used.push_back(input_id);

    Tensor y_emb = embed_row(tape, embeddings, input_id);
    if (opts.training && opts.emb_dropout > 0.0) {
      y_emb = dropout(tape, y_emb, opts.emb_dropout, true, *opts.rng);
    }
    DecoderStep step = decode_step(tape, y_emb, state, h_e, cell, p);
    state = step.state;
    if (sampling && teacher_prob < 1.0) prev_argmax = argmax(step.logits);
    out.hd_hat.push_back(step.hd_hat);
    out.logits.push_back(step.logits);
    out.attn.push_back(step.attn);
  }
  return out;
}

}  // namespace

DecoderOutput decode_train(Tape& tape, const std::vector<std::size_t>& target_ids,
                           const std::vector<Tensor>& h_e, const Tensor& embeddings,
                           const LstmParams& cell, const AttentionParams& p,
                           const LstmState& init_state, double teacher_prob,
                           const DecodeOpts& opts) {
  if (target_ids.empty()) {
    throw Error(ErrorKind::instance, "decode_train: empty target sequence");
  }
  if (teacher_prob < 0.0 || teacher_prob > 1.0) {
    throw Error(ErrorKind::config,
                "teacher_prob must lie in [0,1], got " + std::to_string(teacher_prob));
  }
  // Shift gold right by one; PAD plays the start-of-sequence role at step 0.
  std::vector<std::size_t> gold_prev(target_ids.size());
  gold_prev[0] = Vocab::pad_id;
  for (std::size_t t = 1; t < target_ids.size(); ++t) gold_prev[t] = target_ids[t - 1];
  return run_decoder(tape, {}, gold_prev, teacher_prob, h_e, embeddings, cell, p, init_state,
                     opts);
}

DecoderOutput decode_test(Tape& tape, const EncodedInstance& enc,
                          const std::vector<Tensor>& h_e, const Tensor& embeddings,
                          const LstmParams& cell, const AttentionParams& p,
                          const LstmState& init_state) {
  const auto& ids = enc.target_ids;
  const bool placeholder_ok =
      enc.conn_end == enc.conn_start + 3 && enc.conn_end <= ids.size() &&
      ids[enc.conn_start] == Vocab::conn_open_id &&
      ids[enc.conn_start + 1] == Vocab::impl_conn_id &&
      ids[enc.conn_start + 2] == Vocab::conn_close_id;
  if (!placeholder_ok) {
    throw Error(ErrorKind::usage,
                "decode_test: instance " + enc.instance_id +
                    " does not carry the connective placeholder form");
  }
  DecodeOpts opts;  // eval mode: no dropout, no rng
  return run_decoder(tape, ids, {}, 1.0, h_e, embeddings, cell, p, init_state, opts);
}

}  // namespace disco
