#include "disco/encoder.hpp"

namespace disco {

LstmParams LstmParams::init(std::size_t hidden, std::size_t input, std::mt19937_64& rng,
                            bool forget_bias_one) {
  if (hidden == 0 || input == 0) {
    throw Error(ErrorKind::config, "lstm dimensions must be >= 1");
  }
  LstmParams p;
  p.W = Tensor::uniform({4 * hidden, hidden + input}, -0.1, 0.1, rng, true);
  p.b = Tensor::uniform({4 * hidden}, -0.1, 0.1, rng, true);
  if (forget_bias_one) {
    // f-gate block is the second quarter of the stacked bias.
    for (std::size_t i = hidden; i < 2 * hidden; ++i) p.b.values()[i] = 1.0;
  }
  return p;
}

LstmState lstm_zero_state(std::size_t hidden) {
  return {Tensor::zeros({hidden}), Tensor::zeros({hidden})};
}

LstmState lstm_cell(Tape& tape, const Tensor& x, const LstmState& prev, const LstmParams& p) {
  const std::size_t H = p.hidden();
  if (x.rank() != 1 || x.size() != p.input()) {
    throw Error(ErrorKind::dimension, "lstm_cell: input shape " + shape_str(x.shape()) +
                                          " does not match expected [" +
                                          std::to_string(p.input()) + "]");
  }
  if (prev.h.size() != H || prev.c.size() != H) {
    throw Error(ErrorKind::dimension, "lstm_cell: state shape " + shape_str(prev.h.shape()) +
                                          " does not match hidden size " + std::to_string(H));
  }
  Tensor hx = concat(tape, prev.h, x);
  Tensor z = add(tape, matmul(tape, p.W, hx), p.b);
  Tensor i = sigmoid(tape, slice(tape, z, 0, H));
  Tensor f = sigmoid(tape, slice(tape, z, H, H));
  Tensor o = sigmoid(tape, slice(tape, z, 2 * H, H));
  Tensor cand = tanh(tape, slice(tape, z, 3 * H, H));

  LstmState next;
  next.c = add(tape, mul(tape, f, prev.c), mul(tape, i, cand));
  next.h = mul(tape, o, tanh(tape, next.c));
  return next;
}

EncoderOutput encode(Tape& tape, const std::vector<Tensor>& xs, const LstmParams& fwd,
                     const LstmParams& bwd) {
  if (xs.empty()) {
    throw Error(ErrorKind::instance, "encode: empty source sequence");
  }
  const std::size_t n = xs.size();
  const std::size_t H = fwd.hidden();
  if (bwd.hidden() != H) {
    throw Error(ErrorKind::dimension, "encode: direction hidden sizes disagree");
  }

  std::vector<Tensor> fwd_h(n), bwd_h(n);
  LstmState state = lstm_zero_state(H);
  for (std::size_t t = 0; t < n; ++t) {
    state = lstm_cell(tape, xs[t], state, fwd);
    fwd_h[t] = state.h;
  }
  EncoderOutput out;
  out.fwd_final = state;

  state = lstm_zero_state(H);
  for (std::size_t t = n; t-- > 0;) {
    state = lstm_cell(tape, xs[t], state, bwd);
    bwd_h[t] = state.h;
  }
  out.bwd_final = state;

  out.h.reserve(n);
  for (std::size_t t = 0; t < n; ++t) out.h.push_back(add(tape, fwd_h[t], bwd_h[t]));
  return out;
}

}  // namespace disco
