#ifndef DISCO_ENCODER_HPP
#define DISCO_ENCODER_HPP

#include <random>
#include <vector>

#include "disco/tensor.hpp"

namespace disco {

// One LSTM direction. W stacks the four gate blocks over the concatenated
// [h_prev; x] input in the fixed order i, f, o, candidate.
struct LstmParams {
  Tensor W;  // [4H, H + d]
  Tensor b;  // [4H]

  // Weights uniform [-0.1, 0.1]; the forget-gate bias block starts at 1.0
  // unless forget_bias_one is off (kept toggleable since it is a deliberate
  // deviation from plain uniform init).
  static LstmParams init(std::size_t hidden, std::size_t input, std::mt19937_64& rng,
                         bool forget_bias_one = true);

  std::size_t hidden() const { return b.size() / 4; }
  std::size_t input() const { return W.dim(1) - hidden(); }
};

struct LstmState {
  Tensor h;  // [H]
  Tensor c;  // [H]
};

LstmState lstm_zero_state(std::size_t hidden);

// c_t = f (*) c_prev + i (*) candidate; h_t = o (*) tanh(c_t);
// gates i, f, o through the logistic sigmoid, candidate through tanh.
LstmState lstm_cell(Tape& tape, const Tensor& x, const LstmState& prev, const LstmParams& p);

struct EncoderOutput {
  std::vector<Tensor> h;  // one [H] row per source position: fwd + bwd sum
  LstmState fwd_final;
  LstmState bwd_final;
};

// Bidirectional pass over embedded inputs, zero initial states, directions
// combined by element-wise sum.
EncoderOutput encode(Tape& tape, const std::vector<Tensor>& xs, const LstmParams& fwd,
                     const LstmParams& bwd);

}  // namespace disco

#endif
