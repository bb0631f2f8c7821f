#include "disco/fusion.hpp"

namespace disco {

FusionParams FusionParams::init(std::size_t hidden, std::size_t k, bool concat_variant,
                                std::mt19937_64& rng) {
  if (hidden == 0) throw Error(ErrorKind::config, "fusion hidden size must be >= 1");
  if (k == 0) throw Error(ErrorKind::config, "pooling k must be >= 1");
  FusionParams p;
  p.W_i = Tensor::uniform({hidden, hidden}, -0.1, 0.1, rng, true);
  p.b_i = Tensor::uniform({hidden}, -0.1, 0.1, rng, true);
  p.k = k;
  p.concat_variant = concat_variant;
  return p;
}

Tensor pool_sequence(Tape& tape, const std::vector<Tensor>& rows, std::size_t k) {
  if (rows.empty()) {
    throw Error(ErrorKind::dimension, "pool_sequence: empty sequence");
  }
  return kmax_avg_pool(tape, stack_rows(tape, rows), k);
}

Tensor gated_interaction(Tape& tape, const Tensor& pooled_enc, const Tensor& pooled_dec,
                         const FusionParams& p) {
  if (pooled_enc.shape() != pooled_dec.shape()) {
    throw Error(ErrorKind::dimension,
                "gated_interaction: pooled shapes disagree: " + shape_str(pooled_enc.shape()) +
                    " vs " + shape_str(pooled_dec.shape()));
  }
  Tensor gate = sigmoid(tape, add(tape, matmul(tape, p.W_i, pooled_dec), p.b_i));
  if (p.concat_variant) return concat(tape, pooled_enc, gate);
  return add(tape, pooled_enc, gate);
}

}  // namespace disco
