#ifndef DISCO_FUSION_HPP
#define DISCO_FUSION_HPP

#include <random>
#include <vector>

#include "disco/tensor.hpp"

namespace disco {

struct FusionParams {
  Tensor W_i;  // [H, H]
  Tensor b_i;  // [H]
  std::size_t k = 5;
  // Combine mode for the fused vector: element-wise sum (default) keeps
  // width H; the concatenation variant doubles it to 2H.
  bool concat_variant = false;

  static FusionParams init(std::size_t hidden, std::size_t k, bool concat_variant,
                           std::mt19937_64& rng);

  std::size_t fused_width() const { return concat_variant ? 2 * b_i.size() : b_i.size(); }
};

// Average k-max pooling of a sequence of [H] rows: per hidden dimension,
// the mean of the k largest values across time (all of them when T < k).
Tensor pool_sequence(Tape& tape, const std::vector<Tensor>& rows, std::size_t k);

// h* = pooled_enc (+) sigmoid(W_i pooled_dec + b_i); (+) is element-wise sum
// by default, concatenation under the variant flag.
Tensor gated_interaction(Tape& tape, const Tensor& pooled_enc, const Tensor& pooled_dec,
                         const FusionParams& p);

}  // namespace disco

#endif
