#ifndef DISCO_MEMORY_HPP
#define DISCO_MEMORY_HPP

#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "disco/tensor.hpp"

namespace disco {

// Non-trainable store of one fused representation per training instance.
// Column j belongs to training instance column_ids[j]; reads attend over
// columns, writes refresh a column with a detached value.
struct MemoryMatrix {
  Tensor M;  // [K, N], requires_grad stays false
  std::vector<std::string> column_ids;
  std::vector<int> column_labels;  // gold class per column; training fills it
  std::unordered_map<std::string, std::size_t> col_of;

  static MemoryMatrix init(std::size_t width, const std::vector<std::string>& ids,
                           std::mt19937_64& rng);

  bool empty() const { return column_ids.empty(); }
  std::size_t cols() const { return column_ids.size(); }
  std::size_t width() const { return column_ids.empty() ? 0 : M.dim(0); }
};

struct MemoryRead {
  Tensor k_vec;    // [K] weighted column average
  Tensor weights;  // [N] attention over columns
};

// weights = softmax(M^T h_star) with the excluded instance's column masked
// out (training-time self-exclusion); k_vec = M * weights. Gradients flow
// into h_star only, never into M.
MemoryRead memory_read(Tape& tape, const MemoryMatrix& mem, const Tensor& h_star,
                       const std::optional<std::string>& exclude_id);

// Overwrite the instance's column with the current h_star values (detached).
void memory_write(MemoryMatrix& mem, const std::string& instance_id, const Tensor& h_star);

struct RelationClassifierParams {
  Tensor W_r;  // [C, 2K]
  Tensor b_r;  // [C]

  static RelationClassifierParams init(std::size_t n_classes, std::size_t fused_width,
                                       std::mt19937_64& rng);
};

// softmax(W_r [k_vec; h_star] + b_r). classify_feature is the same with the
// concatenation (possibly dropout-masked) already built.
Tensor classify(Tape& tape, const Tensor& k_vec, const Tensor& h_star,
                const RelationClassifierParams& p);
Tensor classify_feature(Tape& tape, const Tensor& feature, const RelationClassifierParams& p);

}  // namespace disco

#endif
