#include "disco/memory.hpp"

#include <algorithm>

namespace disco {

MemoryMatrix MemoryMatrix::init(std::size_t width, const std::vector<std::string>& ids,
                                std::mt19937_64& rng) {
  if (width == 0) throw Error(ErrorKind::config, "memory width must be >= 1");
  if (ids.empty()) throw Error(ErrorKind::memory, "memory needs at least one column");
  MemoryMatrix mem;
  mem.M = Tensor::uniform({width, ids.size()}, -0.1, 0.1, rng, false);
  mem.column_ids = ids;
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (!mem.col_of.emplace(ids[j], j).second) {
      throw Error(ErrorKind::memory, "duplicate memory column id: " + ids[j]);
    }
  }
  return mem;
}

MemoryRead memory_read(Tape& tape, const MemoryMatrix& mem, const Tensor& h_star,
                       const std::optional<std::string>& exclude_id) {
  if (mem.empty()) throw Error(ErrorKind::memory, "memory_read on an empty memory");
  if (h_star.rank() != 1 || h_star.size() != mem.width()) {
    throw Error(ErrorKind::dimension, "memory_read: query shape " + shape_str(h_star.shape()) +
                                          " does not match memory width " +
                                          std::to_string(mem.width()));
  }
  std::optional<std::size_t> excluded_col;
  if (exclude_id) {
    auto it = mem.col_of.find(*exclude_id);
    if (it == mem.col_of.end()) {
      throw Error(ErrorKind::memory, "memory_read: unknown instance id \"" + *exclude_id + "\"");
    }
    if (mem.cols() == 1) {
      throw Error(ErrorKind::memory, "memory_read: exclusion leaves an empty memory");
    }
    excluded_col = it->second;
  }
  MemoryRead out;
  Tensor scores = matmul_tn(tape, mem.M, h_star);
  out.weights = masked_softmax(tape, scores, excluded_col);
  out.k_vec = matmul(tape, mem.M, out.weights);
  return out;
}

void memory_write(MemoryMatrix& mem, const std::string& instance_id, const Tensor& h_star) {
  auto it = mem.col_of.find(instance_id);
  if (it == mem.col_of.end()) {
    throw Error(ErrorKind::memory, "memory_write: unknown instance id \"" + instance_id + "\"");
  }
  if (h_star.rank() != 1 || h_star.size() != mem.width()) {
    throw Error(ErrorKind::dimension, "memory_write: value shape " + shape_str(h_star.shape()) +
                                          " does not match memory width " +
                                          std::to_string(mem.width()));
  }
  const std::size_t n = mem.cols();
  const std::size_t col = it->second;
  auto& mv = mem.M.values();
  const auto& hv = h_star.values();
  for (std::size_t i = 0; i < hv.size(); ++i) mv[i * n + col] = hv[i];
}

RelationClassifierParams RelationClassifierParams::init(std::size_t n_classes,
                                                        std::size_t fused_width,
                                                        std::mt19937_64& rng) {
  if (n_classes < 2) throw Error(ErrorKind::config, "classifier needs at least 2 classes");
  if (fused_width == 0) throw Error(ErrorKind::config, "fused width must be >= 1");
  RelationClassifierParams p;
  p.W_r = Tensor::uniform({n_classes, 2 * fused_width}, -0.1, 0.1, rng, true);
  p.b_r = Tensor::uniform({n_classes}, -0.1, 0.1, rng, true);
  return p;
}

Tensor classify_feature(Tape& tape, const Tensor& feature, const RelationClassifierParams& p) {
  return softmax(tape, add(tape, matmul(tape, p.W_r, feature), p.b_r));
}

Tensor classify(Tape& tape, const Tensor& k_vec, const Tensor& h_star,
                const RelationClassifierParams& p) {
  return classify_feature(tape, concat(tape, k_vec, h_star), p);
}

}  // namespace disco
