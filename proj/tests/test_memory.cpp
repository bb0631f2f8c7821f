#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "disco/memory.hpp"
#include "testutil.hpp"

using namespace disco;
using testutil::approx;
using testutil::approx_all;
using testutil::fd_check;

namespace {

MemoryMatrix make_memory(std::size_t width, std::size_t n, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (std::size_t j = 0; j < n; ++j) ids.push_back("inst-" + std::to_string(j));
  std::mt19937_64 rng(seed);
  return MemoryMatrix::init(width, ids, rng);
}

void set_column(MemoryMatrix& mem, std::size_t col, const std::vector<double>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) mem.M.values()[i * mem.cols() + col] = v[i];
}

}  // namespace

TEST_CASE("a single-column memory always returns that column") {
  MemoryMatrix mem = make_memory(4, 1, 71);
  std::mt19937_64 rng(1);
  Tensor q = Tensor::uniform({4}, -1.0, 1.0, rng);
  Tape tape(false);
  MemoryRead read = memory_read(tape, mem, q, std::nullopt);
  REQUIRE(read.weights.size() == 1);
  CHECK(read.weights.values()[0] == 1.0);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(approx(read.k_vec.values()[i], mem.M.values()[i * 1 + 0], 1e-15));
  }
}

TEST_CASE("a query aligned with an orthogonal column wins the read") {
  const std::size_t K = 8, N = 8;
  MemoryMatrix mem = make_memory(K, N, 72);
  // Orthogonal columns: column j = 10 * e_j.
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = 0; j < N; ++j) mem.M.values()[i * N + j] = i == j ? 10.0 : 0.0;
  Tape tape(false);
  for (std::size_t j = 0; j < N; ++j) {
    std::vector<double> qv(K, 0.0);
    qv[j] = 10.0;
    Tensor q = Tensor::from({K}, qv);
    MemoryRead read = memory_read(tape, mem, q, std::nullopt);
    CHECK(read.weights.values()[j] > 0.99);
    CHECK(approx(read.k_vec.values()[j], 10.0, 1e-2));
  }
}

TEST_CASE("read weights form a distribution") {
  MemoryMatrix mem = make_memory(5, 9, 73);
  std::mt19937_64 rng(2);
  Tape tape(false);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor q = Tensor::uniform({5}, -2.0, 2.0, rng);
    MemoryRead read = memory_read(tape, mem, q, std::nullopt);
    double total = 0.0;
    for (double w : read.weights.values()) {
      CHECK(w >= 0.0);
      total += w;
    }
    CHECK(approx(total, 1.0, 1e-9));
  }
}

TEST_CASE("the excluded column carries exactly zero weight") {
  MemoryMatrix mem = make_memory(5, 6, 74);
  std::mt19937_64 rng(3);
  Tensor q = Tensor::uniform({5}, -1.0, 1.0, rng);
  Tape tape(false);
  MemoryRead read = memory_read(tape, mem, q, std::string("inst-2"));
  CHECK(read.weights.values()[2] == 0.0);
  double total = 0.0;
  for (double w : read.weights.values()) total += w;
  CHECK(approx(total, 1.0, 1e-9));

  // k_vec ignores the excluded column entirely.
  std::vector<double> by_hand(5, 0.0);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      by_hand[i] += mem.M.values()[i * 6 + j] * read.weights.values()[j];
  CHECK(approx_all(read.k_vec.values(), by_hand, 1e-12));
}

TEST_CASE("memory misuse raises memory errors") {
  MemoryMatrix mem = make_memory(4, 1, 75);
  std::mt19937_64 rng(4);
  Tensor q = Tensor::uniform({4}, -1.0, 1.0, rng);
  Tape tape(false);
  CHECK_THROWS_AS_KIND(memory_read(tape, mem, q, std::string("nope")), ErrorKind::memory);
  CHECK_THROWS_AS_KIND(memory_read(tape, mem, q, std::string("inst-0")), ErrorKind::memory);
  CHECK_THROWS_AS_KIND(memory_read(tape, mem, Tensor::zeros({3}), std::nullopt),
                       ErrorKind::dimension);
  CHECK_THROWS_AS_KIND(memory_write(mem, "ghost", q), ErrorKind::memory);
  std::vector<std::string> dup = {"a", "a"};
  CHECK_THROWS_AS_KIND(MemoryMatrix::init(4, dup, rng), ErrorKind::memory);
  MemoryMatrix none;
  CHECK_THROWS_AS_KIND(memory_read(tape, none, q, std::nullopt), ErrorKind::memory);
}

TEST_CASE("writes land in the addressed column and the last write wins") {
  MemoryMatrix mem = make_memory(3, 4, 76);
  Tensor v1 = Tensor::from({3}, {1.0, 2.0, 3.0});
  Tensor v2 = Tensor::from({3}, {-1.0, -2.0, -3.0});
  memory_write(mem, "inst-1", v1);
  memory_write(mem, "inst-1", v2);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(mem.M.values()[i * 4 + 1] == v2.values()[i]);
  }
  // Other columns untouched by the write.
  MemoryMatrix fresh = make_memory(3, 4, 76);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j : {std::size_t{0}, std::size_t{2}, std::size_t{3}}) {
      CHECK(mem.M.values()[i * 4 + j] == fresh.M.values()[i * 4 + j]);
    }
  }
}

TEST_CASE("a written column is retrievable by a matching query") {
  MemoryMatrix mem = make_memory(4, 5, 77);
  std::vector<double> signature = {5.0, -5.0, 5.0, -5.0};
  memory_write(mem, "inst-3", Tensor::from({4}, signature));
  Tape tape(false);
  MemoryRead read = memory_read(tape, mem, Tensor::from({4}, signature), std::nullopt);
  // Brute-force the expected winner: scores are column dot query.
  std::size_t best = 0;
  double best_score = -1e300;
  for (std::size_t j = 0; j < 5; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) s += mem.M.values()[i * 5 + j] * signature[i];
    if (s > best_score) {
      best_score = s;
      best = j;
    }
  }
  CHECK(best == 3);
  CHECK(argmax(read.weights) == 3);
  CHECK(read.weights.values()[3] > 0.99);

  // Self-exclusion then hides exactly that column.
  MemoryRead excl = memory_read(tape, mem, Tensor::from({4}, signature), std::string("inst-3"));
  CHECK(excl.weights.values()[3] == 0.0);
}

TEST_CASE("reads leave the store untrained but the query differentiable") {
  MemoryMatrix mem = make_memory(4, 6, 78);
  CHECK_FALSE(mem.M.requires_grad());
  std::mt19937_64 rng(5);
  Tensor q = Tensor::uniform({4}, -1.0, 1.0, rng, true);
  Tape tape;
  MemoryRead read = memory_read(tape, mem, q, std::nullopt);
  Tensor loss = sum(tape, read.k_vec);
  tape.backward(loss);
  CHECK_FALSE(mem.M.has_grad());
  REQUIRE(q.has_grad());
  double norm = 0.0;
  for (double g : q.grad()) norm += std::fabs(g);
  CHECK(norm > 0.0);
}

TEST_CASE("memory write stores a detached copy") {
  MemoryMatrix mem = make_memory(3, 2, 79);
  Tensor v = Tensor::from({3}, {1.0, 2.0, 3.0}, true);
  memory_write(mem, "inst-0", v);
  v.values()[0] = 99.0;  // later mutation must not leak into the store
  CHECK(mem.M.values()[0 * 2 + 0] == 1.0);
  CHECK_FALSE(mem.M.requires_grad());
}

TEST_CASE("zero classifier weights score by bias alone") {
  const std::size_t C = 4, F = 6;
  RelationClassifierParams p;
  p.W_r = Tensor::zeros({C, 2 * F});
  std::mt19937_64 rng(6);
  p.b_r = Tensor::uniform({C}, -1.0, 1.0, rng, true);
  Tensor k_vec = Tensor::uniform({F}, -1.0, 1.0, rng);
  Tensor h_star = Tensor::uniform({F}, -1.0, 1.0, rng);
  Tape tape(false);
  Tensor dist = classify(tape, k_vec, h_star, p);
  Tensor want = softmax(tape, p.b_r);
  CHECK(approx_all(dist.values(), want.values(), 0.0));
  double total = 0.0;
  for (double v : dist.values()) total += v;
  CHECK(approx(total, 1.0, 1e-9));
}

TEST_CASE("classifier gradients match finite differences") {
  std::mt19937_64 rng(80);
  const std::size_t C = 3, F = 4;
  RelationClassifierParams p = RelationClassifierParams::init(C, F, rng);
  Tensor k_vec = Tensor::uniform({F}, -1.0, 1.0, rng, true);
  Tensor h_star = Tensor::uniform({F}, -1.0, 1.0, rng, true);
  auto loss = [&](Tape& tape) {
    Tensor dist = classify(tape, k_vec, h_star, p);
    return pick(tape, log(tape, dist), 1);
  };
  CHECK(fd_check(p.W_r, loss) < 1e-4);
  CHECK(fd_check(p.b_r, loss) < 1e-4);
  CHECK(fd_check(k_vec, loss) < 1e-4);
  CHECK(fd_check(h_star, loss) < 1e-4);
  CHECK_THROWS_AS_KIND(RelationClassifierParams::init(1, 4, rng), ErrorKind::config);
}

TEST_CASE("read gradients into the query match finite differences") {
  MemoryMatrix mem = make_memory(4, 5, 81);
  std::mt19937_64 rng(7);
  Tensor q = Tensor::uniform({4}, -1.0, 1.0, rng, true);
  auto loss = [&](Tape& tape) {
    MemoryRead read = memory_read(tape, mem, q, std::string("inst-1"));
    return sum(tape, tanh(tape, read.k_vec));
  };
  CHECK(fd_check(q, loss) < 1e-4);
}
