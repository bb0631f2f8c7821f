#ifndef DISCO_TENSOR_HPP
#define DISCO_TENSOR_HPP

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "disco/error.hpp"

namespace disco {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

// When enabled, every op checks its output for NaN/Inf and throws an
// ErrorKind::numeric instead of letting the value propagate. On by default;
// can be switched off for speed once a model is known to be stable.
void set_finite_checks(bool on);
bool finite_checks_enabled();

// Dense row-major double tensor. A cheap shared handle: copies alias the same
// storage. Values are treated as immutable once an op has produced them; only
// the optimizer mutates parameter tensors in place.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor uniform(Shape shape, double lo, double hi, std::mt19937_64& rng,
                        bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t dim(std::size_t axis) const;

  const std::vector<double>& values() const;
  std::vector<double>& values();
  double at(std::size_t i) const { return values()[i]; }
  // Scalar contents; the tensor must hold exactly one value.
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool v);
  // Gradient store, allocated to zeros on first access.
  std::vector<double>& grad();
  // True if a gradient store exists (backward touched this tensor).
  bool has_grad() const;
  void zero_grad();

  // Deep copy of values (fresh storage, no grad).
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> value;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until needed
  };
  std::shared_ptr<Impl> impl_;
  Impl& impl() const;
};

// Records executed ops so their local backward rules can be replayed in
// reverse. One training step owns one tape; tapes are single-threaded.
// A non-recording tape runs forward math only (evaluation mode).
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  std::size_t size() const { return ops_.size(); }

  // Internal: ops append their backward rule here.
  void record(std::function<void()> backward_rule) { ops_.push_back(std::move(backward_rule)); }

  // Seeds d(seed)/d(seed) = 1 and replays all recorded rules in reverse,
  // populating grad() on every requires_grad tensor that fed the seed.
  void backward(const Tensor& seed);

 private:
  std::vector<std::function<void()>> ops_;
  bool recording_ = true;
};

// ---- ops --------------------------------------------------------------
// All ops read inputs, allocate a fresh output, and (when the tape is
// recording and any input requires grad) record a backward rule.

// a[m,n] * b[n,p] -> [m,p]; also a[m,n] * b[n] -> [m].
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// aT * b with a[n,m]: b[n] -> [m], b[n,p] -> [m,p]. Saves materializing
// transposes of weight matrices.
Tensor matmul_tn(Tape& tape, const Tensor& a, const Tensor& b);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double c);

Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor tanh(Tape& tape, const Tensor& x);
Tensor log(Tape& tape, const Tensor& x);

// Stable softmax / log-softmax over a rank-1 tensor.
Tensor softmax(Tape& tape, const Tensor& x);
Tensor log_softmax(Tape& tape, const Tensor& x);
// Softmax over a rank-1 tensor with one entry excluded: the excluded slot
// gets weight exactly 0 and contributes nothing to the normalizer.
Tensor masked_softmax(Tape& tape, const Tensor& x, std::optional<std::size_t> excluded);

Tensor concat(Tape& tape, const Tensor& a, const Tensor& b, std::size_t axis = 0);
// Contiguous sub-range of a rank-1 tensor.
Tensor slice(Tape& tape, const Tensor& x, std::size_t start, std::size_t len);
// One element as a scalar tensor.
Tensor pick(Tape& tape, const Tensor& x, std::size_t index);
// n scalar tensors -> rank-1 [n].
Tensor stack_scalars(Tape& tape, std::span<const Tensor> xs);
// T rank-1 [H] tensors -> rank-2 [T,H].
Tensor stack_rows(Tape& tape, std::span<const Tensor> rows);

// sum_j w[j] * rows[j]; w is rank-1 [n], rows are n tensors of equal shape.
Tensor weighted_sum(Tape& tape, const Tensor& w, std::span<const Tensor> rows);

// Per column of x[T,H]: mean of the k largest values over the T rows.
// k > T degrades to the plain column mean; ties pick the earliest row.
Tensor kmax_avg_pool(Tape& tape, const Tensor& x, std::size_t k);

// Inverted dropout: in training mode each entry survives with probability
// 1-rate and is scaled by 1/(1-rate); in eval mode the input is returned
// unchanged and no randomness is consumed. Same for rate == 0.
Tensor dropout(Tape& tape, const Tensor& x, double rate, bool training, std::mt19937_64& rng);

Tensor sum(Tape& tape, const Tensor& x);
Tensor sumsq(Tape& tape, const Tensor& x);
Tensor dot(Tape& tape, const Tensor& a, const Tensor& b);

// Row of a rank-2 matrix as a rank-1 tensor (embedding lookup).
Tensor embed_row(Tape& tape, const Tensor& matrix, std::size_t row);

// Forward-only helpers (no tape interaction).
std::size_t argmax(const Tensor& x);

}  // namespace disco

#endif
