#include "disco/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace disco {

namespace {

std::atomic<bool> g_finite_checks{true};

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

void check_finite(const Tensor& t, const char* op) {
  if (!g_finite_checks.load(std::memory_order_relaxed)) return;
  for (double v : t.values()) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::numeric,
                  std::string(op) + " produced a non-finite value (NaN/Inf)");
    }
  }
}

[[noreturn]] void dim_error(const std::string& msg) { throw Error(ErrorKind::dimension, msg); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    dim_error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
              shape_str(b.shape()));
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

// Accumulate g into t's grad store if t participates in the backward pass.
void accum(Tensor& t, const std::vector<double>& g) {
  if (!t.requires_grad()) return;
  auto& dst = t.grad();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

bool track(const Tape& tape, std::initializer_list<const Tensor*> inputs) {
  if (!tape.recording()) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

void set_finite_checks(bool on) { g_finite_checks.store(on, std::memory_order_relaxed); }
bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }

// ---- Tensor -------------------------------------------------------------

Tensor::Impl& Tensor::impl() const {
  if (!impl_) throw Error(ErrorKind::usage, "use of an undefined tensor");
  return *impl_;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->value.assign(shape_size(t.impl_->shape), 0.0);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.values().begin(), t.values().end(), value);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    dim_error("tensor init: shape " + shape_str(shape) + " does not hold " +
              std::to_string(values.size()) + " values");
  }
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->value = std::move(values);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, std::mt19937_64& rng,
                       bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

const Shape& Tensor::shape() const { return impl().shape; }
std::size_t Tensor::size() const { return impl().value.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) dim_error("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[axis];
}

const std::vector<double>& Tensor::values() const { return impl().value; }
std::vector<double>& Tensor::values() { return impl().value; }

double Tensor::item() const {
  if (size() != 1) {
    throw Error(ErrorKind::usage, "item() on non-scalar tensor of shape " + shape_str(shape()));
  }
  return values()[0];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }
void Tensor::set_requires_grad(bool v) { impl().requires_grad = v; }

std::vector<double>& Tensor::grad() {
  auto& g = impl().grad;
  if (g.size() != size()) g.assign(size(), 0.0);
  return g;
}

bool Tensor::has_grad() const { return impl().grad.size() == size(); }

void Tensor::zero_grad() { impl().grad.clear(); }

Tensor Tensor::clone() const {
  return Tensor::from(shape(), values(), false);
}

// ---- Tape ---------------------------------------------------------------

void Tape::backward(const Tensor& seed) {
  if (seed.size() != 1) {
    throw Error(ErrorKind::usage,
                "backward seed must be scalar, got shape " + shape_str(seed.shape()));
  }
  Tensor s = seed;
  s.grad()[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

// ---- ops ----------------------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || (b.rank() != 1 && b.rank() != 2)) {
    dim_error("matmul: unsupported ranks " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), n = a.dim(1);
  const bool vec = b.rank() == 1;
  const std::size_t bn = b.dim(0);
  const std::size_t p = vec ? 1 : b.dim(1);
  if (bn != n) {
    dim_error("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " +
              shape_str(b.shape()));
  }
  Tensor out = Tensor::zeros(vec ? Shape{m} : Shape{m, p});
  {
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t kk = 0; kk < n; ++kk) {
        const double aik = av[i * n + kk];
        if (aik == 0.0) continue;
        for (std::size_t j = 0; j < p; ++j) ov[i * p + j] += aik * bv[kk * p + j];
      }
    }
  }
  if (track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    tape.record([ac, bc, oc, m, n, p]() mutable {
      if (!oc.has_grad()) return;
      const auto& go = oc.grad();
      if (ac.requires_grad()) {
        auto& ga = ac.grad();
        const auto& bv = bc.values();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t kk = 0; kk < n; ++kk) {
            double s = 0.0;
            for (std::size_t j = 0; j < p; ++j) s += go[i * p + j] * bv[kk * p + j];
            ga[i * n + kk] += s;
          }
      }
      if (bc.requires_grad()) {
        auto& gb = bc.grad();
        const auto& av = ac.values();
        for (std::size_t kk = 0; kk < n; ++kk)
          for (std::size_t j = 0; j < p; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < m; ++i) s += av[i * n + kk] * go[i * p + j];
            gb[kk * p + j] += s;
          }
      }
    });
  }
  check_finite(out, "matmul");
  return out;
}

Tensor matmul_tn(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || (b.rank() != 1 && b.rank() != 2)) {
    dim_error("matmul_tn: unsupported ranks " + shape_str(a.shape()) + " x " +
              shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0), m = a.dim(1);
  const bool vec = b.rank() == 1;
  const std::size_t p = vec ? 1 : b.dim(1);
  if (b.dim(0) != n) {
    dim_error("matmul_tn: leading dimensions disagree " + shape_str(a.shape()) + "^T x " +
              shape_str(b.shape()));
  }
  Tensor out = Tensor::zeros(vec ? Shape{m} : Shape{m, p});
  {
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < m; ++i) {
        const double aji = av[j * m + i];
        if (aji == 0.0) continue;
        for (std::size_t q = 0; q < p; ++q) ov[i * p + q] += aji * bv[j * p + q];
      }
  }
  if (track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    tape.record([ac, bc, oc, n, m, p]() mutable {
      if (!oc.has_grad()) return;
      const auto& go = oc.grad();
      if (ac.requires_grad()) {
        auto& ga = ac.grad();
        const auto& bv = bc.values();
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t i = 0; i < m; ++i) {
            double s = 0.0;
            for (std::size_t q = 0; q < p; ++q) s += bv[j * p + q] * go[i * p + q];
            ga[j * m + i] += s;
          }
      }
      if (bc.requires_grad()) {
        auto& gb = bc.grad();
        const auto& av = ac.values();
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t q = 0; q < p; ++q) {
            double s = 0.0;
            for (std::size_t i = 0; i < m; ++i) s += av[j * m + i] * go[i * p + q];
            gb[j * p + q] += s;
          }
      }
    });
  }
  check_finite(out, "matmul_tn");
  return out;
}

namespace {

template <typename Fwd, typename Bwd>
Tensor binary_elementwise(Tape& tape, const Tensor& a, const Tensor& b, const char* name,
                          Fwd fwd, Bwd bwd) {
  require_same_shape(a, b, name);
  Tensor out = Tensor::zeros(a.shape());
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = fwd(av[i], bv[i]);
  if (track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    tape.record([ac, bc, oc, bwd]() mutable {
      if (!oc.has_grad()) return;
      const auto& go = oc.grad();
      const auto& av = ac.values();
      const auto& bv = bc.values();
      std::vector<double> ga(go.size()), gb(go.size());
      for (std::size_t i = 0; i < go.size(); ++i) bwd(av[i], bv[i], go[i], ga[i], gb[i]);
      accum(ac, ga);
      accum(bc, gb);
    });
  }
  check_finite(out, name);
  return out;
}

template <typename Fwd, typename Bwd>
Tensor unary_elementwise(Tape& tape, const Tensor& x, const char* name, Fwd fwd, Bwd bwd) {
  Tensor out = Tensor::zeros(x.shape());
  const auto& xv = x.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = fwd(xv[i]);
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape.record([xc, oc, bwd]() mutable {
      if (!oc.has_grad() || !xc.requires_grad()) return;
      const auto& go = oc.grad();
      const auto& xv = xc.values();
      const auto& yv = oc.values();
      auto& gx = xc.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += bwd(xv[i], yv[i]) * go[i];
    });
  }
  check_finite(out, name);
  return out;
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      tape, a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double g, double& ga, double& gb) {
        ga = g;
        gb = g;
      });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      tape, a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double g, double& ga, double& gb) {
        ga = g;
        gb = -g;
      });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      tape, a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& ga, double& gb) {
        ga = g * y;
        gb = g * x;
      });
}

Tensor scale(Tape& tape, const Tensor& a, double c) {
  return unary_elementwise(
      tape, a, "scale", [c](double x) { return c * x; },
      [c](double, double) { return c; });
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  return unary_elementwise(
      tape, x, "sigmoid", [](double v) { return stable_sigmoid(v); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(Tape& tape, const Tensor& x) {
  return unary_elementwise(
      tape, x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor log(Tape& tape, const Tensor& x) {
  return unary_elementwise(
      tape, x, "log", [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor softmax(Tape& tape, const Tensor& x) {
  if (x.rank() != 1 || x.size() == 0) {
    dim_error("softmax: need a non-empty rank-1 tensor, got " + shape_str(x.shape()));
  }
  return masked_softmax(tape, x, std::nullopt);
}

Tensor masked_softmax(Tape& tape, const Tensor& x, std::optional<std::size_t> excluded) {
  if (x.rank() != 1 || x.size() == 0) {
    dim_error("masked_softmax: need a non-empty rank-1 tensor, got " + shape_str(x.shape()));
  }
  const std::size_t n = x.size();
  if (excluded && *excluded >= n) {
    dim_error("masked_softmax: excluded index " + std::to_string(*excluded) +
              " out of range for " + shape_str(x.shape()));
  }
  if (excluded && n == 1) {
    throw Error(ErrorKind::dimension, "masked_softmax: exclusion leaves no entries");
  }
  Tensor out = Tensor::zeros(x.shape());
  {
    const auto& xv = x.values();
    auto& ov = out.values();
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (excluded && i == *excluded) continue;
      mx = std::max(mx, xv[i]);
    }
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (excluded && i == *excluded) continue;
      ov[i] = std::exp(xv[i] - mx);
      z += ov[i];
    }
    for (std::size_t i = 0; i < n; ++i) ov[i] /= z;
    if (excluded) ov[*excluded] = 0.0;
  }
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape.record([xc, oc]() mutable {
      if (!oc.has_grad() || !xc.requires_grad()) return;
      const auto& go = oc.grad();
      const auto& y = oc.values();
      auto& gx = xc.grad();
      double dot_gy = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) dot_gy += go[i] * y[i];
      for (std::size_t i = 0; i < y.size(); ++i) gx[i] += y[i] * (go[i] - dot_gy);
    });
  }
  check_finite(out, "softmax");
  return out;
}

Tensor log_softmax(Tape& tape, const Tensor& x) {
  if (x.rank() != 1 || x.size() == 0) {
    dim_error("log_softmax: need a non-empty rank-1 tensor, got " + shape_str(x.shape()));
  }
  const std::size_t n = x.size();
  Tensor out = Tensor::zeros(x.shape());
  {
    const auto& xv = x.values();
    auto& ov = out.values();
    double mx = *std::max_element(xv.begin(), xv.end());
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(xv[i] - mx);
    const double logz = mx + std::log(z);
    for (std::size_t i = 0; i < n; ++i) ov[i] = xv[i] - logz;
  }
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape.record([xc, oc]() mutable {
      if (!oc.has_grad() || !xc.requires_grad()) return;
      const auto& go = oc.grad();
      const auto& ly = oc.values();
      auto& gx = xc.grad();
      double gsum = 0.0;
      for (double g : go) gsum += g;
      for (std::size_t i = 0; i < ly.size(); ++i) gx[i] += go[i] - std::exp(ly[i]) * gsum;
    });
  }
  check_finite(out, "log_softmax");
  return out;
}

Tensor concat(Tape& tape, const Tensor& a, const Tensor& b, std::size_t axis) {
  if (a.rank() != b.rank()) {
    dim_error("concat: rank mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  if (axis >= a.rank()) {
    dim_error("concat: axis " + std::to_string(axis) + " out of range for " +
              shape_str(a.shape()));
  }
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (i != axis && a.shape()[i] != b.shape()[i]) {
      dim_error("concat: shapes incompatible off the concat axis: " + shape_str(a.shape()) +
                " vs " + shape_str(b.shape()));
    }
  }
  Shape out_shape = a.shape();
  out_shape[axis] += b.shape()[axis];
  // View every operand as [outer, axis_len, inner].
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.shape()[i];
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.shape()[i];
  const std::size_t alen = a.shape()[axis], blen = b.shape()[axis];

  Tensor out = Tensor::zeros(out_shape);
  {
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(av.begin() + o * alen * inner, alen * inner,
                  ov.begin() + o * (alen + blen) * inner);
      std::copy_n(bv.begin() + o * blen * inner, blen * inner,
                  ov.begin() + (o * (alen + blen) + alen) * inner);
    }
  }
  if (track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    tape.record([ac, bc, oc, outer, inner, alen, blen]() mutable {
      if (!oc.has_grad()) return;
      const auto& go = oc.grad();
      if (ac.requires_grad()) {
        auto& ga = ac.grad();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < alen * inner; ++i)
            ga[o * alen * inner + i] += go[o * (alen + blen) * inner + i];
      }
      if (bc.requires_grad()) {
        auto& gb = bc.grad();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < blen * inner; ++i)
            gb[o * blen * inner + i] += go[(o * (alen + blen) + alen) * inner + i];
      }
    });
  }
  check_finite(out, "concat");
  return out;
}

Tensor slice(Tape& tape, const Tensor& x, std::size_t start, std::size_t len) {
  if (x.rank() != 1) dim_error("slice: need rank-1, got " + shape_str(x.shape()));
  if (start + len > x.size()) {
    dim_error("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
              ") out of bounds for " + shape_str(x.shape()));
  }
  Tensor out = Tensor::zeros({len});
  std::copy_n(x.values().begin() + start, len, out.values().begin());
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape.record([xc, oc, start, len]() mutable {
      if (!oc.has_grad() || !xc.requires_grad()) return;
      const auto& go = oc.grad();
      auto& gx = xc.grad();
      for (std::size_t i = 0; i < len; ++i) gx[start + i] += go[i];
    });
  }
  check_finite(out, "slice");
  return out;
}

Tensor pick(Tape& tape, const Tensor& x, std::size_t index) {
  if (index >= x.size()) {
    dim_error("pick: index " + std::to_string(index) + " out of range for " +
              shape_str(x.shape()));
  }
  Tensor out = Tensor::scalar(x.values()[index]);
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape.record([xc, oc, index]() mutable {
      if (!oc.has_grad() || !xc.requires_grad()) return;
      xc.grad()[index] += oc.grad()[0];
    });
  }
  return out;
}

Tensor stack_scalars(Tape& tape, std::span<const Tensor> xs) {
  if (xs.empty()) dim_error("stack_scalars: empty input");
  Tensor out = Tensor::zeros({xs.size()});
  bool any_grad = false;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].size() != 1) {
      dim_error("stack_scalars: element " + std::to_string(i) + " has shape " +
                shape_str(xs[i].shape()));
    }
    out.values()[i] = xs[i].values()[0];
    any_grad = any_grad || xs[i].requires_grad();
  }
  if (tape.recording() && any_grad) {
    out.set_requires_grad(true);
    std::vector<Tensor> ins(xs.begin(), xs.end());
    Tensor oc = out;
    tape.record([ins, oc]() mutable {
      if (!oc.has_grad()) return;
      const auto& go = oc.grad();
      for (std::size_t i = 0; i < ins.size(); ++i) {
        if (ins[i].requires_grad()) ins[i].grad()[0] += go[i];
      }
    });
  }
  check_finite(out, "stack_scalars");
  return out;
}

Tensor stack_rows(Tape& tape, std::span<const Tensor> rows) {
  if (rows.empty()) dim_error("stack_rows: empty input");
  const std::size_t h = rows[0].size();
  bool any_grad = false;
  for (const Tensor& r : rows) {
    if (r.rank() != 1 || r.size() != h) {
      dim_error("stack_rows: rows must share a rank-1 shape, got " + shape_str(r.shape()));
    }
    any_grad = any_grad || r.requires_grad();
  }
  Tensor out = Tensor::zeros({rows.size(), h});
  for (std::size_t t = 0; t < rows.size(); ++t) {
    std::copy_n(rows[t].values().begin(), h, out.values().begin() + t * h);
  }
  if (tape.recording() && any_grad) {
    out.set_requires_grad(true);
    std::vector<Tensor> ins(rows.begin(), rows.end());
    Tensor oc = out;
    tape.record([ins, oc, h]() mutable {
      if (!oc.has_grad()) return;
      const auto& go = oc.grad();
      for (std::size_t t = 0; t < ins.size(); ++t) {
        if (!ins[t].requires_grad()) continue;
        auto& g = ins[t].grad();
        for (std::size_t i = 0; i < h; ++i) g[i] += go[t * h + i];
      }
    });
  }
  check_finite(out, "stack_rows");
  return out;
}

Tensor weighted_sum(Tape& tape, const Tensor& w, std::span<const Tensor> rows) {
  if (w.rank() != 1 || w.size() != rows.size()) {
    dim_error("weighted_sum: weight shape " + shape_str(w.shape()) + " does not match " +
              std::to_string(rows.size()) + " rows");
  }
  const std::size_t h = rows.empty() ? 0 : rows[0].size();
  if (rows.empty()) dim_error("weighted_sum: no rows");
  bool any_grad = w.requires_grad();
  for (const Tensor& r : rows) {
    if (r.rank() != 1 || r.size() != h) {
      dim_error("weighted_sum: rows must share a rank-1 shape, got " + shape_str(r.shape()));
    }
    any_grad = any_grad || r.requires_grad();
  }
  Tensor out = Tensor::zeros({h});
  {
    auto& ov = out.values();
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const double wj = w.values()[j];
      const auto& rv = rows[j].values();
      for (std::size_t i = 0; i < h; ++i) ov[i] += wj * rv[i];
    }
  }
  if (tape.recording() && any_grad) {
    out.set_requires_grad(true);
    std::vector<Tensor> ins(rows.begin(), rows.end());
    Tensor wc = w, oc = out;
    tape.record([ins, wc, oc, h]() mutable {
      if (!oc.has_grad()) return;
      const auto& go = oc.grad();
      if (wc.requires_grad()) {
        auto& gw = wc.grad();
        for (std::size_t j = 0; j < ins.size(); ++j) {
          double s = 0.0;
          const auto& rv = ins[j].values();
          for (std::size_t i = 0; i < h; ++i) s += go[i] * rv[i];
          gw[j] += s;
        }
      }
      for (std::size_t j = 0; j < ins.size(); ++j) {
        if (!ins[j].requires_grad()) continue;
        auto& gr = ins[j].grad();
        const double wj = wc.values()[j];
        for (std::size_t i = 0; i < h; ++i) gr[i] += wj * go[i];
      }
    });
  }
  check_finite(out, "weighted_sum");
  return out;
}

Tensor kmax_avg_pool(Tape& tape, const Tensor& x, std::size_t k) {
  if (x.rank() != 2 || x.dim(0) == 0) {
    dim_error("kmax_avg_pool: need a non-empty rank-2 tensor, got " + shape_str(x.shape()));
  }
  if (k == 0) throw Error(ErrorKind::config, "kmax_avg_pool: k must be >= 1");
  const std::size_t t_steps = x.dim(0), h = x.dim(1);
  const std::size_t k_eff = std::min(k, t_steps);
  Tensor out = Tensor::zeros({h});
  // chosen[i*k_eff ..] holds the selected row indices per column.
  std::vector<std::size_t> chosen(h * k_eff);
  {
    const auto& xv = x.values();
    std::vector<std::size_t> order(t_steps);
    for (std::size_t col = 0; col < h; ++col) {
      std::iota(order.begin(), order.end(), 0);
      // Sort by value descending; equal values keep the earliest row.
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return xv[a * h + col] > xv[b * h + col];
      });
      double s = 0.0;
      for (std::size_t i = 0; i < k_eff; ++i) {
        chosen[col * k_eff + i] = order[i];
        s += xv[order[i] * h + col];
      }
      out.values()[col] = s / static_cast<double>(k_eff);
    }
  }
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape.record([xc, oc, chosen, k_eff, h]() mutable {
      if (!oc.has_grad() || !xc.requires_grad()) return;
      const auto& go = oc.grad();
      auto& gx = xc.grad();
      for (std::size_t col = 0; col < h; ++col) {
        const double g = go[col] / static_cast<double>(k_eff);
        for (std::size_t i = 0; i < k_eff; ++i) gx[chosen[col * k_eff + i] * h + col] += g;
      }
    });
  }
  check_finite(out, "kmax_avg_pool");
  return out;
}

Tensor dropout(Tape& tape, const Tensor& x, double rate, bool training, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw Error(ErrorKind::config,
                "dropout rate must lie in [0,1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const double keep = 1.0 - rate;
  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> mask(x.size());
  {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto& xv = x.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < xv.size(); ++i) {
      mask[i] = u(rng) < rate ? 0.0 : 1.0 / keep;
      ov[i] = xv[i] * mask[i];
    }
  }
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape.record([xc, oc, mask]() mutable {
      if (!oc.has_grad() || !xc.requires_grad()) return;
      const auto& go = oc.grad();
      auto& gx = xc.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * mask[i];
    });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor out = Tensor::scalar(s);
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape.record([xc, oc]() mutable {
      if (!oc.has_grad() || !xc.requires_grad()) return;
      const double g = oc.grad()[0];
      auto& gx = xc.grad();
      for (double& v : gx) v += g;
    });
  }
  check_finite(out, "sum");
  return out;
}

Tensor sumsq(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v * v;
  Tensor out = Tensor::scalar(s);
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape.record([xc, oc]() mutable {
      if (!oc.has_grad() || !xc.requires_grad()) return;
      const double g = oc.grad()[0];
      const auto& xv = xc.values();
      auto& gx = xc.grad();
      for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += 2.0 * xv[i] * g;
    });
  }
  check_finite(out, "sumsq");
  return out;
}

Tensor dot(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  Tensor out = Tensor::scalar(s);
  if (track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    tape.record([ac, bc, oc]() mutable {
      if (!oc.has_grad()) return;
      const double g = oc.grad()[0];
      if (ac.requires_grad()) {
        auto& ga = ac.grad();
        const auto& bv = bc.values();
        for (std::size_t i = 0; i < bv.size(); ++i) ga[i] += g * bv[i];
      }
      if (bc.requires_grad()) {
        auto& gb = bc.grad();
        const auto& av = ac.values();
        for (std::size_t i = 0; i < av.size(); ++i) gb[i] += g * av[i];
      }
    });
  }
  check_finite(out, "dot");
  return out;
}

Tensor embed_row(Tape& tape, const Tensor& matrix, std::size_t row) {
  if (matrix.rank() != 2) dim_error("embed_row: need rank-2, got " + shape_str(matrix.shape()));
  const std::size_t rows = matrix.dim(0), cols = matrix.dim(1);
  if (row >= rows) {
    dim_error("embed_row: row " + std::to_string(row) + " out of range for " +
              shape_str(matrix.shape()));
  }
  Tensor out = Tensor::zeros({cols});
  std::copy_n(matrix.values().begin() + row * cols, cols, out.values().begin());
  if (track(tape, {&matrix})) {
    out.set_requires_grad(true);
    Tensor mc = matrix, oc = out;
    tape.record([mc, oc, row, cols]() mutable {
      if (!oc.has_grad() || !mc.requires_grad()) return;
      const auto& go = oc.grad();
      auto& gm = mc.grad();
      for (std::size_t i = 0; i < cols; ++i) gm[row * cols + i] += go[i];
    });
  }
  return out;
}

std::size_t argmax(const Tensor& x) {
  if (x.size() == 0) dim_error("argmax: empty tensor");
  const auto& v = x.values();
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace disco
