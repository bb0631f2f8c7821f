#ifndef DISCO_TESTS_TESTUTIL_HPP
#define DISCO_TESTS_TESTUTIL_HPP

#include <cmath>
#include <functional>
#include <vector>

#include "disco/tensor.hpp"

namespace testutil {

inline bool approx(double a, double b, double tol = 1e-9) {
  return std::fabs(a - b) <= tol;
}

inline bool approx_all(const std::vector<double>& a, const std::vector<double>& b,
                       double tol = 1e-9) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!approx(a[i], b[i], tol)) return false;
  }
  return true;
}

// Relative error with a floor so near-zero analytic/numeric pairs do not blow up.
inline double rel_err(double analytic, double numeric) {
  double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-3});
  return std::fabs(analytic - numeric) / denom;
}

// Central-difference gradient check of a scalar-valued function of `param`.
// Rebuilds the graph per evaluation: `f` must take a tape and return the
// scalar loss built from the current contents of `param`.
// Returns the max relative error over all entries.
inline double fd_check(disco::Tensor& param,
                       const std::function<disco::Tensor(disco::Tape&)>& f,
                       double step = 1e-5) {
  param.zero_grad();
  disco::Tape tape;
  disco::Tensor loss = f(tape);
  tape.backward(loss);
  std::vector<double> analytic = param.has_grad() ? param.grad() : std::vector<double>(param.size(), 0.0);

  double worst = 0.0;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double orig = param.values()[i];
    param.values()[i] = orig + step;
    disco::Tape tp(false);
    const double up = f(tp).item();
    param.values()[i] = orig - step;
    disco::Tape tm(false);
    const double dn = f(tm).item();
    param.values()[i] = orig;
    const double fd = (up - dn) / (2.0 * step);
    worst = std::max(worst, rel_err(analytic[i], fd));
  }
  return worst;
}

}  // namespace testutil

// Asserts that `expr` throws a disco::Error carrying exactly this kind.
#define CHECK_THROWS_AS_KIND(expr, kind_)                      \
  do {                                                         \
    bool threw_ = false;                                       \
    try {                                                      \
      (void)(expr);                                            \
    } catch (const disco::Error& e_) {                         \
      threw_ = true;                                           \
      CHECK(disco::error_kind_name(e_.kind()) ==               \
            disco::error_kind_name(kind_));                    \
    }                                                          \
    CHECK_MESSAGE(threw_, "expected " #expr " to throw");      \
  } while (0)

#endif
