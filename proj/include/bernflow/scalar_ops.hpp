#pragma once

#include <cmath>

namespace bernflow::detail {

// Shared scalar kernels. The graph ops and the plain evaluation path must
// agree to rounding, so both call these.

inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// max(x, 0) + log1p(exp(-|x|)); never overflows for large |x|.
inline double softplus(double x) {
  return std::fmax(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

// log sigma'(x) in a form that stays finite under saturation.
inline double log_sigmoid_deriv(double x) {
  return -softplus(x) - softplus(-x);
}

}  // namespace bernflow::detail
