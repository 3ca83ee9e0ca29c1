#include "bernflow/bernstein.hpp"

#include <cmath>
#include <string>

#include "bernflow/errors.hpp"

namespace bernflow {

namespace {

std::vector<double> log_binom_row(std::size_t n) {
  std::vector<double> row(n + 1);
  row[0] = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    row[k] = row[k - 1] + std::log(static_cast<double>(n - k + 1)) -
             std::log(static_cast<double>(k));
  }
  return row;
}

}  // namespace

bool MonotoneCoefficients::strictly_increasing() const {
  for (std::size_t k = 1; k < theta.size(); ++k) {
    if (!(theta[k - 1] < theta[k])) return false;
  }
  return true;
}

BernsteinBasis::BernsteinBasis(std::size_t order) : order_(order) {
  if (order_ < 1) throw DomainError("bernstein: order must be >= 1");
  log_binom_m_ = log_binom_row(order_);
  log_binom_m1_ = log_binom_row(order_ - 1);
}

void BernsteinBasis::check_domain(double y_tilde) const {
  if (!(y_tilde >= 0.0 && y_tilde <= 1.0)) {
    throw DomainError("bernstein: y_tilde = " + std::to_string(y_tilde) +
                      " outside [0, 1]");
  }
}

std::vector<double> BernsteinBasis::eval(double y_tilde) const {
  check_domain(y_tilde);
  const std::size_t m = order_;
  std::vector<double> out(m + 1, 0.0);
  // Endpoints collapse to a single component; avoids 0^0 arithmetic.
  if (y_tilde == 0.0) {
    out[0] = static_cast<double>(m + 1);
    return out;
  }
  if (y_tilde == 1.0) {
    out[m] = static_cast<double>(m + 1);
    return out;
  }
  const double log_y = std::log(y_tilde);
  const double log_1my = std::log1p(-y_tilde);
  const double log_mp1 = std::log(static_cast<double>(m + 1));
  for (std::size_t i = 0; i <= m; ++i) {
    out[i] = std::exp(log_mp1 + log_binom_m_[i] + static_cast<double>(i) * log_y +
                      static_cast<double>(m - i) * log_1my);
  }
  return out;
}

double BernsteinBasis::poly_eval(const MonotoneCoefficients& coeffs,
                                 double y_tilde) const {
  check_domain(y_tilde);
  if (coeffs.theta.size() != order_ + 1) {
    throw StructuralError("bernstein: coefficient count does not match order");
  }
  if (y_tilde == 0.0) return coeffs.theta.front();
  if (y_tilde == 1.0) return coeffs.theta.back();
  // Be_i / (M+1) is the standard basis polynomial b_{i,M}.
  const double log_y = std::log(y_tilde);
  const double log_1my = std::log1p(-y_tilde);
  double acc = 0.0;
  for (std::size_t i = 0; i <= order_; ++i) {
    acc += coeffs.theta[i] *
           std::exp(log_binom_m_[i] + static_cast<double>(i) * log_y +
                    static_cast<double>(order_ - i) * log_1my);
  }
  return acc;
}

double BernsteinBasis::poly_deriv(const MonotoneCoefficients& coeffs,
                                  double y_tilde) const {
  check_domain(y_tilde);
  if (coeffs.theta.size() != order_ + 1) {
    throw StructuralError("bernstein: coefficient count does not match order");
  }
  const std::size_t m = order_;
  if (y_tilde == 0.0) {
    return static_cast<double>(m) * (coeffs.theta[1] - coeffs.theta[0]);
  }
  if (y_tilde == 1.0) {
    return static_cast<double>(m) * (coeffs.theta[m] - coeffs.theta[m - 1]);
  }
  const double log_y = std::log(y_tilde);
  const double log_1my = std::log1p(-y_tilde);
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 <= m; ++i) {
    acc += (coeffs.theta[i + 1] - coeffs.theta[i]) *
           std::exp(log_binom_m1_[i] + static_cast<double>(i) * log_y +
                    static_cast<double>(m - 1 - i) * log_1my);
  }
  return static_cast<double>(m) * acc;
}

MonotoneCoefficients monotone_from_unconstrained(std::span<const double> gamma) {
  if (gamma.empty()) throw DomainError("monotone coefficients: empty gamma");
  MonotoneCoefficients out;
  out.theta.resize(gamma.size());
  for (double g : gamma) {
    if (!std::isfinite(g)) {
      throw DomainError("monotone coefficients: non-finite gamma");
    }
  }
  out.theta[0] = gamma[0];
  for (std::size_t k = 1; k < gamma.size(); ++k) {
    out.theta[k] = out.theta[k - 1] + std::exp(gamma[k]);
  }
  return out;
}

}  // namespace bernflow
