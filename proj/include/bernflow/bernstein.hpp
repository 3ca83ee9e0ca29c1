#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace bernflow {

// Strictly increasing Bernstein coefficients (theta_0 < ... < theta_M).
struct MonotoneCoefficients {
  std::vector<double> theta;

  std::size_t order() const { return theta.size() - 1; }
  bool strictly_increasing() const;
};

// Bernstein basis of a fixed order M, the M+1 Beta(i+1, M-i+1) densities.
// Binomial coefficients are cached in log space for the rows M and M-1 so
// evaluation stays exact for orders well past the M=10 / M=20 range.
class BernsteinBasis {
 public:
  explicit BernsteinBasis(std::size_t order);

  std::size_t order() const { return order_; }

  // Component i is the Beta(i+1, M-i+1) density at y_tilde; the components
  // sum to M+1. y_tilde must lie in [0, 1].
  std::vector<double> eval(double y_tilde) const;

  // sum_i Be_i(y_tilde) * theta_i / (M+1). Lies in [theta_0, theta_M].
  double poly_eval(const MonotoneCoefficients& coeffs, double y_tilde) const;

  // d/dy_tilde of poly_eval via the degree reduction formula
  //   M * sum_{i<M} (theta_{i+1} - theta_i) * b_{i,M-1}(y_tilde),
  // strictly positive on (0,1) for strictly increasing coefficients.
  double poly_deriv(const MonotoneCoefficients& coeffs, double y_tilde) const;

  double log_binom(std::size_t k) const { return log_binom_m_[k]; }

 private:
  void check_domain(double y_tilde) const;

  std::size_t order_;
  std::vector<double> log_binom_m_;    // log C(M, k), k = 0..M
  std::vector<double> log_binom_m1_;   // log C(M-1, k), k = 0..M-1
};

// theta_0 = gamma_0, theta_k = theta_{k-1} + exp(gamma_k). Rejects
// non-finite inputs; the result is strictly increasing by construction.
MonotoneCoefficients monotone_from_unconstrained(std::span<const double> gamma);

}  // namespace bernflow
