#pragma once

namespace bernflow {

// Base distribution of the transformed variable z. Only the standard
// normal is supported; the enum exists so checkpoints can name it.
struct BaseDistribution {
  enum class Kind { kStdNormal };
  Kind kind = Kind::kStdNormal;
};

namespace stdnormal {

inline constexpr double kLogSqrt2Pi = 0.9189385332046727417803297;

double log_pdf(double z);
double pdf(double z);
double cdf(double z);

// Inverse CDF. Rational approximation refined with one Halley step,
// accurate to full double precision on (0, 1).
double quantile(double p);

}  // namespace stdnormal
}  // namespace bernflow
