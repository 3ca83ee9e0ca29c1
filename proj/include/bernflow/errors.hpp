#pragma once

#include <stdexcept>
#include <string>

namespace bernflow {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed graph, shape mismatch, bad argument wiring.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Input outside a function's mathematical domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Unreadable or malformed data files (CLI exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

// Training produced non-finite losses for too long (CLI exit code 4).
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Requested probability level lies outside the attainable range of the
// transformation; carries the attainable z-interval in the message.
class OutOfSupportError : public DomainError {
 public:
  OutOfSupportError(const std::string& msg, double z_lo, double z_hi)
      : DomainError(msg), z_lo(z_lo), z_hi(z_hi) {}
  double z_lo;
  double z_hi;
};

}  // namespace bernflow
