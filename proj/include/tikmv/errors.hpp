#pragma once

#include <stdexcept>
#include <string>

namespace tikmv {

// Base of every exception the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed arguments: empty clouds, shape mismatches.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Well-formed input the operation does not support (e.g. exact W2 in dim > 1).
class Unsupported : public Error {
 public:
  using Error::Error;
};

// Inconsistent configuration: grid mismatch, invalid model data, seed lineage.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A coefficient evaluator produced a non-finite value.
class ModelError : public Error {
 public:
  using Error::Error;
};

// Numerical failure: blow-up of a simulation or a Riccati flow, Newton failure.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : NumericalError(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace tikmv
