#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace harqest {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-square input, mismatched operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid probabilistic model (non-stochastic matrix, reducible chain, ...).
class ModelError : public Error {
 public:
  using Error::Error;
};

// A null space that is not one-dimensional, or has no nonnegative generator.
class DegenerateModelError : public ModelError {
 public:
  using ModelError::ModelError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

// The local Kalman filter did not reach a steady state.
class InstabilityError : public Error {
 public:
  InstabilityError(const std::string& what, std::size_t iterations)
      : Error(what), iterations_(iterations) {}
  std::size_t iterations() const noexcept { return iterations_; }

 private:
  std::size_t iterations_;
};

// Relative value iteration hit its iteration cap.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::size_t iterations, double span)
      : Error(what), iterations_(iterations), span_(span) {}
  std::size_t iterations() const noexcept { return iterations_; }
  double final_span() const noexcept { return span_; }

 private:
  std::size_t iterations_;
  double span_;
};

// Cost ladder would leave the representable range.
class DepthError : public Error {
 public:
  DepthError(const std::string& what, std::size_t safe_depth)
      : Error(what), safe_depth_(safe_depth) {}
  std::size_t safe_depth() const noexcept { return safe_depth_; }

 private:
  std::size_t safe_depth_;
};

}  // namespace harqest
