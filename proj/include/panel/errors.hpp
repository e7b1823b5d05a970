#pragma once

#include <stdexcept>
#include <string>

namespace panel {

// Invalid argument or violated precondition (bad probability vector,
// out-of-range threshold, empty vote set, ...).
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure in linear algebra; pivot is the index of the first
// non-positive Cholesky pivot, or -1 when not applicable.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& msg, int pivot = -1)
      : std::runtime_error(msg), pivot_(pivot) {}
  int pivot() const { return pivot_; }

 private:
  int pivot_;
};

// Malformed input file; line is 1-based.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, int line)
      : std::runtime_error(msg + " (line " + std::to_string(line) + ")"),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Structurally valid file whose contents violate the dataset schema
// (K/M/H mismatch, vote out of range, ...).
class SchemaError : public std::runtime_error {
 public:
  explicit SchemaError(const std::string& msg) : std::runtime_error(msg) {}
};

// MCMC could not proceed (non-finite density at the initial state, failed
// step-size search). Carries the offending unconstrained state.
class SamplerError : public std::runtime_error {
 public:
  SamplerError(const std::string& msg, std::vector<double> state = {})
      : std::runtime_error(msg), state_(std::move(state)) {}
  const std::vector<double>& state() const { return state_; }

 private:
  std::vector<double> state_;
};

// Monte-Carlo estimate collapsed (e.g. every importance weight underflowed).
class InferenceError : public std::runtime_error {
 public:
  explicit InferenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace panel
