#pragma once

#include <stdexcept>
#include <string>

namespace condrisk {

/// Malformed input: wrong dimensions, bad schema, unknown kinds.
class SchemaError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input is well formed but violates a model invariant
/// (non-measurable threshold, esssup(B) >= sup U, non-normalized density, ...).
class InvariantError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A numerical solver failed to reach its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// The penalty supremum is +infinity on some block, or the measure is
/// outside the admissible dual set.
class DivergenceError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace condrisk
