#pragma once

#include <stdexcept>
#include <string>

namespace roughvol {

// Argument outside the mathematical domain of an operation (r <= 0, R <= 1, ...).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Parameters for which the requested object does not exist
// (non-square-integrable kernel, infeasible moment exponent, ...).
struct InfeasibleError : std::domain_error {
  using std::domain_error::domain_error;
};

// Malformed input data: nonfinite samples, size mismatch, unsorted input.
struct DataError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A documented precondition of an algorithm does not hold.
struct PreconditionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Numerical breakdown (e.g. covariance factorization failure).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

template <class E>
inline void require(bool cond, const std::string& what) {
  if (!cond) throw E(what);
}

}  // namespace detail

}  // namespace roughvol
