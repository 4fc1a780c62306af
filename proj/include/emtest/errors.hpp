#pragma once

#include <stdexcept>
#include <string>

namespace emtest {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad arguments or data that violate a documented precondition.
struct InvalidInputError : Error {
  using Error::Error;
};

// Design matrix rank-deficient on the support of the weights.
struct SingularFitError : Error {
  using Error::Error;
};

// Logistic coefficients diverging (complete or quasi separation).
struct SeparationError : Error {
  using Error::Error;
};

// Mixture density underflowed to zero at some observation.
struct DegenerateLikelihoodError : Error {
  using Error::Error;
};

// Every EM restart collapsed a component weight to the boundary.
struct DegenerateComponentError : Error {
  using Error::Error;
};

// Two null components share the same coefficient sum; the interval
// partition of the real line would contain an empty cell.
struct DegeneratePartitionError : Error {
  using Error::Error;
};

struct ConvergenceError : Error {
  using Error::Error;
};

struct NumericalError : Error {
  using Error::Error;
};

// CSV ingestion failure; message names the offending row/column.
struct CsvError : Error {
  using Error::Error;
};

}  // namespace emtest
