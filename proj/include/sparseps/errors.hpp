#pragma once

#include <stdexcept>
#include <string>

namespace sparseps {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative solver hit its iteration cap before meeting its tolerance.
class NoConvergence : public Error {
 public:
  using Error::Error;
};

/// An information (Hessian) matrix is singular or too ill-conditioned to invert.
class SingularInformation : public Error {
 public:
  using Error::Error;
};

class NoRespondents : public Error {
 public:
  using Error::Error;
};

/// Too many iterations of a Gibbs chain failed.
class ChainFailure : public Error {
 public:
  using Error::Error;
};

/// Malformed input data (CSV contents, dimensions, invariants).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration (scenario files, hyperparameters, overrides).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace sparseps
