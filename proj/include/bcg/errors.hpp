#pragma once

#include <stdexcept>
#include <string>

namespace bcg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension mismatch, out-of-range index or otherwise invalid argument.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A matrix expected to be positive (semi-)definite is not.
class NotPsdError : public Error {
 public:
  using Error::Error;
};

/// An iteration hit a zero or negative curvature/normalisation term.
class BreakdownError : public Error {
 public:
  using Error::Error;
};

/// The information matrix of a posterior update is numerically singular.
class SingularInformationError : public Error {
 public:
  using Error::Error;
};

/// Gram matrix of covariance factors too ill-conditioned to invert.
class IllConditionedError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Too many test problems broke down during a calibration run.
class SkipBudgetError : public Error {
 public:
  using Error::Error;
};

}  // namespace bcg
