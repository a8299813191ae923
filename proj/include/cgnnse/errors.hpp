#pragma once

#include <stdexcept>
#include <string>

namespace cgnnse {

/// Base class for all toolkit errors.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: malformed files, shape mismatches, invalid flags. CLI exit code 2.
class InputError : public Error {
public:
  using Error::Error;
};

/// Numerical failure: divergence, singular systems, non-finite values. CLI exit code 3.
class NumericalError : public Error {
public:
  using Error::Error;
};

/// A stated contract was violated at runtime (e.g. a stability certificate
/// with measured distance above its bound). CLI exit code 4.
class ContractViolation : public Error {
public:
  using Error::Error;
};

}  // namespace cgnnse
