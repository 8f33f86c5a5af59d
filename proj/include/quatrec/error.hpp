#ifndef QUATREC_ERROR_HPP_
#define QUATREC_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace quatrec {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A history (or attention input) has no unmasked position.
class EmptyHistoryError : public Error {
 public:
  using Error::Error;
};

/// An id or name does not exist.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed, empty or otherwise unusable input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A user has interacted with every item, so no negative exists.
class SamplingExhaustedError : public DataError {
 public:
  using DataError::DataError;
};

/// NaN/Inf showed up where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Correlation over inputs with zero variance.
class UndefinedCorrelationError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace quatrec

#endif  // QUATREC_ERROR_HPP_
