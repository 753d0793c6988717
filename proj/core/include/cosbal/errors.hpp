#pragma once

#include <stdexcept>
#include <string>

namespace cosbal {

// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

// Ingest errors carry the offending file/row/column in the message.
class IngestError : public Error {
 public:
  using Error::Error;
};

class MissingColumnError : public IngestError {
 public:
  using IngestError::IngestError;
};

class NonConstantTreatmentError : public IngestError {
 public:
  using IngestError::IngestError;
};

class UnparseableValueError : public IngestError {
 public:
  using IngestError::IngestError;
};

class MissingValueError : public IngestError {
 public:
  using IngestError::IngestError;
};

class UnknownCovariateError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatchError : public Error {
 public:
  using Error::Error;
};

class InfeasibleConstraintError : public Error {
 public:
  using Error::Error;
};

class NonFiniteObjectiveError : public Error {
 public:
  using Error::Error;
};

class TooFewClustersError : public Error {
 public:
  using Error::Error;
};

class DegenerateResidualsError : public Error {
 public:
  using Error::Error;
};

class SingularSystemError : public Error {
 public:
  using Error::Error;
};

}  // namespace cosbal
