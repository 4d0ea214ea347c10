#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace modalign {

/// Base of every error raised by the library. `kind()` is a short stable tag
/// used by the command-line front end for its machine-parsable error prefix.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

class DimensionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "dimension"; }
};

/// Violated precondition that is not a shape mismatch (asymmetric input, t < 1, ...).
class ContractError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "contract"; }
};

class NotPsdError : public ContractError {
 public:
  using ContractError::ContractError;
  const char* kind() const noexcept override { return "not-psd"; }
};

/// Malformed input data: schema, ranges, degenerate batches.
class DataError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "data"; }
};

/// Batch covariance needs at least two rows.
class DegenerateBatchError : public DataError {
 public:
  using DataError::DataError;
  const char* kind() const noexcept override { return "degenerate-batch"; }
};

class SchemaError : public DataError {
 public:
  SchemaError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }
  const char* kind() const noexcept override { return "schema"; }

 private:
  std::size_t line_;
};

class RangeError : public DataError {
 public:
  using DataError::DataError;
  const char* kind() const noexcept override { return "range"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

/// Alignment directive syntax error; `position` is the 0-based character offset.
class ParseError : public ConfigError {
 public:
  ParseError(std::size_t position, const std::string& what)
      : ConfigError("position " + std::to_string(position) + ": " + what),
        position_(position) {}
  std::size_t position() const noexcept { return position_; }
  const char* kind() const noexcept override { return "parse"; }

 private:
  std::size_t position_;
};

/// Non-finite values reached the optimizer.
class NumericError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numeric"; }
};

}  // namespace modalign
