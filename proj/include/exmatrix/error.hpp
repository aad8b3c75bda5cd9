#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace exmatrix {

/// Recoverable error caused by bad input (files, JSON, instances).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed CSV content; row() is the 1-based line number in the file.
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t row)
      : DataError("line " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

/// Structural problem in a JSON document. path() is a JSON pointer.
class ValidationError : public DataError {
 public:
  ValidationError(std::string path, const std::string& what)
      : DataError(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Instance arity mismatch or non-finite feature value.
class InputError : public DataError {
 public:
  using DataError::DataError;
};

/// A rule filter selected nothing.
class EmptyViewError : public DataError {
 public:
  using DataError::DataError;
};

/// A ChangeVector does not belong to the given instance/forest.
class StaleChangeError : public DataError {
 public:
  using DataError::DataError;
};

/// Invalid option combination requested by the caller.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Broken internal invariant (a defect, never bad input).
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace exmatrix
