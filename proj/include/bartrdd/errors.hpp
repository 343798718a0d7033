#pragma once

#include <stdexcept>
#include <string>

namespace bartrdd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing or duplicated columns in a CSV schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A cell that could not be parsed as a finite number.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t row, std::string column)
      : Error(msg), row_(row), column_(std::move(column)) {}
  std::size_t row() const { return row_; }
  const std::string& column() const { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

class EmptyDataError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values, including strips too sparse to fit.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// No observations fall inside [c - h, c + h].
class StripEmptyError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace bartrdd
