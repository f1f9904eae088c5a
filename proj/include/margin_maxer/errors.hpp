#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace margin_maxer {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A scalar argument lies outside its admissible domain (e.g. gamma_star not in (0,1)).
class DomainError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// Malformed input text. `row()` is 1-based and counts the header as row 1.
class ParseError : public Error {
 public:
  ParseError(std::size_t row, const std::string& what)
      : Error("row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// One or more feature vectors have norm above 1.
class NormViolation : public Error {
 public:
  NormViolation(std::vector<std::size_t> rows, const std::string& what)
      : Error(what), rows_(std::move(rows)) {}
  const std::vector<std::size_t>& rows() const noexcept { return rows_; }

 private:
  std::vector<std::size_t> rows_;
};

class ZeroVectorError : public Error {
 public:
  using Error::Error;
};

/// The requested quantity is undefined at this point (e.g. centripetal velocity on the w* ray).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class NonSeparableError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment configuration; `field()` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace margin_maxer
