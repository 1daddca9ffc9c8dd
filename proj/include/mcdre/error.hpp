#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mcdre {

/// Base of every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Reverse pass asked for a node that does not belong to the tape.
class GraphError : public Error {
 public:
  using Error::Error;
};

/// Cross mechanism invoked without the companion states it needs.
class WiringError : public Error {
 public:
  using Error::Error;
};

/// Bad input data: out-of-range ids or labels, malformed files.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed text file; carries the 1-based line number.
class ParseError : public DataError {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : DataError(file + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Invalid hyperparameters or model wiring requested by configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Mention set cannot be represented by the requested tagging scheme.
class SchemeCapacityError : public Error {
 public:
  using Error::Error;
};

}  // namespace mcdre
