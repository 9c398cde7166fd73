#pragma once

#include <stdexcept>
#include <string>

namespace mmr {

// Base for every error raised by the library. The CLI maps subclasses onto
// exit codes (validation -> 1, io/parse -> 2).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class UnknownSymbolError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public IoError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : IoError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// DeepFool hit a vanishing margin gradient.
class DegenerateGradientError : public Error {
 public:
  using Error::Error;
};

class MetricUndefinedError : public Error {
 public:
  using Error::Error;
};

}  // namespace mmr
