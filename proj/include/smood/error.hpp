#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace smood {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A target (or input) range collapsed to a single value.
class DegenerateRange : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  DimensionMismatch(const std::string& where, std::size_t expected, std::size_t got)
      : Error(where + ": expected dimension " + std::to_string(expected) + ", got " +
              std::to_string(got)) {}
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed text input. `line()` is 1-based, 0 when not tied to a line.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Training diverged (non-finite loss) or otherwise could not produce a model.
class TrainingAborted : public Error {
 public:
  using Error::Error;
};

class OracleFailure : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

}  // namespace smood
