#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedrr {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument: dimension mismatch, out-of-range size, bad stepsize.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A linear system or statistic is not defined for the given data.
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

/// A request exceeds what an exhaustive method can enumerate.
class ResourceError : public Error {
 public:
  using Error::Error;
};

/// A problem lacks a quantity (x*, f*, infima) that an operation needs.
class CapabilityError : public Error {
 public:
  CapabilityError(const std::string& field, const std::string& context)
      : Error(context + ": missing " + field), field_(field) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Stepsizes fall outside the range in which a bound applies.
class RegimeError : public Error {
 public:
  using Error::Error;
};

/// Statistics are inconsistent beyond their estimation tolerance.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Experiment spec file problems. Mapped to exit code 2 by the CLI.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedrr
