#pragma once

#include <stdexcept>
#include <string>

namespace croco {

/// Base error. Carries the owning module and the offending field so the CLI
/// can report "where" as well as "what".
class Error : public std::runtime_error {
 public:
  Error(std::string module, std::string field, const std::string& message,
        const std::string& remedy = {});

  const std::string& module() const noexcept { return module_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string module_;
  std::string field_;
};

/// Invalid user configuration (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file (exit code 2).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Dimension mismatch between a model and an input.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An operation was called on an input that violates its precondition,
/// e.g. asking for a counterfactual of an instance already in class 1.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace croco
