#pragma once

#include <stdexcept>
#include <string>

namespace hypermux {

// Bad input shape, bad parameters, malformed files. CLI maps these to exit 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public ValidationError {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : ValidationError(file + ":" + std::to_string(line) + ": " + what), file_(file), line_(line) {}

  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// A point outside the domain of a manifold kernel.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss or gradient during training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hypermux
