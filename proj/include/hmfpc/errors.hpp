#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace hmfpc {

// Base of every error thrown by the library. The CLI maps subclasses onto
// distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. `line` is 1-based; 0 when the problem is not tied to
// a particular line (e.g. an empty file).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class DegenerateDesignError : public Error {
 public:
  using Error::Error;
};

class EmptySubjectError : public Error {
 public:
  using Error::Error;
};

// A non-finite value or failed factorization inside a numerical kernel.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what,
                          std::optional<std::size_t> subject = std::nullopt)
      : Error(subject ? what + " (subject " + std::to_string(*subject) + ")"
                      : what),
        subject_(subject) {}
  std::optional<std::size_t> subject() const { return subject_; }

 private:
  std::optional<std::size_t> subject_;
};

class NonDifferentiableError : public Error {
 public:
  using Error::Error;
};

class IndefiniteHessianError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

class TuningError : public Error {
 public:
  using Error::Error;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
};

}  // namespace hmfpc
