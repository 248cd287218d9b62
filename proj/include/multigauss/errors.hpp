#ifndef MULTIGAUSS_ERRORS_HPP
#define MULTIGAUSS_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace multigauss {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument violates an operation's precondition (shape, range, finiteness).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

class InvalidConfig : public Error {
 public:
  using Error::Error;
};

// A computation produced a non-finite value.
class NumericFailure : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

// Pearson correlation on constant input; callers report the value as missing.
class UndefinedCorrelation : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace multigauss

#endif  // MULTIGAUSS_ERRORS_HPP
