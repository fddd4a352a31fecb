#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace typespace {

// Base class for recoverable failures on user data (bad files, bad input).
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Malformed source or annotation text. `offset` is a byte offset into the
// input, or a line number for line-oriented formats.
class ParseError : public Error {
public:
  ParseError(const std::string &what, std::size_t offset)
      : Error(what), offset_(offset) {}
  std::size_t offset() const { return offset_; }

private:
  std::size_t offset_;
};

class DataError : public Error {
public:
  using Error::Error;
};

class NotFound : public Error {
public:
  using Error::Error;
};

class Conflict : public Error {
public:
  using Error::Error;
};

// Programming errors: shape mismatches, misuse of an API contract.
class ContractViolation : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// A tape operation produced NaN or infinity (checked in builds without NDEBUG).
class NonFiniteValue : public ContractViolation {
public:
  using ContractViolation::ContractViolation;
};

} // namespace typespace
