#pragma once

#include <stdexcept>
#include <string>

namespace plr {

// Bad argument value or shape (length mismatch, non-finite input, out-of-range parameter).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A box size component that is zero, negative or non-finite.
class DegenerateBox : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Caller broke a documented precondition that is not a plain argument check.
class PreconditionViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A metric whose value is mathematically undefined for the given input.
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// File layout does not match the expected format.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File parsed but holds unusable values (NaN, inf, bad enum names).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Generator ran out of retries.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace plr
