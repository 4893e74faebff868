#pragma once

#include <stdexcept>
#include <string>

namespace pro2 {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed file header (bad magic, unsupported version).
class FormatError : public Error {
public:
  using Error::Error;
};

/// File payload shorter than its header promises.
class LengthError : public Error {
public:
  using Error::Error;
};

/// Values that violate a data invariant (non-finite entries, labels out of range).
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Text input that cannot be parsed.
class ParseError : public Error {
public:
  using Error::Error;
};

/// A class has fewer examples than a balanced subsample requires.
class InsufficientDataError : public Error {
public:
  InsufficientDataError(const std::string& what, int label) : Error(what), label_(label) {}
  int label() const noexcept { return label_; }

private:
  int label_;
};

/// Caller broke a precondition (shape mismatch, rank out of range).
class ContractError : public Error {
public:
  using Error::Error;
};

/// Numerically singular or rank-deficient input.
class DegeneracyError : public Error {
public:
  using Error::Error;
};

/// Filesystem failure.
class IoError : public Error {
public:
  using Error::Error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

}  // namespace detail
}  // namespace pro2
