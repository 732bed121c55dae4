#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sepunmix {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument lies outside the domain on which the operation is defined.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A dictionary A(x) lost full column rank.
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

/// Vector or matrix dimensions disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent model or experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A stated invariant was violated by an input or an internal result.
class InvariantError : public Error {
 public:
  using Error::Error;
};

/// Monte Carlo probing could not place a single sample inside the box.
class CoverageError : public Error {
 public:
  using Error::Error;
};

/// Rejection sampling of a separated support exceeded its retry budget.
class PackingError : public Error {
 public:
  PackingError(const std::string& what, std::size_t achieved)
      : Error(what), achieved_(achieved) {}
  std::size_t achieved() const { return achieved_; }

 private:
  std::size_t achieved_;
};

}  // namespace sepunmix
