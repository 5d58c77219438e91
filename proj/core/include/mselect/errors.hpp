#pragma once

#include <stdexcept>
#include <string>

namespace mselect {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A covariance matrix failed Cholesky factorisation even after the jitter retry.
class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

/// The truncation rectangle carries (numerically) zero probability.
class DegenerateTruncation : public Error {
 public:
  using Error::Error;
};

class RankDeficient : public Error {
 public:
  using Error::Error;
};

class CovarianceUpdateError : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class UnreachableTarget : public Error {
 public:
  using Error::Error;
};

class BootstrapUnstable : public Error {
 public:
  using Error::Error;
};

/// Wraps an error raised while processing one record so the caller learns which one.
class RecordError : public Error {
 public:
  RecordError(std::size_t index, const std::string& what)
      : Error("record " + std::to_string(index) + ": " + what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

}  // namespace mselect
