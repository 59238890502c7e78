#pragma once

#include <stdexcept>
#include <string>

namespace tmrec {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& message) : std::runtime_error(message) {}
};

/// Vector or matrix widths disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Index (class id, k, ...) outside its valid range.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Serialized artifact is truncated, corrupt or of an unknown version.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Value cannot be represented under a feature schema.
class EncodingError : public Error {
 public:
  using Error::Error;
};

/// Input data is empty or otherwise unusable.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A required column is missing from an input table.
class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

/// Rows reference ids that do not exist in their table.
class IntegrityError : public DataError {
 public:
  using DataError::DataError;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

/// No scorable rows for a metric.
class MetricError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& message, std::size_t epoch)
      : Error(message), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

/// An attribution scorer threw; carries the failing permutation sample.
class ScorerError : public Error {
 public:
  ScorerError(const std::string& message, std::size_t permutation)
      : Error(message), permutation_(permutation) {}
  std::size_t permutation() const noexcept { return permutation_; }

 private:
  std::size_t permutation_;
};

/// On-disk artifacts disagree with each other (hash or checksum mismatch).
class ArtifactError : public Error {
 public:
  using Error::Error;
};

}  // namespace tmrec
