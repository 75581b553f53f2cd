#pragma once

#include <stdexcept>
#include <string>

namespace hybridtree {

// Bad input or arguments supplied by the caller (CLI maps these to exit code 1).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Value outside the mathematical domain of a function.
class DomainError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Malformed data files: CSV, schema, or model JSON.
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RankDeficiencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A validation measure has no defined value for the given input.
class UndefinedMetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class VersionError : public IngestionError {
 public:
  using IngestionError::IngestionError;
};

}  // namespace hybridtree
