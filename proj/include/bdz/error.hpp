#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bdz {

enum class ErrorKind {
  MissingColumn,
  MalformedRow,
  DuplicateStem,
  OutOfBounds,
  EmptyCell,
  BadConfig,
  OutOfDomain,
  Overflow,
  NonConvergence,
  BasisMismatch,
  DuplicateSites,
  SingularV,
  EigenFailure,
  NonPD,
  DegenerateRow,
  EmptyCluster,
  GlassoNonConvergence,
  LogitNonConvergence,
  BadK,
  AllRestartsFailed,
  LengthMismatch,
  IOError,
};

std::string_view to_string(ErrorKind kind);

/// Library-wide exception. `kind()` carries the machine-readable error name
/// that the CLI reports in its error JSON.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::string_view name() const noexcept { return to_string(kind_); }

 private:
  ErrorKind kind_;
};

}  // namespace bdz
