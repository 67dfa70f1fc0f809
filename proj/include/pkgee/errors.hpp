#pragma once

#include <stdexcept>
#include <string>

namespace pkgee {

enum class ErrorKind {
  InvalidArgument,
  DegenerateRoots,
  NonPositiveConcentration,
  EvalFailure,
  NotConverged,
  SingularInformation,
  LeverageSingular,
  ZeroTrace,
  NotEstimable,
  SingularContrastCovariance,
  UnsupportedGrid,
  ParseError,
  SchemaError,
  JoinError,
};

const char* to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries one of the kinds above so
/// callers (solver step-halving, the scan driver) can react per kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace pkgee
