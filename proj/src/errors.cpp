#include "pkgee/errors.hpp"

namespace pkgee {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DegenerateRoots: return "DegenerateRoots";
    case ErrorKind::NonPositiveConcentration: return "NonPositiveConcentration";
    case ErrorKind::EvalFailure: return "EvalFailure";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::SingularInformation: return "SingularInformation";
    case ErrorKind::LeverageSingular: return "LeverageSingular";
    case ErrorKind::ZeroTrace: return "ZeroTrace";
    case ErrorKind::NotEstimable: return "NotEstimable";
    case ErrorKind::SingularContrastCovariance: return "SingularContrastCovariance";
    case ErrorKind::UnsupportedGrid: return "UnsupportedGrid";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::JoinError: return "JoinError";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

}  // namespace pkgee
