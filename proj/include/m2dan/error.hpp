#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace m2dan {

enum class ErrorCode {
  ShapeMismatch,
  InvalidShape,
  InvalidAxis,
  DomainError,
  NotScalar,
  NonFiniteInput,
  UnsupportedKernel,
  InvalidSpec,
  NotOneHot,
  MissingSource,
  MalformedPgm,
  EmptyClassDir,
  IndivisibleBatch,
  MissingGradient,
  VersionMismatch,
  SpecMismatch,
  CorruptFile,
  EmptyInput,
  DegenerateLabels,
  MalformedCsv,
  IoError,
  ConfigError,
  NumericFailure,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InvalidShape: return "InvalidShape";
    case ErrorCode::InvalidAxis: return "InvalidAxis";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::NotScalar: return "NotScalar";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::UnsupportedKernel: return "UnsupportedKernel";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::NotOneHot: return "NotOneHot";
    case ErrorCode::MissingSource: return "MissingSource";
    case ErrorCode::MalformedPgm: return "MalformedPgm";
    case ErrorCode::EmptyClassDir: return "EmptyClassDir";
    case ErrorCode::IndivisibleBatch: return "IndivisibleBatch";
    case ErrorCode::MissingGradient: return "MissingGradient";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::SpecMismatch: return "SpecMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DegenerateLabels: return "DegenerateLabels";
    case ErrorCode::MalformedCsv: return "MalformedCsv";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::NumericFailure: return "NumericFailure";
  }
  return "Unknown";
}

// Every failure raised by the library carries one of the codes above so
// callers (and the CLI exit-code mapping) can branch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace m2dan
