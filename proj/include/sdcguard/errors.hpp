#pragma once

#include <stdexcept>
#include <string>

namespace sdcguard {

enum class ErrorCode {
  UnknownBenchmark,
  UnstableDiscretization,
  ShapeMismatch,
  AllZeroInput,
  TstepOutOfRange,
  ExponentRangeUnprofiled,
  IoError,
  FormatVersionMismatch,
  SpecHashMismatch,
  EmptyProtectedRegion,
  PositionTooCloseToBoundary,
  TimeMismatch,
  TstepRowMissing,
  RhoTooSmall,
  UnsupportedCoverage,
  InfeasibleConfig,
  LocationOutOfRange,
  IllegalTiling,
  MalformedInput,
  InvalidArgument,
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::UnknownBenchmark: return "UnknownBenchmark";
    case ErrorCode::UnstableDiscretization: return "UnstableDiscretization";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::AllZeroInput: return "AllZeroInput";
    case ErrorCode::TstepOutOfRange: return "TstepOutOfRange";
    case ErrorCode::ExponentRangeUnprofiled: return "ExponentRangeUnprofiled";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::FormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorCode::SpecHashMismatch: return "SpecHashMismatch";
    case ErrorCode::EmptyProtectedRegion: return "EmptyProtectedRegion";
    case ErrorCode::PositionTooCloseToBoundary: return "PositionTooCloseToBoundary";
    case ErrorCode::TimeMismatch: return "TimeMismatch";
    case ErrorCode::TstepRowMissing: return "TstepRowMissing";
    case ErrorCode::RhoTooSmall: return "RhoTooSmall";
    case ErrorCode::UnsupportedCoverage: return "UnsupportedCoverage";
    case ErrorCode::InfeasibleConfig: return "InfeasibleConfig";
    case ErrorCode::LocationOutOfRange: return "LocationOutOfRange";
    case ErrorCode::IllegalTiling: return "IllegalTiling";
    case ErrorCode::MalformedInput: return "MalformedInput";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace sdcguard
