#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fer {

enum class ErrorCode {
  NonPositiveFactor,
  EmptyRegion,
  DegenerateLandmarks,
  DimensionMismatch,
  ExtremeScale,
  BadDimensions,
  ShapeMismatch,
  EmptySet,
  DivergedLoss,
  DegenerateData,
  SingleClass,
  TooFewSubjects,
  BadFoldCount,
  LengthMismatch,
  MissingStageOutput,
  ParseError,
  IoError,
  ConfigError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPositiveFactor: return "NonPositiveFactor";
    case ErrorCode::EmptyRegion: return "EmptyRegion";
    case ErrorCode::DegenerateLandmarks: return "DegenerateLandmarks";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ExtremeScale: return "ExtremeScale";
    case ErrorCode::BadDimensions: return "BadDimensions";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::TooFewSubjects: return "TooFewSubjects";
    case ErrorCode::BadFoldCount: return "BadFoldCount";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::MissingStageOutput: return "MissingStageOutput";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure in the library is reported as an Error carrying a code
/// that tests and callers can switch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fer
