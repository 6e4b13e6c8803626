#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace divflow {

enum class ErrorCode {
  EmptyMask,
  BasepointOutside,
  CellOutside,
  DimensionTooSmall,
  BadDimension,
  ShapeMismatch,
  NonpositiveRadius,
  AtomOutside,
  BadTau,
  BadAngle,
  InfeasibleSpec,
  EmptyDomain,
  UncoveredPoint,
  Unbalanced,
  DisconnectedImbalance,
  NotADipole,
  NotMeanZero,
  ToleranceNotReached,
  TooLarge,
  BadExponent,
  GridTooNarrow,
  ParseError,
  IoError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::BasepointOutside: return "BasepointOutside";
    case ErrorCode::CellOutside: return "CellOutside";
    case ErrorCode::DimensionTooSmall: return "DimensionTooSmall";
    case ErrorCode::BadDimension: return "BadDimension";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonpositiveRadius: return "NonpositiveRadius";
    case ErrorCode::AtomOutside: return "AtomOutside";
    case ErrorCode::BadTau: return "BadTau";
    case ErrorCode::BadAngle: return "BadAngle";
    case ErrorCode::InfeasibleSpec: return "InfeasibleSpec";
    case ErrorCode::EmptyDomain: return "EmptyDomain";
    case ErrorCode::UncoveredPoint: return "UncoveredPoint";
    case ErrorCode::Unbalanced: return "Unbalanced";
    case ErrorCode::DisconnectedImbalance: return "DisconnectedImbalance";
    case ErrorCode::NotADipole: return "NotADipole";
    case ErrorCode::NotMeanZero: return "NotMeanZero";
    case ErrorCode::ToleranceNotReached: return "ToleranceNotReached";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::BadExponent: return "BadExponent";
    case ErrorCode::GridTooNarrow: return "GridTooNarrow";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above; the
/// CLI echoes `to_string(code())` verbatim.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace divflow
