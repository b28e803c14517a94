#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pivotsim {

enum class ErrorCode {
  ZeroAxis,
  InvalidAxis,
  Degenerate,
  SingularInertia,
  SingularInnovation,
  NoRampEnd,
  Unsettled,
  WindowTooShort,
  ZeroRate,
  RankDeficient,
  TooFewSamples,
  ParseError,
  ValidationError,
  IoError,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroAxis: return "ZeroAxis";
    case ErrorCode::InvalidAxis: return "InvalidAxis";
    case ErrorCode::Degenerate: return "Degenerate";
    case ErrorCode::SingularInertia: return "SingularInertia";
    case ErrorCode::SingularInnovation: return "SingularInnovation";
    case ErrorCode::NoRampEnd: return "NoRampEnd";
    case ErrorCode::Unsettled: return "Unsettled";
    case ErrorCode::WindowTooShort: return "WindowTooShort";
    case ErrorCode::ZeroRate: return "ZeroRate";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure in the library is reported through this exception; `code()`
/// identifies the condition and `what()` carries a human readable detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code), detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace pivotsim
