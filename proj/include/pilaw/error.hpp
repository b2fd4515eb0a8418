#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pilaw {

enum class ErrorCode {
  NoNullSpace,
  ZeroVector,
  LengthMismatch,
  NonPositiveInput,
  ParseError,
  MissingOutputColumn,
  SpecInvalid,
  TooFewSamples,
  DegenerateData,
  BadArchitecture,
  NonFiniteLoss,
  BadConfig,
  AllNearZero,
  DegenerateBasis,
  RankDeficient,
  ConstantActual,
  Overflow,
  Io,
  Cancelled,
};

std::string_view to_string(ErrorCode code) noexcept;

/// The single exception type thrown by the library. The code identifies the
/// failure class; the message carries the context (row, column, variable).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace pilaw
