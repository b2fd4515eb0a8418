#include "pilaw/error.hpp"

namespace pilaw {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NoNullSpace: return "NoNullSpace";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NonPositiveInput: return "NonPositiveInput";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::MissingOutputColumn: return "MissingOutputColumn";
    case ErrorCode::SpecInvalid: return "SpecInvalid";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::BadArchitecture: return "BadArchitecture";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::AllNearZero: return "AllNearZero";
    case ErrorCode::DegenerateBasis: return "DegenerateBasis";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::ConstantActual: return "ConstantActual";
    case ErrorCode::Overflow: return "Overflow";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Cancelled: return "Cancelled";
  }
  return "Unknown";
}

}  // namespace pilaw
