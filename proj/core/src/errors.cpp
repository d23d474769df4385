#include "kesten/errors.hpp"

namespace kesten {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NegativeEntry: return "NegativeEntry";
    case ErrorCode::NonSquare: return "NonSquare";
    case ErrorCode::NotAllowable: return "NotAllowable";
    case ErrorCode::ZeroImage: return "ZeroImage";
    case ErrorCode::NotProximal: return "NotProximal";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::InvalidLaw: return "InvalidLaw";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InsufficientProximalSamples: return "InsufficientProximalSamples";
    case ErrorCode::UnsupportedLaw: return "UnsupportedLaw";
    case ErrorCode::DegenerateLeadingPair: return "DegenerateLeadingPair";
    case ErrorCode::NoBracket: return "NoBracket";
    case ErrorCode::BudgetExceeded: return "BudgetExceeded";
    case ErrorCode::NoContraction: return "NoContraction";
    case ErrorCode::PilotTooNoisy: return "PilotTooNoisy";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::NonpositiveAlpha: return "NonpositiveAlpha";
    case ErrorCode::DeltaOutOfRange: return "DeltaOutOfRange";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MissingInput: return "MissingInput";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace kesten
