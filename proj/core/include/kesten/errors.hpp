#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kesten {

enum class ErrorCode {
  NegativeEntry,
  NonSquare,
  NotAllowable,
  ZeroImage,
  NotProximal,
  NonConvergence,
  InvalidLaw,
  ParseError,
  InsufficientProximalSamples,
  UnsupportedLaw,
  DegenerateLeadingPair,
  NoBracket,
  BudgetExceeded,
  NoContraction,
  PilotTooNoisy,
  TooFewSamples,
  NonpositiveAlpha,
  DeltaOutOfRange,
  InvalidArgument,
  MissingInput,
  Io,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace kesten
