#include "allocrisk/error.hpp"

namespace allocrisk {

std::string_view code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidPrior: return "InvalidPrior";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::SchurNotDiagonal: return "SchurNotDiagonal";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::SingularPhi: return "SingularPhi";
    case ErrorCode::NonPositiveDenominator: return "NonPositiveDenominator";
    case ErrorCode::NonIntegerH2: return "NonIntegerH2";
    case ErrorCode::EmptyArm: return "EmptyArm";
    case ErrorCode::SingularScatter: return "SingularScatter";
    case ErrorCode::DegenerateDesign: return "DegenerateDesign";
    case ErrorCode::InfeasibleConstraint: return "InfeasibleConstraint";
    case ErrorCode::TooLargeForExhaustive: return "TooLargeForExhaustive";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::AlreadyScored: return "AlreadyScored";
    case ErrorCode::OddN: return "OddN";
    case ErrorCode::SingularGram: return "SingularGram";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::RaggedRows: return "RaggedRows";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::RevisionConflict: return "RevisionConflict";
  }
  return "Unknown";
}

std::string_view code_module(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidPrior:
    case ErrorCode::NotPositiveDefinite:
    case ErrorCode::SchurNotDiagonal:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::SingularSystem:
      return "model";
    case ErrorCode::SingularPhi:
    case ErrorCode::NonPositiveDenominator:
    case ErrorCode::NonIntegerH2:
    case ErrorCode::EmptyArm:
    case ErrorCode::SingularScatter:
    case ErrorCode::DegenerateDesign:
      return "risk";
    case ErrorCode::InfeasibleConstraint:
    case ErrorCode::TooLargeForExhaustive:
    case ErrorCode::InvalidConfig:
      return "allocator";
    case ErrorCode::LengthMismatch:
    case ErrorCode::AlreadyScored:
      return "sequential";
    case ErrorCode::OddN:
    case ErrorCode::SingularGram:
      return "balance";
    case ErrorCode::ParseError:
    case ErrorCode::RaggedRows:
    case ErrorCode::EmptyFile:
      return "io";
    case ErrorCode::NotFound:
    case ErrorCode::RevisionConflict:
      return "service";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(message), code_(code) {}

std::string Error::qualified() const {
  std::string out(code_module(code_));
  out += '.';
  out += code_name(code_);
  return out;
}

}  // namespace allocrisk
