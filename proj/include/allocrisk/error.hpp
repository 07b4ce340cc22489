#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace allocrisk {

enum class ErrorCode {
  // model
  InvalidPrior,
  NotPositiveDefinite,
  SchurNotDiagonal,
  DimensionMismatch,
  SingularSystem,
  // risk
  SingularPhi,
  NonPositiveDenominator,
  NonIntegerH2,
  EmptyArm,
  SingularScatter,
  DegenerateDesign,
  // allocator
  InfeasibleConstraint,
  TooLargeForExhaustive,
  InvalidConfig,
  // sequential
  LengthMismatch,
  AlreadyScored,
  // balance
  OddN,
  SingularGram,
  // io
  ParseError,
  RaggedRows,
  EmptyFile,
  // service
  NotFound,
  RevisionConflict,
};

std::string_view code_name(ErrorCode code);

/// Name of the module that owns `code`, e.g. "risk" for SingularPhi.
std::string_view code_module(ErrorCode code);

/// Exception carrying a module-qualified error code ("risk.SingularPhi").
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  std::string_view name() const { return code_name(code_); }
  std::string qualified() const;

 private:
  ErrorCode code_;
};

}  // namespace allocrisk
