#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rtnm {

// Every failure the library reports carries one of these codes. The CLI maps
// each code to a fixed process exit status (see exit_status()).
enum class ErrorCode {
  Io,
  Schema,
  MissingCell,
  TreatmentReversal,
  PreperiodTreatment,
  DuplicateRow,
  MissingOutcome,
  ZeroVariance,
  SingularCovariance,
  UnknownUnit,
  EmptyStratum,
  Infeasible,
  CostOverflow,
  EmptyCohort,
  EmptyCell,
  NoBlockContributions,
  TooFewCells,
  SingularContrastCovariance,
  IndexMismatch,
  DegenerateCohort,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

// Process exit status used by the command-line tool for a given error class.
int exit_status(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace rtnm
