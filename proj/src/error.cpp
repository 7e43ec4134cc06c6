#include "rtnm/error.hpp"

namespace rtnm {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io: return "Io";
    case ErrorCode::Schema: return "Schema";
    case ErrorCode::MissingCell: return "MissingCell";
    case ErrorCode::TreatmentReversal: return "TreatmentReversal";
    case ErrorCode::PreperiodTreatment: return "PreperiodTreatment";
    case ErrorCode::DuplicateRow: return "DuplicateRow";
    case ErrorCode::MissingOutcome: return "MissingOutcome";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::UnknownUnit: return "UnknownUnit";
    case ErrorCode::EmptyStratum: return "EmptyStratum";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::CostOverflow: return "CostOverflow";
    case ErrorCode::EmptyCohort: return "EmptyCohort";
    case ErrorCode::EmptyCell: return "EmptyCell";
    case ErrorCode::NoBlockContributions: return "NoBlockContributions";
    case ErrorCode::TooFewCells: return "TooFewCells";
    case ErrorCode::SingularContrastCovariance: return "SingularContrastCovariance";
    case ErrorCode::IndexMismatch: return "IndexMismatch";
    case ErrorCode::DegenerateCohort: return "DegenerateCohort";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

int exit_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return 2;
    case ErrorCode::Io: return 3;
    case ErrorCode::Schema: return 4;
    case ErrorCode::MissingCell: return 10;
    case ErrorCode::TreatmentReversal: return 11;
    case ErrorCode::PreperiodTreatment: return 12;
    case ErrorCode::DuplicateRow: return 13;
    case ErrorCode::MissingOutcome: return 14;
    case ErrorCode::ZeroVariance: return 20;
    case ErrorCode::SingularCovariance: return 21;
    case ErrorCode::UnknownUnit: return 22;
    case ErrorCode::EmptyStratum: return 23;
    case ErrorCode::Infeasible: return 30;
    case ErrorCode::CostOverflow: return 31;
    case ErrorCode::EmptyCohort: return 32;
    case ErrorCode::EmptyCell: return 40;
    case ErrorCode::NoBlockContributions: return 41;
    case ErrorCode::TooFewCells: return 50;
    case ErrorCode::SingularContrastCovariance: return 51;
    case ErrorCode::IndexMismatch: return 52;
    case ErrorCode::DegenerateCohort: return 60;
  }
  return 1;
}

}  // namespace rtnm
