#include "epsurv/errors.hpp"

namespace epsurv {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::MalformedInput: return "MalformedInput";
    case Errc::NonmonotoneVisits: return "NonmonotoneVisits";
    case Errc::CovariateDriftWithinSubject: return "CovariateDriftWithinSubject";
    case Errc::MissingCalibrationMeasure: return "MissingCalibrationMeasure";
    case Errc::EmptyCohort: return "EmptyCohort";
    case Errc::GridMismatch: return "GridMismatch";
    case Errc::ModeMismatch: return "ModeMismatch";
    case Errc::InvalidErrorModel: return "InvalidErrorModel";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::SubsetTooSmall: return "SubsetTooSmall";
    case Errc::Config: return "Config";
    case Errc::BoundViolation: return "BoundViolation";
    case Errc::InfeasibleStart: return "InfeasibleStart";
    case Errc::MaxIterationsExceeded: return "MaxIterationsExceeded";
    case Errc::SingularHessian: return "SingularHessian";
    case Errc::RankDeficient: return "RankDeficient";
    case Errc::SingularDelta: return "SingularDelta";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace epsurv
