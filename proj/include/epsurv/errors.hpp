#ifndef EPSURV_ERRORS_HPP
#define EPSURV_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace epsurv {

enum class Errc {
  // input and validation
  MalformedInput,
  NonmonotoneVisits,
  CovariateDriftWithinSubject,
  MissingCalibrationMeasure,
  EmptyCohort,
  GridMismatch,
  ModeMismatch,
  InvalidErrorModel,
  DimensionMismatch,
  SubsetTooSmall,
  Config,
  // optimisation
  BoundViolation,
  InfeasibleStart,
  MaxIterationsExceeded,
  // linear algebra
  SingularHessian,
  RankDeficient,
  SingularDelta,
  // environment
  Io,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace epsurv

#endif  // EPSURV_ERRORS_HPP
