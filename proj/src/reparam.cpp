#include "epsurv/reparam.hpp"

#include "epsurv/errors.hpp"

#include <cmath>
#include <limits>

namespace epsurv {

Eigen::VectorXd reparameterize(const SurvivalCurve& curve) {
  const Eigen::Index n = curve.s.size();
  if (n < 2) throw Error(Errc::BoundViolation, "survival curve needs at least two values");
  if (!(curve.s(0) <= 1.0 && curve.s(0) > 0.0)) {
    throw Error(Errc::BoundViolation, "S_1 must lie in (0, 1]");
  }
  Eigen::VectorXd phi(n - 1);
  double prev = 0.0;
  for (Eigen::Index j = 1; j < n; ++j) {
    const double s = curve.s(j);
    if (!(s > 0.0 && s < 1.0) || s > curve.s(j - 1)) {
      throw Error(Errc::BoundViolation, "survival values must be non-increasing inside (0, 1)");
    }
    const double c = std::log(-std::log(s));
    phi(j - 1) = j == 1 ? c : c - prev;
    prev = c;
  }
  // Rounding in log(-log) can leave an exact tie slightly negative.
  for (Eigen::Index j = 1; j < phi.size(); ++j) {
    if (phi(j) < 0.0) phi(j) = 0.0;
  }
  return phi;
}

SurvivalCurve dereparameterize(const Eigen::VectorXd& phi, double s1) {
  SurvivalCurve curve;
  curve.s.resize(phi.size() + 1);
  curve.s(0) = s1;
  curve.s1_free = s1 != 1.0;
  double c = 0.0;
  for (Eigen::Index j = 0; j < phi.size(); ++j) {
    if (j > 0 && phi(j) < 0.0) {
      throw Error(Errc::BoundViolation, "survival increment coordinates must be non-negative");
    }
    c += phi(j);
    curve.s(j + 1) = std::exp(-std::exp(c));
  }
  return curve;
}

Eigen::VectorXd survival_lower_bounds(Eigen::Index j) {
  Eigen::VectorXd lb = Eigen::VectorXd::Zero(j);
  if (j > 0) lb(0) = -std::numeric_limits<double>::infinity();
  return lb;
}

Eigen::VectorXd default_survival_start(Eigen::Index j, double value) {
  return Eigen::VectorXd::Constant(j, value);
}

}  // namespace epsurv
