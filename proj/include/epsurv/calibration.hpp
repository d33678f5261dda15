#ifndef EPSURV_CALIBRATION_HPP
#define EPSURV_CALIBRATION_HPP

#include "epsurv/data_model.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <string>

namespace epsurv {

/// Linear calibration X** = delta0 + delta1 X* + delta2 Z + V fitted on the
/// calibration subset.
///
/// coef_covariance is (p*w) x (p*w), w = p + q, indexed row-major over
/// (response r, regressor s): entry r*w + s is Delta_{rs}, i.e. delta1(r, s)
/// for s < p and delta2(r, s - p) otherwise. Intercepts are not included.
struct CalibrationModel {
  Eigen::VectorXd delta0;
  Eigen::MatrixXd delta1;
  Eigen::MatrixXd delta2;
  Eigen::MatrixXd residual_covariance;
  Eigen::MatrixXd coef_covariance;
  std::size_t n_c = 0;

  Eigen::Index p() const { return delta1.rows(); }
  Eigen::Index q() const { return delta2.cols(); }
  Eigen::Index w() const { return p() + q(); }
  static Eigen::Index coef_index(Eigen::Index r, Eigen::Index s, Eigen::Index w) { return r * w + s; }

  /// Throws DimensionMismatch on inconsistent block shapes.
  void check() const;
};

/// Delta = [[delta1, delta2], [0, I]] and A = Delta^{-1}.
struct CorrectionMatrix {
  Eigen::MatrixXd delta;
  Eigen::MatrixXd a;
};

/// OLS of each X** component on (1, X*, Z) over the subset.
/// Throws SubsetTooSmall (n_c <= p + q + 1), MissingCalibrationMeasure or
/// RankDeficient.
CalibrationModel fit_calibration(const Cohort& cohort);

/// Throws SingularDelta when delta1 is not invertible.
CorrectionMatrix build_correction(const CalibrationModel& calib);

/// beta = beta* A, with beta* treated as a row vector.
CoefficientVector correct_beta(const CoefficientVector& beta_star, const CorrectionMatrix& corr);

/// A' Sigma_{beta*} A plus the calibration-uncertainty term
///   sum_{i1,i2} beta*_{i1} beta*_{i2} sum_{r,s,t,u} A_{i1 r} A_{s j1} A_{i2 t} A_{u j2} Cov(Delta_rs, Delta_tu),
/// where Cov vanishes for the fixed rows r, t >= p. beta* and Delta are
/// treated as independent. The result is symmetrised.
Eigen::MatrixXd corrected_covariance(const CoefficientVector& beta_star, const Eigen::MatrixXd& sigma_beta_star,
                                     const CorrectionMatrix& corr, const CalibrationModel& calib);

/// Replaces the x* columns by delta0 + delta1 x* + delta2 z.
Eigen::MatrixXd calibrated_design(const Cohort& cohort, const CalibrationModel& calib);

std::string calibration_to_json(const CalibrationModel& calib);
/// Throws Config with the offending field on malformed input.
CalibrationModel calibration_from_json(const std::string& text);
void write_calibration(const CalibrationModel& calib, const std::string& path);
CalibrationModel read_calibration(const std::string& path);

}  // namespace epsurv

#endif  // EPSURV_CALIBRATION_HPP
