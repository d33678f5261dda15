#ifndef EPSURV_GLM_CLOGLOG_HPP
#define EPSURV_GLM_CLOGLOG_HPP

#include "epsurv/data_model.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace epsurv {

struct PersonPeriodRow {
  std::size_t subject = 0;  // position in the cohort
  int interval = 1;         // 1-based grid position of the visit
  int stratum = 0;
  int event = 0;
};

/// One row per at-risk visit, up to and including the first positive.
struct PersonPeriodTable {
  std::vector<PersonPeriodRow> rows;
  Eigen::MatrixXd covariates;  // rows x w
  int n_intervals = 0;         // J
  int n_strata = 1;
  Eigen::Index p = 0;

  std::size_t size() const { return rows.size(); }
};

/// Throws ModeMismatch unless the cohort is in stop-after-first-positive
/// mode. `design` replaces the cohort's x*/z columns when given.
PersonPeriodTable expand_person_period(const Cohort& cohort,
                                       const std::optional<Eigen::MatrixXd>& design = std::nullopt);

struct GlmOptions {
  bool stratified = false;  // stratum x interval intercepts
  int max_iter = 50;
  double tol = 1e-10;       // relative deviance change
  double separation_threshold = 15.0;
};

struct GlmFit {
  Eigen::VectorXd coefficients;  // intercepts (stratum-major), then covariates
  Eigen::MatrixXd covariance;    // inverse expected information
  Eigen::MatrixXd intercepts;    // J x strata
  CoefficientVector beta;
  Eigen::MatrixXd beta_covariance;
  double deviance = 0.0;
  std::vector<double> deviance_trace;
  int iterations = 0;
  bool converged = false;
  bool separation = false;

  Eigen::VectorXd beta_se() const;
  /// Baseline survival per stratum implied by the interval intercepts.
  std::vector<SurvivalCurve> survival() const;
};

/// Binomial GLM with complementary log-log link fitted by IRLS with step
/// halving. Throws RankDeficient for a singular design and EmptyCohort for an
/// empty table.
GlmFit fit_cloglog(const PersonPeriodTable& table, const GlmOptions& options = {});

/// S_1 = 1 and S_{j+1} = S_j exp(-exp(gamma_j)).
SurvivalCurve survival_from_intercepts(const Eigen::VectorXd& gamma);

}  // namespace epsurv

#endif  // EPSURV_GLM_CLOGLOG_HPP
