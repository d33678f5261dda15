#ifndef EPSURV_OUTCOME_LIKELIHOOD_HPP
#define EPSURV_OUTCOME_LIKELIHOOD_HPP

#include "epsurv/data_model.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace epsurv {

/// C holds Pr(observed outcome vector | true event in interval j) per subject.
/// Evaluation uses a per-row rescaled copy of D so that long visit sequences
/// cannot underflow: d_scaled(i, .) = d(i, .) * exp(-log_scale(i)).
struct LikelihoodMatrices {
  Eigen::MatrixXd c;  // N x (J+1)
  Eigen::MatrixXd m;  // (J+1) x (J+1), theta = M S
  Eigen::MatrixXd d;  // C M
  Eigen::MatrixXd d_scaled;
  Eigen::VectorXd log_scale;
};

/// log C_ij accumulated as a sum over the subject's observed visits. A visit
/// at grid time tau_m is post-event for interval j when m >= j.
Eigen::MatrixXd compute_log_c_matrix(const Cohort& cohort, const OutcomeErrorModel& err);
Eigen::MatrixXd compute_c_matrix(const Cohort& cohort, const OutcomeErrorModel& err);

/// Upper bidiagonal differencing matrix: ones on the diagonal, -1 above it.
Eigen::MatrixXd build_m_matrix(Eigen::Index j_plus_1);

LikelihoodMatrices build_likelihood_matrices(const Cohort& cohort, const OutcomeErrorModel& err);

enum class LikelihoodMode { Standard, Stratified, NpvAdjusted, StratifiedNpv };

std::string_view to_string(LikelihoodMode mode);
bool is_stratified(LikelihoodMode mode);
bool is_npv(LikelihoodMode mode);

struct LikelihoodSpec {
  LikelihoodMatrices matrices;
  Eigen::MatrixXd design;  // N x (p+q)
  std::vector<int> strata; // zero-based stratum per subject
  int n_strata = 1;
  OutcomeErrorModel error_model;
  LikelihoodMode mode = LikelihoodMode::Standard;
  Eigen::Index p = 0;      // leading error-prone columns of design

  Eigen::Index n_subjects() const { return design.rows(); }
  Eigen::Index n_intervals() const { return matrices.c.cols(); }
  Eigen::Index j() const { return n_intervals() - 1; }
  Eigen::Index n_beta() const { return design.cols(); }
  Eigen::Index n_survival_params() const { return n_strata * j(); }
  Eigen::Index n_params() const { return n_survival_params() + n_beta(); }
  /// Weight on intervals j > 1; 1 outside the NPV modes.
  double eta() const { return is_npv(mode) ? error_model.eta : 1.0; }

  /// Throws DimensionMismatch on inconsistent row counts or stratum indices.
  void check() const;
};

/// Non-stratified modes put every subject in one stratum. `design` overrides
/// the cohort's x*/z columns (for example with calibrated values).
LikelihoodSpec make_likelihood_spec(const Cohort& cohort, const OutcomeErrorModel& err,
                                    LikelihoodMode mode,
                                    std::optional<Eigen::MatrixXd> design = std::nullopt);

/// A non-positive inner sum yields value = -inf with the offending subject,
/// rather than an exception, so line searches can back off.
struct LogLikValue {
  double value = 0.0;
  bool finite = true;
  std::optional<Eigen::Index> bad_subject;
};

LogLikValue log_likelihood(const LikelihoodSpec& spec, const std::vector<SurvivalCurve>& curves,
                           const CoefficientVector& beta);

// Parameter-vector interface: [phi(stratum 0), ..., phi(stratum K-1), beta].
// S_1 is held at 1 in every stratum.

std::vector<SurvivalCurve> unpack_survival(const LikelihoodSpec& spec, const Eigen::VectorXd& params);
Eigen::VectorXd pack_params(const LikelihoodSpec& spec, const std::vector<SurvivalCurve>& curves,
                            const Eigen::VectorXd& beta);
Eigen::VectorXd parameter_lower_bounds(const LikelihoodSpec& spec);

LogLikValue log_likelihood(const LikelihoodSpec& spec, const Eigen::VectorXd& params);

/// Analytic gradient with respect to the parameter vector; grad is resized.
LogLikValue log_likelihood_gradient(const LikelihoodSpec& spec, const Eigen::VectorXd& params,
                                    Eigen::VectorXd& grad);

}  // namespace epsurv

#endif  // EPSURV_OUTCOME_LIKELIHOOD_HPP
