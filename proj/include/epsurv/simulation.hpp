#ifndef EPSURV_SIMULATION_HPP
#define EPSURV_SIMULATION_HPP

#include "epsurv/data_model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace epsurv {

/// Distribution of the additive error e in X* (mean shifts are absorbed by
/// the calibration intercept).
struct ErrorDistribution {
  enum class Kind { Normal, StudentT, NormalMixture };
  Kind kind = Kind::Normal;
  double variance = 0.59;  // Normal
  double df = 4.0;         // StudentT
  // NormalMixture: weight on the first component, means and variances
  double weight = 0.4;
  double mean1 = 0.0, var1 = 1.0;
  double mean2 = 2.0, var2 = 2.25;

  double total_variance() const;
};

/// Extra precisely measured 0/1 covariate appended after Z1, Z2.
struct BinaryCovariate {
  double prob = 0.5;
  double beta = 0.0;   // log hazard ratio
  double alpha = 0.0;  // loading in the X* error model
};

enum class Estimator { True, Naive, CovariateOnly, OutcomeOnly, Proposed };

std::string_view to_string(Estimator e);
Estimator parse_estimator(std::string_view text);
const std::vector<Estimator>& all_estimators();

struct ScenarioConfig {
  std::string name = "custom";
  std::size_t n = 1000;
  std::size_t n_c = 500;
  Eigen::Matrix3d covariate_covariance = (Eigen::Matrix3d() << 1, 0.3, 0.3, 0.3, 1, 0.3, 0.3, 0.3, 1).finished();
  Eigen::Vector4d alpha = Eigen::Vector4d(1.0, 0.8, 0.3, 0.5);
  ErrorDistribution error;
  double epsilon_var = 0.06;
  Eigen::Vector3d beta_true = Eigen::Vector3d(std::log(1.5), std::log(0.7), std::log(1.3));
  std::vector<BinaryCovariate> binary_z;
  std::vector<double> baseline_hazards{0.012};  // one per stratum
  std::vector<double> visit_times{2, 5, 7, 8};
  double se = 0.8;
  double sp = 0.9;
  double eta = 1.0;
  double p_miss = 0.0;
  bool stop_after_first_positive = false;
  std::size_t replications = 200;
  std::uint64_t rng_seed = 12345;
  std::set<Estimator> estimators{Estimator::Naive, Estimator::Proposed};
  std::size_t threads = 1;

  std::size_t n_strata() const { return baseline_hazards.size(); }
  /// (beta_X1, beta_Z1, beta_Z2, binary betas...).
  Eigen::VectorXd coefficients() const;
  std::vector<std::string> coefficient_names() const;
  /// Throws Config naming the offending field.
  void validate() const;
};

/// Unobserved quantities kept next to a generated cohort (indexed like the
/// cohort's subjects).
struct LatentTruth {
  Eigen::VectorXd x1;
  Eigen::VectorXd event_time;             // 0 for baseline false negatives
  std::vector<bool> baseline_positive;
  std::vector<std::vector<int>> true_status;  // per observed visit
  std::vector<std::vector<double>> scheduled_visits;  // after missingness, before truncation
  std::size_t dropped_subjects = 0;       // lost every visit
};

struct GeneratedCohort {
  Cohort cohort;
  LatentTruth truth;
};

/// Replication r draws from an independent stream keyed by (rng_seed, r).
GeneratedCohort generate_cohort(const ScenarioConfig& cfg, std::size_t rep_index);

/// Cohort of true statuses and true X1 for the error-free fit. Baseline
/// false negatives are left out; visits stop after the first true positive.
Cohort true_data_cohort(const GeneratedCohort& generated);

struct Estimate {
  Eigen::VectorXd beta;
  Eigen::VectorXd se;
};

struct ReplicationResult {
  std::map<Estimator, Estimate> estimates;
  std::map<Estimator, std::string> failures;
  std::optional<double> delta1;  // first calibration slope
  double true_censoring = 0.0;   // share of subjects event-free at the last visit time
  double observed_censoring = 0.0;  // share without a positive result
  std::size_t dropped_subjects = 0;
};

/// Fits the requested estimators on one generated cohort. Estimator failures
/// are recorded, not thrown.
ReplicationResult run_replication(const ScenarioConfig& cfg, std::size_t rep_index);

struct ParameterMetrics {
  std::string name;
  double truth = 0.0;
  double mean_estimate = 0.0;
  std::optional<double> pct_bias;  // absent when the truth is 0
  double ase = 0.0;
  std::optional<double> ese;       // absent with fewer than two fits
  double cp = 0.0;
  double rejection_rate = 0.0;     // two-sided Wald test at 5%
};

struct MetricsTable {
  Estimator estimator = Estimator::Proposed;
  std::vector<ParameterMetrics> parameters;
  std::size_t successes = 0;
  std::size_t failures = 0;
  std::map<std::string, std::size_t> failure_reasons;
};

struct ScenarioResult {
  ScenarioConfig config;
  std::map<Estimator, MetricsTable> metrics;
  std::optional<double> mean_delta1;
  double mean_true_censoring = 0.0;
  double mean_observed_censoring = 0.0;
  double mean_dropped_subjects = 0.0;
};

/// Runs cfg.replications replications on up to cfg.threads workers and
/// reduces them in replication order. Throws Config when R = 0.
ScenarioResult run_scenario(const ScenarioConfig& cfg);
ScenarioResult summarize_replications(const ScenarioConfig& cfg, const std::vector<ReplicationResult>& reps);

/// Rejection rate of the proposed estimator's Wald test for beta_X1.
/// Throws Config unless beta_X1 = 0.
double type_one_error(ScenarioConfig cfg);

inline constexpr double kWaldZ = 1.959963984540054;

// Structured-text configs

std::string scenario_to_json(const ScenarioConfig& cfg);
/// Unknown keys and type errors raise Config naming the field.
ScenarioConfig scenario_from_json(const std::string& text, const ScenarioConfig& base = {});
ScenarioConfig read_scenario(const std::string& path);

/// 64-bit FNV-1a of the canonical JSON form.
std::uint64_t config_hash(const ScenarioConfig& cfg);

/// Delimited table with one row per (estimator, parameter).
std::string metrics_to_csv(const ScenarioResult& result);
std::string manifest_to_json(const ScenarioResult& result);

}  // namespace epsurv

#endif  // EPSURV_SIMULATION_HPP
