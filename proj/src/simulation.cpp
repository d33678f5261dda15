#include "epsurv/simulation.hpp"

#include "epsurv/calibration.hpp"
#include "epsurv/errors.hpp"
#include "epsurv/glm_cloglog.hpp"
#include "epsurv/mle_engine.hpp"
#include "epsurv/outcome_likelihood.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace epsurv {

using nlohmann::json;

double ErrorDistribution::total_variance() const {
  switch (kind) {
    case Kind::Normal: return variance;
    case Kind::StudentT: return df > 2.0 ? df / (df - 2.0) : std::numeric_limits<double>::infinity();
    case Kind::NormalMixture: {
      const double m = weight * mean1 + (1.0 - weight) * mean2;
      return weight * (var1 + (mean1 - m) * (mean1 - m)) + (1.0 - weight) * (var2 + (mean2 - m) * (mean2 - m));
    }
  }
  return 0.0;
}

std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::True: return "true";
    case Estimator::Naive: return "naive";
    case Estimator::CovariateOnly: return "covariate_only";
    case Estimator::OutcomeOnly: return "outcome_only";
    case Estimator::Proposed: return "proposed";
  }
  return "unknown";
}

Estimator parse_estimator(std::string_view text) {
  for (Estimator e : all_estimators()) {
    if (to_string(e) == text) return e;
  }
  throw Error(Errc::Config, "unknown method '" + std::string(text) +
                                "' (expected naive, outcome_only, covariate_only, proposed or true)");
}

const std::vector<Estimator>& all_estimators() {
  static const std::vector<Estimator> all{Estimator::True, Estimator::Naive, Estimator::CovariateOnly,
                                          Estimator::OutcomeOnly, Estimator::Proposed};
  return all;
}

Eigen::VectorXd ScenarioConfig::coefficients() const {
  Eigen::VectorXd b(3 + static_cast<Eigen::Index>(binary_z.size()));
  b.head(3) = beta_true;
  for (std::size_t k = 0; k < binary_z.size(); ++k) b(3 + static_cast<Eigen::Index>(k)) = binary_z[k].beta;
  return b;
}

std::vector<std::string> ScenarioConfig::coefficient_names() const {
  std::vector<std::string> names{"beta_X1", "beta_Z1", "beta_Z2"};
  for (std::size_t k = 0; k < binary_z.size(); ++k) names.push_back("beta_Z" + std::to_string(k + 3));
  return names;
}

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw Error(Errc::Config, "scenario field '" + field + "': " + why);
  };
  auto prob = [&](double v, const char* field) {
    if (!(v >= 0.0 && v <= 1.0)) fail(field, "must lie in [0, 1]");
  };
  if (n == 0) fail("n", "must be positive");
  if (n_c > n) fail("n_c", "cannot exceed n");
  if (replications == 0) fail("replications", "must be at least 1");
  if (threads == 0) fail("threads", "must be at least 1");
  prob(se, "se");
  prob(sp, "sp");
  prob(eta, "eta");
  prob(p_miss, "p_miss");
  if (!(eta > 0.0)) fail("eta", "must be positive");
  if (!(se + sp > 1.0)) fail("se", "se + sp must exceed 1");
  if (!(epsilon_var >= 0.0)) fail("epsilon_var", "must be non-negative");
  for (const auto& b : binary_z) {
    if (!(b.prob >= 0.0 && b.prob <= 1.0)) fail("binary_z.prob", "must lie in [0, 1]");
  }
  if (baseline_hazards.empty()) fail("baseline_hazards", "needs at least one rate");
  for (double h : baseline_hazards) {
    if (!(h > 0.0) || !std::isfinite(h)) fail("baseline_hazards", "rates must be positive");
  }
  if (visit_times.empty()) fail("visit_times", "needs at least one time");
  for (std::size_t k = 0; k < visit_times.size(); ++k) {
    if (!(visit_times[k] > 0.0) || (k > 0 && visit_times[k] <= visit_times[k - 1])) {
      fail("visit_times", "must be positive and strictly increasing");
    }
  }
  if (!covariate_covariance.isApprox(covariate_covariance.transpose()) ||
      covariate_covariance.llt().info() != Eigen::Success) {
    fail("covariate_covariance", "must be symmetric positive definite");
  }
  switch (error.kind) {
    case ErrorDistribution::Kind::Normal:
      if (!(error.variance >= 0.0)) fail("error.variance", "must be non-negative");
      break;
    case ErrorDistribution::Kind::StudentT:
      if (!(error.df > 0.0)) fail("error.df", "must be positive");
      break;
    case ErrorDistribution::Kind::NormalMixture:
      if (!(error.weight >= 0.0 && error.weight <= 1.0)) fail("error.weight", "must lie in [0, 1]");
      if (!(error.var1 >= 0.0 && error.var2 >= 0.0)) fail("error.var1", "component variances must be non-negative");
      break;
  }
}

// ---------------------------------------------------------------------------
// Generation

namespace {

std::mt19937_64 make_stream(std::uint64_t seed, std::size_t rep) {
  const auto r = static_cast<std::uint64_t>(rep);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(r >> 32)};
  return std::mt19937_64(seq);
}

double draw_error(const ErrorDistribution& dist, std::mt19937_64& rng) {
  std::normal_distribution<double> std_normal(0.0, 1.0);
  switch (dist.kind) {
    case ErrorDistribution::Kind::Normal:
      return std::sqrt(dist.variance) * std_normal(rng);
    case ErrorDistribution::Kind::StudentT: {
      std::student_t_distribution<double> t(dist.df);
      return t(rng);
    }
    case ErrorDistribution::Kind::NormalMixture: {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      const bool first = u(rng) < dist.weight;
      const double z = std_normal(rng);
      return first ? dist.mean1 + std::sqrt(dist.var1) * z : dist.mean2 + std::sqrt(dist.var2) * z;
    }
  }
  return 0.0;
}

// First k entries of a uniformly shuffled 0..n-1.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, n);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

std::string stratum_label(std::size_t k, std::size_t n_strata) {
  return n_strata > 1 ? "s" + std::to_string(k + 1) : std::string();
}

}  // namespace

GeneratedCohort generate_cohort(const ScenarioConfig& cfg, std::size_t rep_index) {
  cfg.validate();
  std::mt19937_64 rng = make_stream(cfg.rng_seed, rep_index);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::exponential_distribution<double> unit_exp(1.0);
  std::uniform_int_distribution<std::size_t> pick_stratum(0, cfg.n_strata() - 1);

  const Eigen::Matrix3d chol = cfg.covariate_covariance.llt().matrixL();
  const double eps_sd = std::sqrt(cfg.epsilon_var);
  const auto n_contaminated = static_cast<std::size_t>(std::llround((1.0 - cfg.eta) * static_cast<double>(cfg.n)));
  std::vector<bool> contaminated(cfg.n, false);
  for (std::size_t i : sample_without_replacement(cfg.n, n_contaminated, rng)) contaminated[i] = true;

  std::vector<SubjectRecord> subjects;
  LatentTruth truth;
  std::vector<double> x1, t_event, x_dd;
  subjects.reserve(cfg.n);

  for (std::size_t i = 0; i < cfg.n; ++i) {
    const Eigen::Vector3d v = chol * Eigen::Vector3d(std_normal(rng), std_normal(rng), std_normal(rng));
    Eigen::VectorXd z(2 + static_cast<Eigen::Index>(cfg.binary_z.size()));
    z.head(2) = v.tail(2);
    double shift = 0.0, lin = cfg.beta_true.dot(v);
    for (std::size_t b = 0; b < cfg.binary_z.size(); ++b) {
      const double value = unif(rng) < cfg.binary_z[b].prob ? 1.0 : 0.0;
      z(2 + static_cast<Eigen::Index>(b)) = value;
      shift += cfg.binary_z[b].alpha * value;
      lin += cfg.binary_z[b].beta * value;
    }
    const double e = draw_error(cfg.error, rng);
    const double x_star =
        cfg.alpha(0) + cfg.alpha(1) * v(0) + cfg.alpha(2) * v(1) + cfg.alpha(3) * v(2) + shift + e;
    const double x_double_star = v(0) + eps_sd * std_normal(rng);
    const std::size_t k = cfg.n_strata() > 1 ? pick_stratum(rng) : 0;
    const double rate = cfg.baseline_hazards[k] * std::exp(lin);
    double t = unit_exp(rng) / rate;
    if (contaminated[i]) t = 0.0;

    SubjectRecord s;
    s.id = std::to_string(i + 1);
    s.x_star = Eigen::VectorXd::Constant(1, x_star);
    s.z = std::move(z);
    s.stratum = stratum_label(k, cfg.n_strata());
    std::vector<int> status;
    std::vector<double> scheduled;
    for (double tau : cfg.visit_times) {
      const bool missed = unif(rng) < cfg.p_miss;
      const double u = unif(rng);
      if (missed) continue;
      const bool event = t <= tau;
      scheduled.push_back(tau);
      status.push_back(event ? 1 : 0);
      s.t.push_back(tau);
      s.y.push_back(event ? (u < cfg.se ? 1 : 0) : (u < cfg.sp ? 0 : 1));
    }
    if (cfg.stop_after_first_positive) {
      auto it = std::find(s.y.begin(), s.y.end(), 1);
      if (it != s.y.end()) {
        const auto keep = static_cast<std::size_t>(it - s.y.begin()) + 1;
        s.y.resize(keep);
        s.t.resize(keep);
      }
    }
    if (s.t.empty()) {
      ++truth.dropped_subjects;
      continue;
    }
    status.resize(s.t.size());
    subjects.push_back(std::move(s));
    x1.push_back(v(0));
    x_dd.push_back(x_double_star);
    t_event.push_back(t);
    truth.baseline_positive.push_back(contaminated[i]);
    truth.true_status.push_back(std::move(status));
    truth.scheduled_visits.push_back(std::move(scheduled));
  }

  for (std::size_t i : sample_without_replacement(subjects.size(), cfg.n_c, rng)) {
    subjects[i].in_calibration_subset = true;
    subjects[i].x_double_star = Eigen::VectorXd::Constant(1, x_dd[i]);
  }
  truth.x1 = Eigen::Map<Eigen::VectorXd>(x1.data(), static_cast<Eigen::Index>(x1.size()));
  truth.event_time = Eigen::Map<Eigen::VectorXd>(t_event.data(), static_cast<Eigen::Index>(t_event.size()));

  const FollowUpMode mode =
      cfg.stop_after_first_positive ? FollowUpMode::StopAfterFirstPositive : FollowUpMode::FullSchedule;
  return {Cohort(TimeGrid(cfg.visit_times), std::move(subjects), mode), std::move(truth)};
}

Cohort true_data_cohort(const GeneratedCohort& generated) {
  const Cohort& c = generated.cohort;
  const LatentTruth& truth = generated.truth;
  std::vector<SubjectRecord> subjects;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (truth.baseline_positive[i]) continue;
    SubjectRecord s;
    s.id = c[i].id;
    s.x_star = Eigen::VectorXd::Constant(1, truth.x1(static_cast<Eigen::Index>(i)));
    s.z = c[i].z;
    s.stratum = c[i].stratum;
    for (double tau : truth.scheduled_visits[i]) {
      const int status = truth.event_time(static_cast<Eigen::Index>(i)) <= tau ? 1 : 0;
      s.t.push_back(tau);
      s.y.push_back(status);
      if (status == 1) break;
    }
    subjects.push_back(std::move(s));
  }
  return Cohort(c.grid(), std::move(subjects), FollowUpMode::StopAfterFirstPositive);
}

// ---------------------------------------------------------------------------
// Replications

namespace {

Estimate checked(const Eigen::VectorXd& beta, const Eigen::MatrixXd& cov) {
  Estimate e{beta, cov.diagonal()};
  if (!beta.allFinite() || !e.se.allFinite() || (e.se.array() <= 0.0).any()) {
    throw Error(Errc::SingularHessian, "non-positive or non-finite variance");
  }
  e.se = e.se.cwiseSqrt();
  return e;
}

}  // namespace

ReplicationResult run_replication(const ScenarioConfig& cfg, std::size_t rep_index) {
  const GeneratedCohort gen = generate_cohort(cfg, rep_index);
  const Cohort& cohort = gen.cohort;
  const bool stratified = cfg.n_strata() > 1;
  ReplicationResult res;
  res.dropped_subjects = gen.truth.dropped_subjects;

  const double last_visit = cfg.visit_times.back();
  std::size_t event_free = 0, negative = 0;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    if (gen.truth.event_time(static_cast<Eigen::Index>(i)) > last_visit) ++event_free;
    if (!cohort[i].any_positive()) ++negative;
  }
  const double denom = std::max<double>(1.0, static_cast<double>(cohort.size()));
  res.true_censoring = static_cast<double>(event_free) / denom;
  res.observed_censoring = static_cast<double>(negative) / denom;

  const auto& wanted = cfg.estimators;
  auto wants = [&](Estimator e) { return wanted.count(e) > 0; };
  const bool need_calib = wants(Estimator::CovariateOnly) || wants(Estimator::Proposed) || cfg.n_c > 0;
  const bool need_naive = wants(Estimator::Naive) || wants(Estimator::CovariateOnly) ||
                          wants(Estimator::OutcomeOnly) || wants(Estimator::Proposed);
  const bool need_mle = wants(Estimator::OutcomeOnly) || wants(Estimator::Proposed);

  auto record_failure = [&](Estimator e, const std::string& why) {
    if (wants(e)) res.failures[e] = why;
  };

  std::optional<CalibrationModel> calib;
  std::optional<CorrectionMatrix> corr;
  std::string calib_error;
  if (need_calib) {
    try {
      calib = fit_calibration(cohort);
      res.delta1 = calib->delta1(0, 0);
      corr = build_correction(*calib);
    } catch (const std::exception& e) {
      calib_error = e.what();
    }
  }

  GlmOptions glm_opt;
  glm_opt.stratified = stratified;

  std::optional<GlmFit> naive;
  if (need_naive) {
    try {
      naive = fit_cloglog(expand_person_period(truncate_after_first_positive(cohort)), glm_opt);
      if (!naive->converged) throw Error(Errc::MaxIterationsExceeded, "IRLS did not converge");
      if (wants(Estimator::Naive)) res.estimates[Estimator::Naive] = checked(naive->beta.joined(), naive->beta_covariance);
    } catch (const std::exception& e) {
      naive.reset();
      record_failure(Estimator::Naive, std::string("naive: ") + e.what());
    }
  }

  if (wants(Estimator::CovariateOnly)) {
    if (!naive) {
      record_failure(Estimator::CovariateOnly, "naive fit unavailable");
    } else if (!corr) {
      record_failure(Estimator::CovariateOnly, "calibration: " + calib_error);
    } else {
      try {
        const CoefficientVector b = correct_beta(naive->beta, *corr);
        res.estimates[Estimator::CovariateOnly] =
            checked(b.joined(), corrected_covariance(naive->beta, naive->beta_covariance, *corr, *calib));
      } catch (const std::exception& e) {
        record_failure(Estimator::CovariateOnly, e.what());
      }
    }
  }

  if (need_mle) {
    try {
      OutcomeErrorModel err{cfg.se, cfg.sp, cfg.eta, {}};
      LikelihoodMode mode;
      if (stratified) {
        mode = cfg.eta < 1.0 ? LikelihoodMode::StratifiedNpv : LikelihoodMode::Stratified;
      } else {
        mode = cfg.eta < 1.0 ? LikelihoodMode::NpvAdjusted : LikelihoodMode::Standard;
      }
      const LikelihoodSpec spec = make_likelihood_spec(cohort, err, mode);
      CoefficientVector start = naive ? naive->beta
                                      : CoefficientVector{Eigen::VectorXd::Zero(cohort.p()), Eigen::VectorXd::Zero(cohort.q())};
      const FitResult fit = epsurv::fit(spec, start);
      if (!fit.converged) throw Error(Errc::MaxIterationsExceeded, "MLE did not converge: " + fit.message);
      if (!fit.beta_covariance) throw Error(Errc::SingularHessian, "Hessian is singular");
      if (wants(Estimator::OutcomeOnly)) {
        try {
          res.estimates[Estimator::OutcomeOnly] = checked(fit.beta_hat.joined(), *fit.beta_covariance);
        } catch (const std::exception& e) {
          record_failure(Estimator::OutcomeOnly, e.what());
        }
      }
      if (wants(Estimator::Proposed)) {
        if (!corr) {
          record_failure(Estimator::Proposed, "calibration: " + calib_error);
        } else {
          try {
            const CoefficientVector b = correct_beta(fit.beta_hat, *corr);
            res.estimates[Estimator::Proposed] =
                checked(b.joined(), corrected_covariance(fit.beta_hat, *fit.beta_covariance, *corr, *calib));
          } catch (const std::exception& e) {
            record_failure(Estimator::Proposed, e.what());
          }
        }
      }
    } catch (const std::exception& e) {
      record_failure(Estimator::OutcomeOnly, std::string("mle: ") + e.what());
      record_failure(Estimator::Proposed, std::string("mle: ") + e.what());
    }
  }

  if (wants(Estimator::True)) {
    try {
      const GlmFit truth_fit = fit_cloglog(expand_person_period(true_data_cohort(gen)), glm_opt);
      if (!truth_fit.converged) throw Error(Errc::MaxIterationsExceeded, "IRLS did not converge");
      res.estimates[Estimator::True] = checked(truth_fit.beta.joined(), truth_fit.beta_covariance);
    } catch (const std::exception& e) {
      record_failure(Estimator::True, e.what());
    }
  }
  return res;
}

ScenarioResult summarize_replications(const ScenarioConfig& cfg, const std::vector<ReplicationResult>& reps) {
  const std::vector<std::string> names = cfg.coefficient_names();
  const Eigen::VectorXd truth = cfg.coefficients();
  ScenarioResult out;
  out.config = cfg;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  double delta_sum = 0.0;
  std::size_t delta_n = 0;
  for (const auto& r : reps) {
    if (r.delta1) {
      delta_sum += *r.delta1;
      ++delta_n;
    }
    out.mean_true_censoring += r.true_censoring;
    out.mean_observed_censoring += r.observed_censoring;
    out.mean_dropped_subjects += static_cast<double>(r.dropped_subjects);
  }
  const double nrep = std::max<double>(1.0, static_cast<double>(reps.size()));
  out.mean_true_censoring /= nrep;
  out.mean_observed_censoring /= nrep;
  out.mean_dropped_subjects /= nrep;
  if (delta_n > 0) out.mean_delta1 = delta_sum / static_cast<double>(delta_n);

  for (Estimator est : cfg.estimators) {
    MetricsTable table;
    table.estimator = est;
    std::vector<const Estimate*> ok;
    for (const auto& r : reps) {
      auto it = r.estimates.find(est);
      if (it != r.estimates.end()) {
        ok.push_back(&it->second);
      } else {
        ++table.failures;
        auto f = r.failures.find(est);
        ++table.failure_reasons[f != r.failures.end() ? f->second : "no estimate"];
      }
    }
    table.successes = ok.size();
    for (Eigen::Index j = 0; j < truth.size(); ++j) {
      ParameterMetrics m;
      m.name = names[static_cast<std::size_t>(j)];
      m.truth = truth(j);
      if (ok.empty()) {
        m.mean_estimate = m.ase = m.cp = m.rejection_rate = nan;
        table.parameters.push_back(m);
        continue;
      }
      const double k = static_cast<double>(ok.size());
      double sum = 0.0, sum_rel = 0.0, sum_se = 0.0, covered = 0.0, rejected = 0.0;
      for (const Estimate* e : ok) {
        const double b = e->beta(j), se = e->se(j);
        sum += b;
        if (m.truth != 0.0) sum_rel += (b - m.truth) / m.truth;
        sum_se += se;
        if (std::abs(b - m.truth) <= kWaldZ * se) covered += 1.0;
        if (std::abs(b / se) > kWaldZ) rejected += 1.0;
      }
      m.mean_estimate = sum / k;
      if (m.truth != 0.0) m.pct_bias = 100.0 * sum_rel / k;
      m.ase = sum_se / k;
      m.cp = covered / k;
      m.rejection_rate = rejected / k;
      if (ok.size() >= 2) {
        double ss = 0.0;
        for (const Estimate* e : ok) ss += (e->beta(j) - m.mean_estimate) * (e->beta(j) - m.mean_estimate);
        m.ese = std::sqrt(ss / (k - 1.0));
      }
      table.parameters.push_back(m);
    }
    out.metrics[est] = std::move(table);
  }
  return out;
}

ScenarioResult run_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  std::vector<ReplicationResult> reps(cfg.replications);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&]() {
    for (std::size_t r = next++; r < cfg.replications; r = next++) {
      try {
        reps[r] = run_replication(cfg, r);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::min(cfg.threads, cfg.replications);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return summarize_replications(cfg, reps);
}

double type_one_error(ScenarioConfig cfg) {
  if (cfg.beta_true(0) != 0.0) throw Error(Errc::Config, "type I error needs beta_X1 = 0");
  cfg.estimators = {Estimator::Proposed};
  const ScenarioResult res = run_scenario(cfg);
  return res.metrics.at(Estimator::Proposed).parameters.at(0).rejection_rate;
}

// ---------------------------------------------------------------------------
// Structured text

namespace {

std::string_view kind_name(ErrorDistribution::Kind k) {
  switch (k) {
    case ErrorDistribution::Kind::Normal: return "normal";
    case ErrorDistribution::Kind::StudentT: return "t";
    case ErrorDistribution::Kind::NormalMixture: return "mixture";
  }
  return "normal";
}

json config_json(const ScenarioConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  j["n"] = cfg.n;
  j["n_c"] = cfg.n_c;
  json cov = json::array();
  for (int r = 0; r < 3; ++r) cov.push_back({cfg.covariate_covariance(r, 0), cfg.covariate_covariance(r, 1),
                                             cfg.covariate_covariance(r, 2)});
  j["covariate_covariance"] = cov;
  j["alpha"] = {cfg.alpha(0), cfg.alpha(1), cfg.alpha(2), cfg.alpha(3)};
  json err;
  err["kind"] = kind_name(cfg.error.kind);
  switch (cfg.error.kind) {
    case ErrorDistribution::Kind::Normal: err["variance"] = cfg.error.variance; break;
    case ErrorDistribution::Kind::StudentT: err["df"] = cfg.error.df; break;
    case ErrorDistribution::Kind::NormalMixture:
      err["weight"] = cfg.error.weight;
      err["mean1"] = cfg.error.mean1;
      err["var1"] = cfg.error.var1;
      err["mean2"] = cfg.error.mean2;
      err["var2"] = cfg.error.var2;
      break;
  }
  j["error"] = err;
  j["epsilon_var"] = cfg.epsilon_var;
  j["beta_true"] = {cfg.beta_true(0), cfg.beta_true(1), cfg.beta_true(2)};
  if (!cfg.binary_z.empty()) {
    json bz = json::array();
    for (const auto& b : cfg.binary_z) bz.push_back({{"prob", b.prob}, {"beta", b.beta}, {"alpha", b.alpha}});
    j["binary_z"] = bz;
  }
  j["baseline_hazards"] = cfg.baseline_hazards;
  j["visit_times"] = cfg.visit_times;
  j["se"] = cfg.se;
  j["sp"] = cfg.sp;
  j["eta"] = cfg.eta;
  j["p_miss"] = cfg.p_miss;
  j["stop_after_first_positive"] = cfg.stop_after_first_positive;
  j["replications"] = cfg.replications;
  j["seed"] = cfg.rng_seed;
  json est = json::array();
  for (Estimator e : cfg.estimators) est.push_back(to_string(e));
  j["estimators"] = est;
  j["threads"] = cfg.threads;
  return j;
}

template <class T>
T field(const json& j, const std::string& name) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw Error(Errc::Config, "scenario field '" + name + "': " + e.what());
  }
}

template <int N>
Eigen::Matrix<double, N, 1> fixed_vector(const json& j, const std::string& name) {
  const auto v = field<std::vector<double>>(j, name);
  if (static_cast<int>(v.size()) != N) {
    throw Error(Errc::Config, "scenario field '" + name + "': expected " + std::to_string(N) + " numbers");
  }
  return Eigen::Map<const Eigen::Matrix<double, N, 1>>(v.data());
}

}  // namespace

std::string scenario_to_json(const ScenarioConfig& cfg) { return config_json(cfg).dump(2); }

ScenarioConfig scenario_from_json(const std::string& text, const ScenarioConfig& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::Config, std::string("scenario is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(Errc::Config, "scenario must be a JSON object");

  ScenarioConfig cfg = base;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const json& v = it.value();
    if (key == "preset") {
      continue;  // resolved by the caller
    } else if (key == "name") {
      cfg.name = field<std::string>(v, key);
    } else if (key == "n") {
      cfg.n = field<std::size_t>(v, key);
    } else if (key == "n_c") {
      cfg.n_c = field<std::size_t>(v, key);
    } else if (key == "covariate_covariance") {
      const auto rows = field<std::vector<std::vector<double>>>(v, key);
      if (rows.size() != 3) throw Error(Errc::Config, "scenario field 'covariate_covariance': expected 3 rows");
      for (int r = 0; r < 3; ++r) {
        if (rows[static_cast<std::size_t>(r)].size() != 3) {
          throw Error(Errc::Config, "scenario field 'covariate_covariance': expected 3 columns");
        }
        for (int c = 0; c < 3; ++c) cfg.covariate_covariance(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      }
    } else if (key == "alpha") {
      cfg.alpha = fixed_vector<4>(v, key);
    } else if (key == "error") {
      if (!v.is_object()) throw Error(Errc::Config, "scenario field 'error': expected an object");
      ErrorDistribution d;
      for (auto e = v.begin(); e != v.end(); ++e) {
        const std::string sub = "error." + e.key();
        if (e.key() == "kind") {
          const auto kind = field<std::string>(e.value(), sub);
          if (kind == "normal") d.kind = ErrorDistribution::Kind::Normal;
          else if (kind == "t") d.kind = ErrorDistribution::Kind::StudentT;
          else if (kind == "mixture") d.kind = ErrorDistribution::Kind::NormalMixture;
          else throw Error(Errc::Config, "scenario field 'error.kind': expected normal, t or mixture");
        } else if (e.key() == "variance") d.variance = field<double>(e.value(), sub);
        else if (e.key() == "df") d.df = field<double>(e.value(), sub);
        else if (e.key() == "weight") d.weight = field<double>(e.value(), sub);
        else if (e.key() == "mean1") d.mean1 = field<double>(e.value(), sub);
        else if (e.key() == "var1") d.var1 = field<double>(e.value(), sub);
        else if (e.key() == "mean2") d.mean2 = field<double>(e.value(), sub);
        else if (e.key() == "var2") d.var2 = field<double>(e.value(), sub);
        else throw Error(Errc::Config, "unknown scenario field '" + sub + "'");
      }
      cfg.error = d;
    } else if (key == "epsilon_var") {
      cfg.epsilon_var = field<double>(v, key);
    } else if (key == "beta_true") {
      cfg.beta_true = fixed_vector<3>(v, key);
    } else if (key == "binary_z") {
      if (!v.is_array()) throw Error(Errc::Config, "scenario field 'binary_z': expected an array");
      cfg.binary_z.clear();
      for (const json& item : v) {
        if (!item.is_object()) throw Error(Errc::Config, "scenario field 'binary_z': entries must be objects");
        BinaryCovariate b;
        for (auto e = item.begin(); e != item.end(); ++e) {
          const std::string sub = "binary_z." + e.key();
          if (e.key() == "prob") b.prob = field<double>(e.value(), sub);
          else if (e.key() == "beta") b.beta = field<double>(e.value(), sub);
          else if (e.key() == "alpha") b.alpha = field<double>(e.value(), sub);
          else throw Error(Errc::Config, "unknown scenario field '" + sub + "'");
        }
        cfg.binary_z.push_back(b);
      }
    } else if (key == "baseline_hazards") {
      cfg.baseline_hazards = field<std::vector<double>>(v, key);
    } else if (key == "visit_times") {
      cfg.visit_times = field<std::vector<double>>(v, key);
    } else if (key == "se") {
      cfg.se = field<double>(v, key);
    } else if (key == "sp") {
      cfg.sp = field<double>(v, key);
    } else if (key == "eta") {
      cfg.eta = field<double>(v, key);
    } else if (key == "p_miss") {
      cfg.p_miss = field<double>(v, key);
    } else if (key == "stop_after_first_positive") {
      cfg.stop_after_first_positive = field<bool>(v, key);
    } else if (key == "replications") {
      cfg.replications = field<std::size_t>(v, key);
    } else if (key == "seed") {
      cfg.rng_seed = field<std::uint64_t>(v, key);
    } else if (key == "estimators") {
      cfg.estimators.clear();
      for (const auto& name : field<std::vector<std::string>>(v, key)) cfg.estimators.insert(parse_estimator(name));
    } else if (key == "threads") {
      cfg.threads = field<std::size_t>(v, key);
    } else {
      throw Error(Errc::Config, "unknown scenario field '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

ScenarioConfig read_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return scenario_from_json(buf.str());
}

std::uint64_t config_hash(const ScenarioConfig& cfg) {
  json j = config_json(cfg);
  j.erase("threads");  // worker count does not change results
  const std::string text = j.dump();
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

std::string fmt(double v) {
  if (!std::isfinite(v)) return "NA";
  std::ostringstream os;
  os << std::setprecision(8) << v;
  return os.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "NA"; }

}  // namespace

std::string metrics_to_csv(const ScenarioResult& result) {
  std::ostringstream os;
  os << "estimator,parameter,truth,mean_estimate,pct_bias,ase,ese,cp,rejection_rate,successes,failures\n";
  for (const auto& [est, table] : result.metrics) {
    for (const auto& m : table.parameters) {
      os << to_string(est) << ',' << m.name << ',' << fmt(m.truth) << ',' << fmt(m.mean_estimate) << ','
         << fmt(m.pct_bias) << ',' << fmt(m.ase) << ',' << fmt(m.ese) << ',' << fmt(m.cp) << ','
         << fmt(m.rejection_rate) << ',' << table.successes << ',' << table.failures << '\n';
    }
  }
  return os.str();
}

std::string manifest_to_json(const ScenarioResult& result) {
  json j;
  j["scenario"] = result.config.name;
  j["seed"] = result.config.rng_seed;
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << config_hash(result.config);
  j["config_hash"] = hash.str();
  j["replications"] = result.config.replications;
  json fails = json::object();
  for (const auto& [est, table] : result.metrics) {
    json f;
    f["successes"] = table.successes;
    f["failures"] = table.failures;
    f["reasons"] = table.failure_reasons;
    fails[std::string(to_string(est))] = f;
  }
  j["estimators"] = fails;
  j["mean_delta1"] = result.mean_delta1 ? json(*result.mean_delta1) : json(nullptr);
  j["mean_true_censoring"] = result.mean_true_censoring;
  j["mean_observed_censoring"] = result.mean_observed_censoring;
  j["mean_dropped_subjects"] = result.mean_dropped_subjects;
  j["config"] = config_json(result.config);
  return j.dump(2);
}

}  // namespace epsurv
