// Acceptance harness: one PASS/FAIL line per criterion. Pass criterion ids
// (C1 .. C10) to run a subset; the exit status is 1 when any selected
// criterion fails.

#include "../support.hpp"
#include "epsurv/calibration.hpp"
#include "epsurv/glm_cloglog.hpp"
#include "epsurv/mle_engine.hpp"
#include "epsurv/outcome_likelihood.hpp"
#include "epsurv/presets.hpp"
#include "epsurv/reparam.hpp"
#include "epsurv/simulation.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace epsurv;

namespace {

// Tolerances and reference values.
constexpr double kBiasBand = 5.0;              // percentage points
constexpr double kTable1NaiveBias = -88.03;
constexpr double kTable4ProposedBias = 1.893;
constexpr double kTableS2NaiveBias = -90.03;
constexpr double kTableS2ProposedLimit = 12.0;
constexpr double kCoverageLow = 0.91, kCoverageHigh = 0.98;
constexpr double kTypeOneLow = 0.036, kTypeOneHigh = 0.064;
constexpr double kAttenuationBand = 0.02;
constexpr double kGlmBetaTol = 1e-4;
constexpr double kGlmSeRelTol = 0.02;
constexpr double kLikelihoodTol = 1e-12;
constexpr double kGradientRelTol = 1e-6;
constexpr double kDeltaClosedFormTol = 1e-12;
constexpr double kDeltaMonteCarloRelTol = 0.05;
constexpr double kS4ProposedLimit = 5.0, kS4NaiveFloor = 50.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

const ParameterMetrics& x1_metrics(const ScenarioResult& r, Estimator e) { return r.metrics.at(e).parameters.at(0); }

double bias_of(const ScenarioResult& r, Estimator e) { return x1_metrics(r, e).pct_bias.value_or(NAN); }

ScenarioConfig with_replications(const std::string& name, std::size_t reps) {
  ScenarioConfig cfg = preset(name);
  cfg.replications = reps;
  return cfg;
}

Outcome table1() {
  const ScenarioResult r = run_scenario(with_replications("table1_row1", 200));
  const double prop = bias_of(r, Estimator::Proposed), naive = bias_of(r, Estimator::Naive);
  const double cp = x1_metrics(r, Estimator::Proposed).cp;
  const bool ok = std::abs(prop) <= kBiasBand && cp >= kCoverageLow && cp <= kCoverageHigh &&
                  std::abs(naive - kTable1NaiveBias) <= kBiasBand;
  return {ok, "proposed %bias " + fmt(prop) + ", CP " + fmt(cp) + ", naive %bias " + fmt(naive) + ", failures " +
                  std::to_string(r.metrics.at(Estimator::Proposed).failures)};
}

Outcome type_one() {
  const double rate = type_one_error(with_replications("table5_row4", 1000));
  return {rate > kTypeOneLow && rate < kTypeOneHigh, "rejection rate " + fmt(rate)};
}

Outcome attenuation() {
  const auto mean_delta = [](const std::string& name) {
    ScenarioConfig cfg = with_replications(name, 200);
    cfg.estimators = {Estimator::CovariateOnly};
    return run_scenario(cfg).mean_delta1.value_or(NAN);
  };
  const double low = mean_delta("table1_row1"), high = mean_delta("table1_row3");
  const bool ok = std::abs(low - 0.60) <= kAttenuationBand && std::abs(high - 0.30) <= kAttenuationBand;
  return {ok, "mean delta1 " + fmt(low) + " (sigma2 0.59), " + fmt(high) + " (sigma2 1.72)"};
}

Outcome glm_equivalence() {
  ScenarioConfig cfg;
  cfg.n = 500;
  cfg.n_c = 100;
  cfg.se = cfg.sp = cfg.eta = 1.0;
  cfg.p_miss = 0.0;
  cfg.visit_times = {1, 2, 3, 4};
  cfg.baseline_hazards = {0.08};
  cfg.rng_seed = 777;
  double worst_beta = 0.0, worst_se = 0.0;
  bool all_converged = true;
  for (std::size_t rep = 0; rep < 20; ++rep) {
    const GeneratedCohort gen = generate_cohort(cfg, rep);
    const GlmFit glm = fit_cloglog(expand_person_period(truncate_after_first_positive(gen.cohort)));
    const LikelihoodSpec spec =
        make_likelihood_spec(gen.cohort, OutcomeErrorModel{1.0, 1.0, 1.0, {}}, LikelihoodMode::Standard);
    const FitResult f = fit(spec, CoefficientVector{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(2)});
    all_converged = all_converged && f.converged && glm.converged && f.beta_covariance.has_value();
    if (!f.beta_covariance) continue;
    worst_beta = std::max(worst_beta, (f.beta_hat.joined() - glm.beta.joined()).cwiseAbs().maxCoeff());
    worst_se = std::max(worst_se, (f.beta_se().array() / glm.beta_se().array() - 1.0).abs().maxCoeff());
  }
  const bool ok = all_converged && worst_beta <= kGlmBetaTol && worst_se <= kGlmSeRelTol;
  return {ok, "max |dbeta| " + fmt(worst_beta, 3) + ", max SE rel diff " + fmt(worst_se, 3)};
}

Outcome likelihood_oracle() {
  std::mt19937_64 rng(20240501);
  const LikelihoodMode modes[] = {LikelihoodMode::Standard, LikelihoodMode::Stratified, LikelihoodMode::NpvAdjusted,
                                  LikelihoodMode::StratifiedNpv};
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    testsupport::CohortShape shape;
    shape.n = 1 + static_cast<std::size_t>(rng() % 10);
    shape.j = 1 + static_cast<int>(rng() % 3);
    shape.q = static_cast<Eigen::Index>(rng() % 3);
    shape.strata = 1 + static_cast<int>(rng() % 2);
    shape.p_miss = 0.2;
    shape.stop = rng() % 2 == 0;
    const Cohort cohort = testsupport::random_cohort(rng, shape);
    const LikelihoodMode mode = modes[trial % 4];
    const OutcomeErrorModel err{testsupport::uniform(rng, 0.6, 1.0), testsupport::uniform(rng, 0.6, 1.0),
                                testsupport::uniform(rng, 0.8, 1.0), {}};
    const LikelihoodSpec spec = make_likelihood_spec(cohort, err, mode);
    std::vector<SurvivalCurve> curves;
    for (int k = 0; k < spec.n_strata; ++k) curves.push_back(testsupport::random_curve(rng, shape.j));
    Eigen::VectorXd beta(spec.n_beta());
    for (Eigen::Index k = 0; k < beta.size(); ++k) beta(k) = 0.5 * testsupport::normal(rng);
    const double v = log_likelihood(spec, curves, CoefficientVector::split(beta, spec.p)).value;
    const double oracle = testsupport::brute_force_loglik(cohort, err, curves, beta, is_stratified(mode), spec.eta());
    worst = std::max(worst, std::abs(v - oracle) / std::max(1.0, std::abs(oracle)));
  }
  return {worst <= kLikelihoodTol, "max scaled difference " + fmt(worst, 3)};
}

Outcome gradient_check() {
  std::mt19937_64 rng(424242);
  const LikelihoodMode modes[] = {LikelihoodMode::Standard, LikelihoodMode::Stratified, LikelihoodMode::NpvAdjusted};
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    testsupport::CohortShape shape;
    shape.n = 40;
    shape.j = 2 + trial % 3;
    shape.q = 2;
    shape.strata = 2;
    shape.p_miss = 0.2;
    const Cohort cohort = testsupport::random_cohort(rng, shape);
    const LikelihoodSpec spec = make_likelihood_spec(cohort, OutcomeErrorModel{0.8, 0.9, 0.9, {}}, modes[trial % 3]);
    Eigen::VectorXd x(spec.n_params());
    for (int k = 0; k < spec.n_strata; ++k) {
      x.segment(k * spec.j(), spec.j()) = reparameterize(testsupport::random_curve(rng, shape.j));
    }
    for (Eigen::Index k = 0; k < spec.n_beta(); ++k) x(spec.n_survival_params() + k) = 0.4 * testsupport::normal(rng);
    Eigen::VectorXd g, fd(x.size());
    log_likelihood_gradient(spec, x, g);
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      const double h = 1e-6 * std::max(1.0, std::abs(x(k)));
      Eigen::VectorXd xp = x, xm = x;
      xp(k) += h;
      xm(k) -= h;
      fd(k) = (log_likelihood(spec, xp).value - log_likelihood(spec, xm).value) / (2.0 * h);
    }
    worst = std::max(worst, testsupport::max_rel_diff(g, fd, 1e-3));
  }
  return {worst < kGradientRelTol, "max relative error " + fmt(worst, 3)};
}

Outcome delta_method() {
  // p = 1, q = 0 against the closed form
  CalibrationModel uni;
  uni.delta0 = Eigen::VectorXd::Zero(1);
  uni.delta1 = Eigen::MatrixXd::Constant(1, 1, 0.62);
  uni.delta2 = Eigen::MatrixXd(1, 0);
  uni.residual_covariance = Eigen::MatrixXd::Constant(1, 1, 0.3);
  uni.coef_covariance = Eigen::MatrixXd::Constant(1, 1, 0.0009);
  const double b_star = 0.25, var_star = 0.0016;
  const Eigen::MatrixXd v_uni =
      corrected_covariance(CoefficientVector{Eigen::VectorXd::Constant(1, b_star), Eigen::VectorXd(0)},
                           Eigen::MatrixXd::Constant(1, 1, var_star), build_correction(uni), uni);
  const double closed = var_star / std::pow(0.62, 2) + b_star * b_star * 0.0009 / std::pow(0.62, 4);
  const double closed_err = std::abs(v_uni(0, 0) - closed);

  // p = 1, q = 2 against Monte Carlo draws of (beta*, Delta)
  CalibrationModel m;
  m.delta0 = Eigen::VectorXd::Zero(1);
  m.delta1 = Eigen::MatrixXd::Constant(1, 1, 0.6);
  m.delta2 = (Eigen::MatrixXd(1, 2) << 0.12, 0.2).finished();
  m.residual_covariance = Eigen::MatrixXd::Constant(1, 1, 0.3);
  m.coef_covariance = (Eigen::Matrix3d() << 4e-4, -5e-5, -5e-5, -5e-5, 3e-4, 4e-5, -5e-5, 4e-5, 3e-4).finished();
  const Eigen::Vector3d bs(0.25, -0.36, 0.26);
  const Eigen::Matrix3d sigma =
      (Eigen::Matrix3d() << 2.5e-3, 2e-4, 1e-4, 2e-4, 2.8e-3, 3e-4, 1e-4, 3e-4, 2.6e-3).finished();
  const Eigen::MatrixXd v = corrected_covariance(CoefficientVector::split(bs, 1), sigma, build_correction(m), m);

  const Eigen::Matrix3d l_beta = sigma.llt().matrixL();
  const Eigen::Matrix3d l_delta = m.coef_covariance.llt().matrixL();
  std::mt19937_64 rng(99173);
  std::normal_distribution<double> z;
  const long draws = 1000000;
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
  for (long d = 0; d < draws; ++d) {
    const Eigen::Vector3d zb(z(rng), z(rng), z(rng)), zd(z(rng), z(rng), z(rng));
    const Eigen::Vector3d b = bs + l_beta * zb;
    const Eigen::Vector3d dv = Eigen::Vector3d(m.delta1(0, 0), m.delta2(0, 0), m.delta2(0, 1)) + l_delta * zd;
    // beta = beta* A with A = Delta^{-1}
    const Eigen::Vector3d out(b(0) / dv(0), b(1) - b(0) * dv(1) / dv(0), b(2) - b(0) * dv(2) / dv(0));
    sum += out;
    cross += out * out.transpose();
  }
  const Eigen::Vector3d mean = sum / static_cast<double>(draws);
  const Eigen::Matrix3d mc = (cross - static_cast<double>(draws) * mean * mean.transpose()) / (draws - 1.0);
  const double diag_err = ((v.diagonal() - mc.diagonal()).array() / mc.diagonal().array()).abs().maxCoeff();
  const double frob_err = (v - mc).norm() / mc.norm();

  const bool ok = closed_err <= kDeltaClosedFormTol && diag_err <= kDeltaMonteCarloRelTol &&
                  frob_err <= kDeltaMonteCarloRelTol;
  return {ok, "closed-form error " + fmt(closed_err, 3) + ", Monte Carlo diagonal rel error " + fmt(diag_err, 3) +
                  ", matrix rel error " + fmt(frob_err, 3)};
}

Outcome stratified() {
  const ScenarioResult r = run_scenario(with_replications("table4_row1", 200));
  const double prop = bias_of(r, Estimator::Proposed), cp = x1_metrics(r, Estimator::Proposed).cp;
  const bool ok = std::abs(prop - kTable4ProposedBias) <= kBiasBand && cp >= kCoverageLow;
  return {ok, "proposed %bias " + fmt(prop) + ", CP " + fmt(cp)};
}

Outcome npv() {
  const ScenarioResult r = run_scenario(with_replications("tableS2_row2", 200));
  const double prop = bias_of(r, Estimator::Proposed), naive = bias_of(r, Estimator::Naive);
  const bool ok = std::abs(prop) < kTableS2ProposedLimit && std::abs(naive - kTableS2NaiveBias) <= kBiasBand;
  return {ok, "proposed %bias " + fmt(prop) + ", naive %bias " + fmt(naive)};
}

Outcome s4_reduced() {
  ScenarioConfig cfg = with_replications("tableS4_row1", 100);
  cfg.n = 5000;
  const ScenarioResult r = run_scenario(cfg);
  const double prop = bias_of(r, Estimator::Proposed), naive = bias_of(r, Estimator::Naive);
  const bool ok = std::abs(prop) < kS4ProposedLimit && std::abs(naive) > kS4NaiveFloor;
  return {ok, "N=5000 R=100: proposed %bias " + fmt(prop) + ", naive %bias " + fmt(naive)};
}

struct Criterion {
  std::string id;
  std::string title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<std::string> selected;
  app.add_option("criteria", selected, "Criterion ids to run (default: all)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {"C1", "table1_row1 bias and coverage (R=200)", table1},
      {"C2", "table5_row4 type I error (R=1000)", type_one},
      {"C3", "attenuation coefficient (R=200)", attenuation},
      {"C4", "GLM equivalence with perfect outcomes", glm_equivalence},
      {"C5", "likelihood against brute force", likelihood_oracle},
      {"C6", "analytic gradient against finite differences", gradient_check},
      {"C7", "delta-method covariance", delta_method},
      {"C8", "table4_row1 stratified (R=200)", stratified},
      {"C9", "tableS2_row2 NPV (R=200)", npv},
      {"C10", "tableS4_row1 reduced scale", s4_reduced},
  };

  int failures = 0, ran = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    ++ran;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS " : "FAIL ") << c.id << ' ' << c.title << ": " << o.detail << " [" << fmt(secs, 3)
              << " s]" << std::endl;
  }
  if (ran == 0) {
    std::cerr << "no matching criteria\n";
    return 2;
  }
  return failures == 0 ? 0 : 1;
}
