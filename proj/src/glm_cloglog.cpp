#include "epsurv/glm_cloglog.hpp"

#include "epsurv/errors.hpp"

#include <algorithm>
#include <cmath>

namespace epsurv {

PersonPeriodTable expand_person_period(const Cohort& cohort, const std::optional<Eigen::MatrixXd>& design) {
  if (cohort.mode() != FollowUpMode::StopAfterFirstPositive) {
    throw Error(Errc::ModeMismatch, "person-period expansion needs stop-after-first-positive data");
  }
  const Eigen::MatrixXd x = design ? *design : cohort.design();
  if (x.rows() != static_cast<Eigen::Index>(cohort.size())) {
    throw Error(Errc::DimensionMismatch, "design rows do not match the cohort");
  }

  PersonPeriodTable table;
  table.n_intervals = static_cast<int>(cohort.grid().size());
  table.n_strata = std::max<int>(1, static_cast<int>(cohort.strata().size()));
  table.p = cohort.p();
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const SubjectRecord& s = cohort[i];
    for (std::size_t l = 0; l < s.n_visits(); ++l) {
      const auto k = cohort.grid().index_of(s.t[l]);
      if (!k) throw Error(Errc::GridMismatch, "visit time of subject " + s.id + " is not on the grid");
      table.rows.push_back({i, static_cast<int>(*k) + 1, cohort.stratum_index(i), s.y[l]});
      if (s.y[l] == 1) break;
    }
  }
  table.covariates.resize(static_cast<Eigen::Index>(table.rows.size()), x.cols());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    table.covariates.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(table.rows[r].subject));
  }
  return table;
}

namespace {

struct LinkTerms {
  double mu, dmu, log_mu, log_1mmu;
};

LinkTerms cloglog(double eta) {
  const double e = std::exp(eta);
  LinkTerms t;
  t.mu = -std::expm1(-e);
  t.log_1mmu = -e;
  t.log_mu = std::log(t.mu);
  t.dmu = std::exp(eta - e);
  return t;
}

double deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& eta) {
  double dev = 0.0;
  for (Eigen::Index r = 0; r < y.size(); ++r) {
    const LinkTerms t = cloglog(eta(r));
    dev -= 2.0 * (y(r) == 1.0 ? t.log_mu : t.log_1mmu);
  }
  return dev;
}

}  // namespace

GlmFit fit_cloglog(const PersonPeriodTable& table, const GlmOptions& options) {
  if (table.rows.empty()) throw Error(Errc::EmptyCohort, "person-period table is empty");
  const Eigen::Index n = static_cast<Eigen::Index>(table.rows.size());
  const int strata = options.stratified ? table.n_strata : 1;
  const Eigen::Index n_int = static_cast<Eigen::Index>(table.n_intervals) * strata;
  const Eigen::Index w = table.covariates.cols();
  const Eigen::Index ncol = n_int + w;

  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, ncol);
  Eigen::VectorXd y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const PersonPeriodRow& row = table.rows[static_cast<std::size_t>(r)];
    const int k = options.stratified ? row.stratum : 0;
    x(r, static_cast<Eigen::Index>(k) * table.n_intervals + row.interval - 1) = 1.0;
    y(r) = row.event;
  }
  x.rightCols(w) = table.covariates;

  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < ncol) throw Error(Errc::RankDeficient, "person-period design is rank deficient");
  }

  Eigen::VectorXd eta(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mu = (y(r) + 0.5) / 2.0;
    eta(r) = std::log(-std::log1p(-mu));
  }

  GlmFit fit;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(ncol);
  double dev_old = deviance(y, eta);
  Eigen::VectorXd wts(n), z(n);
  Eigen::LLT<Eigen::MatrixXd> llt;

  for (fit.iterations = 1; fit.iterations <= options.max_iter; ++fit.iterations) {
    for (Eigen::Index r = 0; r < n; ++r) {
      const LinkTerms t = cloglog(eta(r));
      const double mu = std::clamp(t.mu, 1e-15, 1.0 - 1e-15);
      wts(r) = t.dmu * t.dmu / (mu * (1.0 - mu));
      z(r) = eta(r) + (y(r) - t.mu) / std::max(t.dmu, 1e-300);
    }
    const Eigen::MatrixXd xtw = x.transpose() * wts.asDiagonal();
    llt.compute(xtw * x);
    if (llt.info() != Eigen::Success) throw Error(Errc::RankDeficient, "weighted information is singular");
    Eigen::VectorXd beta_new = llt.solve(xtw * z);
    Eigen::VectorXd eta_new = x * beta_new;
    double dev = deviance(y, eta_new);

    // after the first iteration, halve back towards the previous fit
    for (int h = 0; fit.iterations > 1 && h < 30 && !(dev <= dev_old); ++h) {
      beta_new = 0.5 * (beta_new + beta);
      eta_new = x * beta_new;
      dev = deviance(y, eta_new);
    }
    beta = std::move(beta_new);
    eta = std::move(eta_new);
    fit.deviance_trace.push_back(dev);
    const double change = std::abs(dev - dev_old) / (std::abs(dev) + 0.1);
    dev_old = dev;
    if (change < options.tol) {
      fit.converged = true;
      break;
    }
  }
  fit.iterations = std::min(fit.iterations, options.max_iter);
  fit.deviance = dev_old;

  for (Eigen::Index r = 0; r < n; ++r) {
    const LinkTerms t = cloglog(eta(r));
    const double mu = std::clamp(t.mu, 1e-15, 1.0 - 1e-15);
    wts(r) = t.dmu * t.dmu / (mu * (1.0 - mu));
  }
  llt.compute(x.transpose() * wts.asDiagonal() * x);
  if (llt.info() != Eigen::Success) throw Error(Errc::RankDeficient, "weighted information is singular");
  fit.covariance = llt.solve(Eigen::MatrixXd::Identity(ncol, ncol));
  fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose());

  fit.coefficients = beta;
  fit.intercepts = Eigen::Map<const Eigen::MatrixXd>(beta.data(), table.n_intervals, strata);
  fit.beta = CoefficientVector::split(beta.tail(w), table.p);
  fit.beta_covariance = fit.covariance.bottomRightCorner(w, w);
  fit.separation = (beta.array().abs() > options.separation_threshold).any();
  return fit;
}

Eigen::VectorXd GlmFit::beta_se() const { return beta_covariance.diagonal().cwiseMax(0.0).cwiseSqrt(); }

std::vector<SurvivalCurve> GlmFit::survival() const {
  std::vector<SurvivalCurve> out;
  for (Eigen::Index k = 0; k < intercepts.cols(); ++k) out.push_back(survival_from_intercepts(intercepts.col(k)));
  return out;
}

SurvivalCurve survival_from_intercepts(const Eigen::VectorXd& gamma) {
  SurvivalCurve curve;
  curve.s.resize(gamma.size() + 1);
  curve.s(0) = 1.0;
  for (Eigen::Index j = 0; j < gamma.size(); ++j) curve.s(j + 1) = curve.s(j) * std::exp(-std::exp(gamma(j)));
  return curve;
}

}  // namespace epsurv
