#include "epsurv/outcome_likelihood.hpp"

#include "epsurv/errors.hpp"
#include "epsurv/reparam.hpp"

#include <cmath>
#include <limits>

namespace epsurv {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double v) { return v > 0.0 ? std::log(v) : kNegInf; }

}  // namespace

Eigen::MatrixXd compute_log_c_matrix(const Cohort& cohort, const OutcomeErrorModel& err) {
  const auto n = static_cast<Eigen::Index>(cohort.size());
  const auto intervals = static_cast<Eigen::Index>(cohort.grid().n_intervals());
  Eigen::MatrixXd log_c = Eigen::MatrixXd::Zero(n, intervals);
  std::vector<std::size_t> grid_pos;

  for (Eigen::Index i = 0; i < n; ++i) {
    const SubjectRecord& s = cohort[static_cast<std::size_t>(i)];
    const auto [se, sp] = err.rates_for(s.stratum);
    const double log_se = safe_log(se), log_1mse = safe_log(1.0 - se);
    const double log_sp = safe_log(sp), log_1msp = safe_log(1.0 - sp);

    grid_pos.clear();
    for (double t : s.t) {
      auto k = cohort.grid().index_of(t);
      if (!k) throw Error(Errc::GridMismatch, "visit time of subject " + s.id + " is not on the grid");
      grid_pos.push_back(*k + 1);  // 1-based m: visit at tau_m
    }
    for (Eigen::Index j = 1; j <= intervals; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < grid_pos.size(); ++l) {
        const bool post_event = static_cast<Eigen::Index>(grid_pos[l]) >= j;
        if (post_event) {
          acc += s.y[l] == 1 ? log_se : log_1mse;
        } else {
          acc += s.y[l] == 1 ? log_1msp : log_sp;
        }
      }
      log_c(i, j - 1) = acc;
    }
  }
  return log_c;
}

Eigen::MatrixXd compute_c_matrix(const Cohort& cohort, const OutcomeErrorModel& err) {
  return compute_log_c_matrix(cohort, err).array().exp().matrix();
}

Eigen::MatrixXd build_m_matrix(Eigen::Index j_plus_1) {
  if (j_plus_1 < 2) throw Error(Errc::DimensionMismatch, "M needs at least two intervals");
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(j_plus_1, j_plus_1);
  for (Eigen::Index j = 0; j + 1 < j_plus_1; ++j) m(j, j + 1) = -1.0;
  return m;
}

LikelihoodMatrices build_likelihood_matrices(const Cohort& cohort, const OutcomeErrorModel& err) {
  err.validate();
  LikelihoodMatrices out;
  const Eigen::MatrixXd log_c = compute_log_c_matrix(cohort, err);
  out.c = log_c.array().exp().matrix();
  out.m = build_m_matrix(log_c.cols());
  out.d = out.c * out.m;

  out.log_scale.resize(log_c.rows());
  Eigen::MatrixXd c_scaled(log_c.rows(), log_c.cols());
  for (Eigen::Index i = 0; i < log_c.rows(); ++i) {
    double mx = log_c.row(i).maxCoeff();
    if (!std::isfinite(mx)) mx = 0.0;
    out.log_scale(i) = mx;
    c_scaled.row(i) = (log_c.row(i).array() - mx).exp();
  }
  out.d_scaled = c_scaled * out.m;
  return out;
}

std::string_view to_string(LikelihoodMode mode) {
  switch (mode) {
    case LikelihoodMode::Standard: return "standard";
    case LikelihoodMode::Stratified: return "stratified";
    case LikelihoodMode::NpvAdjusted: return "npv";
    case LikelihoodMode::StratifiedNpv: return "stratified_npv";
  }
  return "unknown";
}

bool is_stratified(LikelihoodMode mode) {
  return mode == LikelihoodMode::Stratified || mode == LikelihoodMode::StratifiedNpv;
}

bool is_npv(LikelihoodMode mode) {
  return mode == LikelihoodMode::NpvAdjusted || mode == LikelihoodMode::StratifiedNpv;
}

void LikelihoodSpec::check() const {
  const Eigen::Index n = matrices.c.rows();
  if (matrices.d_scaled.rows() != n || design.rows() != n ||
      static_cast<Eigen::Index>(strata.size()) != n || matrices.log_scale.size() != n) {
    throw Error(Errc::DimensionMismatch, "likelihood inputs disagree on the number of subjects");
  }
  if (p < 0 || p > design.cols()) throw Error(Errc::DimensionMismatch, "invalid error-prone column count");
  for (int k : strata) {
    if (k < 0 || k >= n_strata) throw Error(Errc::DimensionMismatch, "stratum index out of range");
  }
}

LikelihoodSpec make_likelihood_spec(const Cohort& cohort, const OutcomeErrorModel& err,
                                    LikelihoodMode mode, std::optional<Eigen::MatrixXd> design) {
  if (cohort.size() == 0) throw Error(Errc::EmptyCohort, "cohort has no subjects");
  LikelihoodSpec spec;
  spec.matrices = build_likelihood_matrices(cohort, err);
  spec.design = design ? std::move(*design) : cohort.design();
  spec.error_model = err;
  spec.mode = mode;
  spec.p = cohort.p();
  spec.strata.assign(cohort.size(), 0);
  if (is_stratified(mode)) {
    spec.n_strata = static_cast<int>(cohort.strata().size());
    for (std::size_t i = 0; i < cohort.size(); ++i) spec.strata[i] = cohort.stratum_index(i);
  }
  spec.check();
  return spec;
}

LogLikValue log_likelihood(const LikelihoodSpec& spec, const std::vector<SurvivalCurve>& curves,
                           const CoefficientVector& beta) {
  spec.check();
  if (static_cast<int>(curves.size()) != spec.n_strata) {
    throw Error(Errc::DimensionMismatch, "need one survival curve per stratum");
  }
  const Eigen::VectorXd b = beta.joined();
  if (b.size() != spec.n_beta()) throw Error(Errc::DimensionMismatch, "coefficient length mismatch");
  const Eigen::Index intervals = spec.n_intervals();
  std::vector<Eigen::VectorXd> log_s(curves.size());
  for (std::size_t k = 0; k < curves.size(); ++k) {
    if (curves[k].s.size() != intervals) {
      throw Error(Errc::DimensionMismatch, "survival curve length must be J + 1");
    }
    log_s[k] = curves[k].s.array().log();
  }
  const double eta = spec.eta();
  const Eigen::VectorXd lin = spec.design * b;

  LogLikValue out;
  for (Eigen::Index i = 0; i < spec.n_subjects(); ++i) {
    const double e = std::exp(lin(i));
    const Eigen::VectorXd& ls = log_s[static_cast<std::size_t>(spec.strata[static_cast<std::size_t>(i)])];
    double inner = spec.matrices.d_scaled(i, 0) * std::exp(e * ls(0));
    double rest = 0.0;
    for (Eigen::Index j = 1; j < intervals; ++j) {
      rest += spec.matrices.d_scaled(i, j) * std::exp(e * ls(j));
    }
    inner += eta * rest;
    if (!(inner > 0.0)) {
      return {kNegInf, false, i};
    }
    out.value += spec.matrices.log_scale(i) + std::log(inner);
  }
  return out;
}

std::vector<SurvivalCurve> unpack_survival(const LikelihoodSpec& spec, const Eigen::VectorXd& params) {
  std::vector<SurvivalCurve> curves;
  const Eigen::Index j = spec.j();
  for (int k = 0; k < spec.n_strata; ++k) curves.push_back(dereparameterize(params.segment(k * j, j)));
  return curves;
}

Eigen::VectorXd pack_params(const LikelihoodSpec& spec, const std::vector<SurvivalCurve>& curves,
                            const Eigen::VectorXd& beta) {
  if (static_cast<int>(curves.size()) != spec.n_strata || beta.size() != spec.n_beta()) {
    throw Error(Errc::DimensionMismatch, "parameter blocks do not match the likelihood");
  }
  Eigen::VectorXd params(spec.n_params());
  const Eigen::Index j = spec.j();
  for (int k = 0; k < spec.n_strata; ++k) params.segment(k * j, j) = reparameterize(curves[static_cast<std::size_t>(k)]);
  params.tail(spec.n_beta()) = beta;
  return params;
}

Eigen::VectorXd parameter_lower_bounds(const LikelihoodSpec& spec) {
  Eigen::VectorXd lb(spec.n_params());
  const Eigen::Index j = spec.j();
  for (int k = 0; k < spec.n_strata; ++k) lb.segment(k * j, j) = survival_lower_bounds(j);
  lb.tail(spec.n_beta()).setConstant(-std::numeric_limits<double>::infinity());
  return lb;
}

namespace {

// Per-stratum cumulative sums c_j = phi_1 + ... + phi_j and log S_{j+1} = -exp(c_j).
void survival_terms(const LikelihoodSpec& spec, const Eigen::VectorXd& params,
                    Eigen::MatrixXd& log_s) {
  const Eigen::Index j = spec.j();
  log_s.resize(j, spec.n_strata);
  for (int k = 0; k < spec.n_strata; ++k) {
    double c = 0.0;
    for (Eigen::Index m = 0; m < j; ++m) {
      c += params(k * j + m);
      log_s(m, k) = -std::exp(c);
    }
  }
}

}  // namespace

LogLikValue log_likelihood(const LikelihoodSpec& spec, const Eigen::VectorXd& params) {
  Eigen::VectorXd unused;
  return log_likelihood_gradient(spec, params, unused);
}

LogLikValue log_likelihood_gradient(const LikelihoodSpec& spec, const Eigen::VectorXd& params,
                                    Eigen::VectorXd& grad) {
  if (params.size() != spec.n_params()) {
    throw Error(Errc::DimensionMismatch, "parameter vector has the wrong length");
  }
  const Eigen::Index j = spec.j();
  const Eigen::Index w = spec.n_beta();
  const Eigen::Index nsurv = spec.n_survival_params();
  const double eta = spec.eta();
  const Eigen::VectorXd beta = params.tail(w);
  const Eigen::VectorXd lin = spec.design * beta;

  Eigen::MatrixXd log_s;
  survival_terms(spec, params, log_s);

  grad = Eigen::VectorXd::Zero(params.size());
  Eigen::VectorXd a(j);
  LogLikValue out;
  for (Eigen::Index i = 0; i < spec.n_subjects(); ++i) {
    const int k = spec.strata[static_cast<std::size_t>(i)];
    const double e = std::exp(lin(i));
    // interval 1 carries S_1 = 1, so it contributes no derivative
    double inner = spec.matrices.d_scaled(i, 0);
    double a_total = 0.0;
    for (Eigen::Index m = 0; m < j; ++m) {
      const double ls = log_s(m, k);
      const double term = eta * spec.matrices.d_scaled(i, m + 1) * std::exp(e * ls);
      inner += term;
      a(m) = term * e * ls;
      a_total += a(m);
    }
    if (!(inner > 0.0)) {
      grad.setZero();
      return {kNegInf, false, i};
    }
    out.value += spec.matrices.log_scale(i) + std::log(inner);
    const double inv = 1.0 / inner;
    // d/dphi_m collects every interval whose cumulative sum includes phi_m
    double suffix = 0.0;
    for (Eigen::Index m = j - 1; m >= 0; --m) {
      suffix += a(m);
      grad(k * j + m) += suffix * inv;
    }
    grad.segment(nsurv, w) += (a_total * inv) * spec.design.row(i).transpose();
  }
  return out;
}

}  // namespace epsurv
