#include "epsurv/mle_engine.hpp"

#include "epsurv/errors.hpp"
#include "epsurv/lbfgsb.hpp"
#include "epsurv/reparam.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace epsurv {

Eigen::VectorXd FitResult::beta_se() const {
  if (!beta_covariance) return {};
  return beta_covariance->diagonal().cwiseMax(0.0).cwiseSqrt();
}

namespace {

// Rows and columns of -H for the coordinates in `idx`, by central differences
// of the gradient; the other coordinates stay at x.
Eigen::MatrixXd negative_hessian(const GradientFn& grad, const Eigen::VectorXd& x,
                                 const std::vector<Eigen::Index>& idx, double fd_step) {
  const auto m = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd h(m, m);
  Eigen::VectorXd xp = x, gp, gm;
  for (Eigen::Index a = 0; a < m; ++a) {
    const Eigen::Index k = idx[static_cast<std::size_t>(a)];
    const double step = fd_step * std::max(1.0, std::abs(x(k)));
    xp(k) = x(k) + step;
    grad(xp, gp);
    xp(k) = x(k) - step;
    grad(xp, gm);
    xp(k) = x(k);
    for (Eigen::Index b = 0; b < m; ++b) {
      const Eigen::Index l = idx[static_cast<std::size_t>(b)];
      h(b, a) = -(gp(l) - gm(l)) / (2.0 * step);
    }
  }
  return 0.5 * (h + h.transpose());
}

Eigen::MatrixXd invert_information(const Eigen::MatrixXd& info) {
  if (!info.allFinite()) throw Error(Errc::SingularHessian, "Hessian has non-finite entries");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const double scale = ev.cwiseAbs().maxCoeff();
  if (!(scale > 0.0) || ev.cwiseAbs().minCoeff() <= 1e-12 * scale) {
    throw Error(Errc::SingularHessian, "Hessian is singular at the optimum");
  }
  Eigen::MatrixXd cov = eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (cov + cov.transpose());
}

}  // namespace

Eigen::MatrixXd covariance_from_hessian(const GradientFn& grad, const Eigen::VectorXd& x, double fd_step) {
  std::vector<Eigen::Index> all(static_cast<std::size_t>(x.size()));
  for (Eigen::Index k = 0; k < x.size(); ++k) all[static_cast<std::size_t>(k)] = k;
  return invert_information(negative_hessian(grad, x, all, fd_step));
}

Eigen::MatrixXd covariance_from_hessian(const LikelihoodSpec& spec, const Eigen::VectorXd& params,
                                        double fd_step) {
  return covariance_from_hessian(
      [&spec](const Eigen::VectorXd& x, Eigen::VectorXd& g) { log_likelihood_gradient(spec, x, g); },
      params, fd_step);
}

Eigen::MatrixXd boundary_aware_covariance(const LikelihoodSpec& spec, const Eigen::VectorXd& params,
                                          const Eigen::VectorXd& lower, double fd_step,
                                          std::vector<std::string>& warnings) {
  const GradientFn grad = [&spec](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    log_likelihood_gradient(spec, x, g);
  };
  const Eigen::Index n = params.size(), n_surv = spec.n_survival_params();
  const std::vector<SurvivalCurve> curves = unpack_survival(spec, params);
  const Eigen::Index per_stratum = spec.j();
  std::vector<Eigen::Index> interior;
  std::size_t on_bound = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    bool fixed = false;
    if (k < n_surv) {
      // closer to the bound than one difference step counts as on it
      fixed = params(k) - lower(k) < fd_step * std::max(1.0, std::abs(params(k)));
      const Eigen::VectorXd& sv = curves[static_cast<std::size_t>(k / per_stratum)].s;
      const Eigen::Index j = k % per_stratum;
      fixed = fixed || sv(j) - sv(j + 1) < 1e-10;
    }
    if (fixed) {
      ++on_bound;
    } else {
      interior.push_back(k);
    }
  }
  Eigen::MatrixXd info = negative_hessian(grad, params, interior, fd_step);

  // A survival coordinate whose curvature vanishes relative to the rest moves
  // along a flat ridge (an interval with no fitted mass); it is held fixed.
  const double diag_scale = info.diagonal().cwiseAbs().maxCoeff();
  std::vector<Eigen::Index> keep;
  std::size_t flat = 0;
  for (std::size_t a = 0; a < interior.size(); ++a) {
    const auto ai = static_cast<Eigen::Index>(a);
    if (interior[a] < n_surv && std::abs(info(ai, ai)) <= 1e-10 * diag_scale) {
      ++flat;
    } else {
      keep.push_back(ai);
    }
  }
  Eigen::MatrixXd sub(keep.size(), keep.size());
  for (std::size_t a = 0; a < keep.size(); ++a) {
    for (std::size_t b = 0; b < keep.size(); ++b) sub(a, b) = info(keep[a], keep[b]);
  }
  const Eigen::MatrixXd sub_cov = invert_information(sub);

  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t a = 0; a < keep.size(); ++a) {
    for (std::size_t b = 0; b < keep.size(); ++b) {
      cov(interior[static_cast<std::size_t>(keep[a])], interior[static_cast<std::size_t>(keep[b])]) = sub_cov(a, b);
    }
  }
  if (on_bound + flat > 0) {
    std::ostringstream msg;
    msg << on_bound + flat << " survival parameter(s) on the boundary were held fixed for the covariance";
    warnings.push_back(msg.str());
  }
  return cov;
}

FitResult fit_params(const LikelihoodSpec& spec, const Eigen::VectorXd& init_params,
                     const OptimizerOptions& options) {
  spec.check();
  if (init_params.size() != spec.n_params()) {
    throw Error(Errc::DimensionMismatch, "starting vector has the wrong length");
  }
  const Eigen::VectorXd lower = parameter_lower_bounds(spec);
  const Eigen::VectorXd upper = Eigen::VectorXd::Constant(spec.n_params(), std::numeric_limits<double>::infinity());

  const ValueGradFn objective = [&spec](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const LogLikValue v = log_likelihood_gradient(spec, x, g);
    g = -g;
    return v.finite ? -v.value : std::numeric_limits<double>::infinity();
  };

  BoxMinimizerOptions bo;
  bo.tol_g = options.tol_g;
  bo.max_iter = options.max_iter;
  bo.history = options.history;

  FitResult out;
  {
    const LogLikValue start = log_likelihood(spec, init_params);
    if (!start.finite) {
      std::ostringstream msg;
      msg << "log-likelihood is -inf at the starting values (subject " << start.bad_subject.value_or(-1) << ")";
      throw Error(Errc::InfeasibleStart, msg.str());
    }
    out.initial_loglik = start.value;
  }
  const BoxMinimizerResult res = minimize_box(objective, init_params, lower, upper, bo);

  out.params = res.x;
  out.loglik = -res.f;
  out.converged = res.converged;
  out.iterations = res.iterations;
  out.gradient_norm = res.projected_gradient_norm;
  out.message = res.message;
  out.beta_hat = CoefficientVector::split(res.x.tail(spec.n_beta()), spec.p);
  out.survival_hat = unpack_survival(spec, res.x);
  if (!res.converged) out.warnings.push_back("optimizer stopped before convergence: " + res.message);

  for (std::size_t k = 0; k < out.survival_hat.size(); ++k) {
    const Eigen::VectorXd& s = out.survival_hat[k].s;
    for (Eigen::Index j = 1; j + 1 < s.size(); ++j) {
      if (s(j) - s(j + 1) < 1e-10) {
        std::ostringstream msg;
        msg << "interval " << j + 1 << " of stratum " << k << " has no fitted mass";
        out.warnings.push_back(msg.str());
      }
    }
  }

  try {
    out.covariance = boundary_aware_covariance(spec, res.x, lower, options.fd_step, out.warnings);
    out.beta_covariance = out.covariance->bottomRightCorner(spec.n_beta(), spec.n_beta());
    if ((out.beta_covariance->diagonal().array() <= 0.0).any()) {
      out.warnings.push_back("negative Hessian is not positive definite in the coefficient block");
    }
  } catch (const Error& e) {
    if (e.code() != Errc::SingularHessian) throw;
    out.covariance.reset();
    out.beta_covariance.reset();
    out.warnings.push_back(e.what());
  }
  return out;
}

FitResult fit(const LikelihoodSpec& spec, const CoefficientVector& init_beta,
              const std::vector<SurvivalCurve>& init_s, const OptimizerOptions& options) {
  return fit_params(spec, pack_params(spec, init_s, init_beta.joined()), options);
}

FitResult fit(const LikelihoodSpec& spec, const CoefficientVector& init_beta, const OptimizerOptions& options) {
  const Eigen::VectorXd beta = init_beta.joined();
  if (beta.size() != spec.n_beta()) throw Error(Errc::DimensionMismatch, "coefficient length mismatch");
  Eigen::VectorXd params(spec.n_params());
  params.head(spec.n_survival_params()).setConstant(0.1);
  params.tail(spec.n_beta()) = beta;
  return fit_params(spec, params, options);
}

}  // namespace epsurv
