#ifndef EPSURV_MLE_ENGINE_HPP
#define EPSURV_MLE_ENGINE_HPP

#include "epsurv/data_model.hpp"
#include "epsurv/outcome_likelihood.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace epsurv {

struct OptimizerOptions {
  double tol_g = 1e-6;
  int max_iter = 500;
  int history = 10;
  double fd_step = 1e-5;  // relative step for the finite-difference Hessian
};

struct FitResult {
  CoefficientVector beta_hat;
  std::vector<SurvivalCurve> survival_hat;  // one per stratum
  std::optional<Eigen::MatrixXd> covariance;       // over the full parameter vector
  std::optional<Eigen::MatrixXd> beta_covariance;  // trailing (p+q) block
  double loglik = 0.0;
  double initial_loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  std::vector<std::string> warnings;
  std::string message;
  Eigen::VectorXd params;

  /// Square roots of the beta_covariance diagonal; empty without a covariance.
  Eigen::VectorXd beta_se() const;
};

/// Maximises the log-likelihood from the given starting values. A hit on the
/// iteration limit returns the best point with converged = false. A singular
/// Hessian leaves the covariance empty and adds a warning.
/// Throws InfeasibleStart for a start outside the bounds or with -inf value.
FitResult fit(const LikelihoodSpec& spec, const CoefficientVector& init_beta,
              const std::vector<SurvivalCurve>& init_s, const OptimizerOptions& options = {});

/// Starts every survival coordinate at 0.1.
FitResult fit(const LikelihoodSpec& spec, const CoefficientVector& init_beta,
              const OptimizerOptions& options = {});

FitResult fit_params(const LikelihoodSpec& spec, const Eigen::VectorXd& init_params,
                     const OptimizerOptions& options = {});

using GradientFn = std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& g)>;

/// Inverse of the negative Hessian of a log-likelihood, from central
/// differences of its gradient with step fd_step * max(1, |x_k|). H is
/// symmetrised before inversion. Throws SingularHessian.
Eigen::MatrixXd covariance_from_hessian(const GradientFn& grad, const Eigen::VectorXd& x,
                                        double fd_step = 1e-5);

Eigen::MatrixXd covariance_from_hessian(const LikelihoodSpec& spec, const Eigen::VectorXd& params,
                                        double fd_step = 1e-5);

/// Covariance of the full parameter vector at an optimum. Survival
/// coordinates on their lower bound, or with vanishing curvature, are held
/// fixed: their rows and columns are zero and a warning is appended.
Eigen::MatrixXd boundary_aware_covariance(const LikelihoodSpec& spec, const Eigen::VectorXd& params,
                                          const Eigen::VectorXd& lower, double fd_step,
                                          std::vector<std::string>& warnings);

}  // namespace epsurv

#endif  // EPSURV_MLE_ENGINE_HPP
