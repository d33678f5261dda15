#ifndef EPSURV_LBFGSB_HPP
#define EPSURV_LBFGSB_HPP

#include <Eigen/Dense>

#include <functional>
#include <string>

namespace epsurv {

struct BoxMinimizerOptions {
  double tol_g = 1e-6;     // projected-gradient infinity norm
  int max_iter = 500;
  int history = 10;
  double c1 = 1e-4;        // sufficient decrease
  double c2 = 0.9;         // curvature (strong Wolfe)
  int max_line_search = 40;
};

/// Returns f(x) and writes the gradient. Returning +inf (or NaN) marks x as
/// outside the objective's domain; the line search then shortens the step.
using ValueGradFn = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& g)>;

struct BoxMinimizerResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd g;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  double projected_gradient_norm = 0.0;
  std::string message;
};

double projected_gradient_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                               const Eigen::VectorXd& lower, const Eigen::VectorXd& upper);

/// Limited-memory quasi-Newton minimisation under simple bounds.
///
/// Each iteration fixes the variables sitting on a bound whose gradient points
/// outward, builds the two-loop L-BFGS direction on the remaining variables,
/// and then either runs a strong-Wolfe search (when the unit step stays
/// feasible) or a projected Armijo backtrack along P(x + a d). Curvature pairs
/// with s'y <= 0 are skipped, so the inverse Hessian model stays positive
/// definite. Every accepted iterate is feasible.
///
/// Throws InfeasibleStart when x0 violates the bounds or f(x0) is not finite.
BoxMinimizerResult minimize_box(const ValueGradFn& fn, Eigen::VectorXd x0,
                                const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                const BoxMinimizerOptions& options = {});

}  // namespace epsurv

#endif  // EPSURV_LBFGSB_HPP
