#ifndef EPSURV_REPARAM_HPP
#define EPSURV_REPARAM_HPP

#include "epsurv/data_model.hpp"

#include <Eigen/Dense>

namespace epsurv {

// Unconstrained-ish coordinates for a baseline survival curve:
//   phi_1 = log(-log S_2)
//   phi_j = log(-log S_{j+1}) - log(-log S_j),  j >= 2   (phi_j >= 0)
// so that S_{j+1} = exp(-exp(phi_1 + ... + phi_j)). S_1 is not a coordinate.

/// Throws BoundViolation unless 1 >= S_1 >= S_2 >= ... > 0 with S_2 < 1.
Eigen::VectorXd reparameterize(const SurvivalCurve& curve);

/// Throws BoundViolation if any phi_j, j >= 2, is negative. Ties (phi_j = 0)
/// are returned as equal survival values.
SurvivalCurve dereparameterize(const Eigen::VectorXd& phi, double s1 = 1.0);

/// Lower bounds for one stratum block: -inf, then zeros.
Eigen::VectorXd survival_lower_bounds(Eigen::Index j);

/// Starting coordinates with every phi equal to `value`.
Eigen::VectorXd default_survival_start(Eigen::Index j, double value = 0.1);

}  // namespace epsurv

#endif  // EPSURV_REPARAM_HPP
