#ifndef EPSURV_TESTS_SUPPORT_HPP
#define EPSURV_TESTS_SUPPORT_HPP

#include "epsurv/data_model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace testsupport {

struct CohortShape {
  std::size_t n = 10;
  int j = 3;             // grid points; J + 1 intervals
  Eigen::Index p = 1;
  Eigen::Index q = 1;
  int strata = 1;
  double p_miss = 0.0;
  double p_positive = 0.3;
  bool stop = false;
};

inline double normal(std::mt19937_64& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

inline double uniform(std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Arbitrary outcome sequences on the grid 1..J; every subject keeps at least
/// one visit.
inline epsurv::Cohort random_cohort(std::mt19937_64& rng, const CohortShape& shape) {
  std::vector<double> taus;
  for (int k = 1; k <= shape.j; ++k) taus.push_back(static_cast<double>(k));
  std::vector<epsurv::SubjectRecord> subjects;
  for (std::size_t i = 0; i < shape.n; ++i) {
    epsurv::SubjectRecord s;
    s.id = "s" + std::to_string(i);
    s.x_star = Eigen::VectorXd(shape.p);
    for (Eigen::Index k = 0; k < shape.p; ++k) s.x_star(k) = 0.7 * normal(rng);
    s.z = Eigen::VectorXd(shape.q);
    for (Eigen::Index k = 0; k < shape.q; ++k) s.z(k) = 0.7 * normal(rng);
    s.stratum = "g" + std::to_string(std::uniform_int_distribution<int>(0, shape.strata - 1)(rng));
    for (double t : taus) {
      if (uniform(rng) < shape.p_miss) continue;
      s.t.push_back(t);
      s.y.push_back(uniform(rng) < shape.p_positive ? 1 : 0);
      if (shape.stop && s.y.back() == 1) break;
    }
    if (s.t.empty()) {
      const auto k = std::uniform_int_distribution<std::size_t>(0, taus.size() - 1)(rng);
      s.t.push_back(taus[k]);
      s.y.push_back(uniform(rng) < shape.p_positive ? 1 : 0);
    }
    subjects.push_back(std::move(s));
  }
  const auto mode = shape.stop ? epsurv::FollowUpMode::StopAfterFirstPositive : epsurv::FollowUpMode::FullSchedule;
  return epsurv::Cohort(epsurv::TimeGrid(taus), std::move(subjects), mode);
}

/// S_1 = 1 > S_2 > ... > S_{J+1} > 0.
inline epsurv::SurvivalCurve random_curve(std::mt19937_64& rng, int j) {
  epsurv::SurvivalCurve c;
  c.s.resize(j + 1);
  c.s(0) = 1.0;
  for (int k = 1; k <= j; ++k) c.s(k) = c.s(k - 1) * uniform(rng, 0.5, 0.98);
  return c;
}

/// Sum over subjects of log(sum_j theta_ij C_ij), with C_ij built visit by
/// visit from its definition and theta_ij from S_j^{exp(x'beta)}.
inline double brute_force_loglik(const epsurv::Cohort& cohort, const epsurv::OutcomeErrorModel& err,
                                 const std::vector<epsurv::SurvivalCurve>& curves, const Eigen::VectorXd& beta,
                                 bool stratified, double eta) {
  const auto& taus = cohort.grid().taus();
  const int intervals = static_cast<int>(taus.size()) + 1;
  double total = 0.0;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto& s = cohort[i];
    const auto [se, sp] = err.rates_for(s.stratum);
    Eigen::VectorXd x(s.x_star.size() + s.z.size());
    x << s.x_star, s.z;
    const double e = std::exp(x.dot(beta));
    const auto& curve = curves[stratified ? static_cast<std::size_t>(cohort.stratum_index(i)) : 0];
    double sum = 0.0;
    for (int j = 1; j <= intervals; ++j) {
      const double s_j = std::pow(curve.s(j - 1), e);
      const double s_next = j < intervals ? std::pow(curve.s(j), e) : 0.0;
      double theta = eta * (s_j - s_next);
      if (j == 1) theta = s_j - eta * s_next;
      double c = 1.0;
      for (std::size_t l = 0; l < s.t.size(); ++l) {
        const int m = static_cast<int>(std::find(taus.begin(), taus.end(), s.t[l]) - taus.begin()) + 1;
        const bool occurred = m >= j;
        const int y = s.y[l];
        c *= occurred ? (y ? se : 1.0 - se) : (y ? 1.0 - sp : sp);
      }
      sum += theta * c;
    }
    total += std::log(sum);
  }
  return total;
}

inline double max_rel_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-8) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    worst = std::max(worst, std::abs(a(k) - b(k)) / std::max({std::abs(a(k)), std::abs(b(k)), floor}));
  }
  return worst;
}

}  // namespace testsupport

#endif  // EPSURV_TESTS_SUPPORT_HPP
