#include "epsurv/lbfgsb.hpp"

#include "epsurv/errors.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace epsurv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRelativeNoise = 1e-12;
constexpr double kCurvatureEps = std::numeric_limits<double>::epsilon();

struct Point {
  double alpha = 0.0;
  double f = kInf;
  double dphi = 0.0;
  Eigen::VectorXd x;
  Eigen::VectorXd g;
};

class Evaluator {
 public:
  explicit Evaluator(const ValueGradFn& fn) : fn_(fn) {}

  double operator()(const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    ++count;
    const double f = fn_(x, g);
    return std::isfinite(f) ? f : kInf;
  }

  int count = 0;

 private:
  const ValueGradFn& fn_;
};

Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
  return x.cwiseMax(lower).cwiseMin(upper);
}

struct Segment {
  const Eigen::VectorXd& x;
  const Eigen::VectorXd& d;
  const Eigen::VectorXd& lower;
  const Eigen::VectorXd& upper;
};

// The projection only absorbs rounding when the step ends on a bound.
Point evaluate_along(Evaluator& eval, const Segment& seg, double alpha) {
  Point p;
  p.alpha = alpha;
  p.x = project(seg.x + alpha * seg.d, seg.lower, seg.upper);
  p.f = eval(p.x, p.g);
  p.dphi = std::isfinite(p.f) ? p.g.dot(seg.d) : kInf;
  return p;
}

// Safeguarded minimiser of the quadratic through (lo.f, lo.dphi) and hi.f.
double interpolate(const Point& lo, const Point& hi) {
  const double width = hi.alpha - lo.alpha;
  double t = 0.5;
  if (std::isfinite(hi.f) && std::isfinite(lo.dphi)) {
    const double denom = 2.0 * (hi.f - lo.f - lo.dphi * width);
    if (denom > 0.0) t = -lo.dphi * width * width / denom / width;
  }
  t = std::clamp(t, 0.1, 0.9);
  return lo.alpha + t * width;
}

// Strong-Wolfe search on (0, alpha_max]. Returns false if no acceptable point.
bool wolfe_search(Evaluator& eval, const Segment& seg, double f0, double dphi0, double alpha1,
                  double alpha_max, const BoxMinimizerOptions& opt, Point& out) {
  const auto armijo = [&](const Point& p) { return p.f <= f0 + opt.c1 * p.alpha * dphi0; };
  const auto curvature = [&](const Point& p) { return std::abs(p.dphi) <= -opt.c2 * dphi0; };
  // Near a minimum f differences drown in rounding; fall back on the slope.
  const double f_noise = kRelativeNoise * std::max(1.0, std::abs(f0));
  const auto approx_wolfe = [&](const Point& p) { return p.f <= f0 + f_noise && curvature(p); };

  Point prev;
  prev.alpha = 0.0;
  prev.f = f0;
  prev.dphi = dphi0;
  prev.x = seg.x;

  auto zoom = [&](Point lo, Point hi) -> bool {
    for (int it = 0; it < opt.max_line_search; ++it) {
      const Point p = evaluate_along(eval, seg, interpolate(lo, hi));
      if (approx_wolfe(p)) {
        out = p;
        return true;
      }
      if (!armijo(p) || p.f >= lo.f) {
        hi = p;
      } else {
        if (curvature(p)) {
          out = p;
          return true;
        }
        if (p.dphi * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
        lo = p;
      }
      if (std::abs(hi.alpha - lo.alpha) <= 1e-14 * std::max(1.0, lo.alpha)) break;
    }
    if (lo.alpha > 0.0 && lo.f < f0) {
      out = lo;
      return true;
    }
    return false;
  };

  double alpha = std::min(alpha1, alpha_max);
  for (int it = 0; it < opt.max_line_search; ++it) {
    Point p = evaluate_along(eval, seg, alpha);
    if (approx_wolfe(p) && !armijo(p)) {
      out = p;
      return true;
    }
    if (!armijo(p) || (it > 0 && p.f >= prev.f)) return zoom(prev, p);
    if (curvature(p)) {
      out = p;
      return true;
    }
    if (p.dphi >= 0.0) return zoom(p, prev);
    if (alpha >= alpha_max) {
      out = p;
      return true;
    }
    prev = std::move(p);
    alpha = std::min(2.0 * alpha, alpha_max);
  }
  if (prev.alpha > 0.0 && prev.f < f0) {
    out = prev;
    return true;
  }
  return false;
}

// Backtracking along the projected path P(x + a d).
bool projected_search(Evaluator& eval, const Eigen::VectorXd& x, double f0, const Eigen::VectorXd& g0,
                      const Eigen::VectorXd& d, double alpha, const Eigen::VectorXd& lower,
                      const Eigen::VectorXd& upper, const BoxMinimizerOptions& opt, Point& out) {
  const double f_noise = kRelativeNoise * std::max(1.0, std::abs(f0));
  const double pg0 = projected_gradient_norm(x, g0, lower, upper);
  for (int it = 0; it < opt.max_line_search; ++it, alpha *= 0.5) {
    Point p;
    p.alpha = alpha;
    p.x = project(x + alpha * d, lower, upper);
    const double decrease = g0.dot(p.x - x);
    if (!(decrease < 0.0)) continue;
    p.f = eval(p.x, p.g);
    if (p.f <= f0 + opt.c1 * decrease ||
        (p.f <= f0 + f_noise && projected_gradient_norm(p.x, p.g, lower, upper) < 0.9 * pg0)) {
      out = std::move(p);
      return true;
    }
  }
  return false;
}

}  // namespace

double projected_gradient_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                               const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
  double norm = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double step = std::clamp(x(i) - g(i), lower(i), upper(i)) - x(i);
    norm = std::max(norm, std::abs(step));
  }
  return norm;
}

BoxMinimizerResult minimize_box(const ValueGradFn& fn, Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                                const Eigen::VectorXd& upper, const BoxMinimizerOptions& options) {
  const Eigen::Index n = x0.size();
  if (lower.size() != n || upper.size() != n) {
    throw Error(Errc::DimensionMismatch, "bounds do not match the starting point");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(x0(i) >= lower(i) && x0(i) <= upper(i))) {
      throw Error(Errc::InfeasibleStart, "starting point violates its bounds");
    }
  }

  Evaluator eval(fn);
  BoxMinimizerResult res;
  res.x = std::move(x0);
  res.f = eval(res.x, res.g);
  if (!std::isfinite(res.f)) throw Error(Errc::InfeasibleStart, "objective is not finite at the start");

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  Eigen::VectorXd free(n), d(n);
  bool just_reset = true;

  for (res.iterations = 0; res.iterations < options.max_iter; ++res.iterations) {
    res.projected_gradient_norm = projected_gradient_norm(res.x, res.g, lower, upper);
    if (res.projected_gradient_norm <= options.tol_g) {
      res.converged = true;
      res.message = "converged";
      break;
    }

    for (Eigen::Index i = 0; i < n; ++i) {
      const bool at_lower = res.x(i) <= lower(i) && res.g(i) > 0.0;
      const bool at_upper = res.x(i) >= upper(i) && res.g(i) < 0.0;
      free(i) = (at_lower || at_upper) ? 0.0 : 1.0;
    }

    // two-loop recursion restricted to the free variables
    Eigen::VectorXd q = res.g.cwiseProduct(free);
    const std::size_t m = s_hist.size();
    std::vector<double> alpha(m, 0.0), rho(m, 0.0);
    double gamma = 1.0;
    bool have_gamma = false;
    for (std::size_t k = m; k-- > 0;) {
      const Eigen::VectorXd s = s_hist[k].cwiseProduct(free);
      const Eigen::VectorXd y = y_hist[k].cwiseProduct(free);
      const double sy = s.dot(y);
      if (!(sy > kCurvatureEps * y.squaredNorm())) continue;
      rho[k] = 1.0 / sy;
      alpha[k] = rho[k] * s.dot(q);
      q -= alpha[k] * y;
      if (!have_gamma) {
        gamma = sy / y.squaredNorm();
        have_gamma = true;
      }
    }
    Eigen::VectorXd r = gamma * q;
    for (std::size_t k = 0; k < m; ++k) {
      if (rho[k] == 0.0) continue;
      const Eigen::VectorXd s = s_hist[k].cwiseProduct(free);
      const Eigen::VectorXd y = y_hist[k].cwiseProduct(free);
      const double beta = rho[k] * y.dot(r);
      r += (alpha[k] - beta) * s;
    }
    d = -r.cwiseProduct(free);

    double dphi0 = d.dot(res.g);
    if (!(dphi0 < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      d = -res.g.cwiseProduct(free);
      dphi0 = d.dot(res.g);
      have_gamma = false;
      just_reset = true;
    }
    if (!(dphi0 < 0.0)) {
      res.message = "no descent direction";
      break;
    }

    double alpha_max = kInf;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (d(i) < 0.0 && std::isfinite(lower(i))) alpha_max = std::min(alpha_max, (lower(i) - res.x(i)) / d(i));
      if (d(i) > 0.0 && std::isfinite(upper(i))) alpha_max = std::min(alpha_max, (upper(i) - res.x(i)) / d(i));
    }
    const double alpha1 = have_gamma ? 1.0 : std::min(1.0, 1.0 / d.lpNorm<Eigen::Infinity>());

    Point next;
    bool ok;
    if (alpha_max >= alpha1) {
      ok = wolfe_search(eval, Segment{res.x, d, lower, upper}, res.f, dphi0, alpha1, alpha_max, options, next);
    } else {
      ok = projected_search(eval, res.x, res.f, res.g, d, alpha1, lower, upper, options, next);
    }

    if (!ok) {
      if (!just_reset) {
        s_hist.clear();
        y_hist.clear();
        just_reset = true;
        continue;
      }
      res.message = "line search failed";
      break;
    }
    just_reset = false;

    Eigen::VectorXd s = next.x - res.x;
    Eigen::VectorXd y = next.g - res.g;
    if (s.dot(y) > kCurvatureEps * y.squaredNorm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      if (static_cast<int>(s_hist.size()) > options.history) {
        s_hist.pop_front();
        y_hist.pop_front();
      }
    }
    const double f_prev = res.f;
    res.x = std::move(next.x);
    res.f = next.f;
    res.g = std::move(next.g);
    const double reduction = f_prev - res.f;
    if (std::abs(reduction) <= 1e-15 * std::max(1.0, std::abs(res.f)) && s_hist.empty()) {
      res.message = "no progress";
      break;
    }
  }

  res.projected_gradient_norm = projected_gradient_norm(res.x, res.g, lower, upper);
  if (res.projected_gradient_norm <= options.tol_g) {
    res.converged = true;
    res.message = "converged";
  } else if (!res.converged && res.message.empty()) {
    res.message = "iteration limit reached";
  }
  res.evaluations = eval.count;
  return res;
}

}  // namespace epsurv
