#include "epsurv/presets.hpp"

#include "epsurv/errors.hpp"

#include <cmath>
#include <functional>
#include <map>

namespace epsurv {

namespace {

struct Accuracy {
  double se, sp;
};

constexpr Accuracy kAccuracies[] = {{0.80, 0.90}, {0.90, 0.80}};
constexpr double kErrorVariances[] = {0.59, 1.72};  // attenuation about 0.60 and 0.30

ScenarioConfig base(Accuracy acc, double error_variance, bool high_censoring, double beta_x1 = std::log(1.5)) {
  ScenarioConfig cfg;
  cfg.se = acc.se;
  cfg.sp = acc.sp;
  cfg.error.kind = ErrorDistribution::Kind::Normal;
  cfg.error.variance = error_variance;
  cfg.beta_true(0) = beta_x1;
  const bool strong = std::abs(beta_x1 - std::log(3.0)) < 1e-12;
  if (high_censoring) {
    cfg.visit_times = {2, 5, 7, 8};
    cfg.baseline_hazards = {strong ? 0.008 : 0.012};
  } else {
    cfg.visit_times = {1, 3, 4, 6};
    cfg.baseline_hazards = {strong ? 0.076 : 0.094};
  }
  cfg.replications = 1000;
  cfg.estimators = {Estimator::True, Estimator::Naive, Estimator::Proposed};
  return cfg;
}

using Registry = std::map<std::string, std::function<ScenarioConfig()>>;

void add_rows(Registry& reg, const std::string& table, const std::vector<std::function<ScenarioConfig()>>& rows) {
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::string name = table + "_row" + std::to_string(r + 1);
    auto make = rows[r];
    reg[name] = [name, make]() {
      ScenarioConfig cfg = make();
      cfg.name = name;
      return cfg;
    };
  }
}

// Rows ordered by accuracy, then attenuation, then censoring (high first).
std::vector<std::function<ScenarioConfig()>> main_grid(double beta_x1, const std::vector<double>& strata_high,
                                                       const std::vector<double>& strata_low) {
  std::vector<std::function<ScenarioConfig()>> rows;
  for (Accuracy acc : kAccuracies) {
    for (double var : kErrorVariances) {
      for (bool high : {true, false}) {
        rows.push_back([=]() {
          ScenarioConfig cfg = base(acc, var, high, beta_x1);
          const auto& strata = high ? strata_high : strata_low;
          if (!strata.empty()) cfg.baseline_hazards = strata;
          return cfg;
        });
      }
    }
  }
  return rows;
}

const Registry& registry() {
  static const Registry reg = [] {
    Registry r;
    add_rows(r, "table1", main_grid(std::log(1.5), {}, {}));
    add_rows(r, "table2", main_grid(std::log(3.0), {}, {}));
    add_rows(r, "table4", main_grid(std::log(1.5), {0.008, 0.010, 0.011, 0.019}, {0.090, 0.080, 0.075, 0.131}));

    std::vector<std::function<ScenarioConfig()>> t3;
    for (Accuracy acc : kAccuracies) {
      for (bool student : {true, false}) {
        for (bool high : {true, false}) {
          t3.push_back([=]() {
            ScenarioConfig cfg = base(acc, 0.59, high);
            if (student) {
              cfg.error.kind = ErrorDistribution::Kind::StudentT;
              cfg.error.df = 4.0;
            } else {
              // .4 N(0, 1) + .6 N(2, 1.5), reading 1.5 as the standard deviation
              cfg.error.kind = ErrorDistribution::Kind::NormalMixture;
              cfg.error.weight = 0.4;
              cfg.error.mean1 = 0.0;
              cfg.error.var1 = 1.0;
              cfg.error.mean2 = 2.0;
              cfg.error.var2 = 1.5 * 1.5;
            }
            return cfg;
          });
        }
      }
    }
    add_rows(r, "table3", t3);

    std::vector<std::function<ScenarioConfig()>> t5;
    for (Accuracy acc : kAccuracies) {
      for (double var : {1.72, 0.59}) {
        for (bool high : {false, true}) {
          t5.push_back([=]() {
            ScenarioConfig cfg = base(acc, var, high, 0.0);
            cfg.estimators = {Estimator::Proposed};
            return cfg;
          });
        }
      }
    }
    add_rows(r, "table5", t5);

    std::vector<std::function<ScenarioConfig()>> s1;
    for (double var : kErrorVariances) {
      for (bool high : {true, false}) {
        s1.push_back([=]() {
          ScenarioConfig cfg = base(kAccuracies[0], var, high);
          cfg.estimators = {Estimator::Naive, Estimator::CovariateOnly, Estimator::OutcomeOnly, Estimator::Proposed};
          return cfg;
        });
      }
    }
    add_rows(r, "tableS1", s1);

    std::vector<std::function<ScenarioConfig()>> s2, s3;
    for (Accuracy acc : kAccuracies) {
      for (double var : kErrorVariances) {
        for (double eta : {0.98, 0.90}) {
          s2.push_back([=]() {
            ScenarioConfig cfg = base(acc, var, true);
            cfg.eta = eta;
            return cfg;
          });
        }
        for (double p_miss : {0.10, 0.40}) {
          s3.push_back([=]() {
            ScenarioConfig cfg = base(acc, var, true);
            cfg.p_miss = p_miss;
            return cfg;
          });
        }
      }
    }
    add_rows(r, "tableS2", s2);
    add_rows(r, "tableS3", s3);

    std::vector<std::function<ScenarioConfig()>> s4;
    for (double var : kErrorVariances) {
      s4.push_back([=]() {
        ScenarioConfig cfg = base({0.61, 0.995}, var, true);
        cfg.n = 65000;
        cfg.n_c = 500;
        cfg.eta = 0.96;
        cfg.stop_after_first_positive = true;
        cfg.baseline_hazards = {0.0045};
        cfg.estimators = {Estimator::True, Estimator::Naive, Estimator::CovariateOnly, Estimator::OutcomeOnly,
                          Estimator::Proposed};
        return cfg;
      });
    }
    add_rows(r, "tableS4", s4);

    r["s1_example"] = [] {
      ScenarioConfig cfg = base({0.60, 0.98}, 0.59, true);
      cfg.name = "s1_example";
      cfg.n = 10000;
      cfg.n_c = 500;
      cfg.eta = 0.95;
      cfg.binary_z = {{0.5, std::log(1.2), 0.2}, {0.3, std::log(0.8), -0.2}};
      cfg.replications = 1;
      cfg.estimators = {Estimator::Naive, Estimator::CovariateOnly, Estimator::Proposed};
      return cfg;
    };
    return r;
  }();
  return reg;
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [name, make] : registry()) names.push_back(name);
  return names;
}

ScenarioConfig preset(std::string_view name) {
  const auto& reg = registry();
  auto it = reg.find(std::string(name));
  if (it == reg.end()) {
    std::string msg = "unknown preset '" + std::string(name) + "'; available:";
    for (const auto& [n, make] : reg) msg += " " + n;
    throw Error(Errc::Config, msg);
  }
  return it->second();
}

}  // namespace epsurv
