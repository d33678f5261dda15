#include "epsurv/errors.hpp"
#include "epsurv/presets.hpp"
#include "epsurv/simulation.hpp"

#include <doctest.h>

#include <json.hpp>

#include <cmath>

using namespace epsurv;

namespace {

ScenarioConfig small_config() {
  ScenarioConfig cfg;
  cfg.n = 300;
  cfg.n_c = 100;
  cfg.baseline_hazards = {0.05};
  cfg.replications = 4;
  cfg.estimators = {Estimator::True, Estimator::Naive, Estimator::CovariateOnly, Estimator::OutcomeOnly,
                    Estimator::Proposed};
  return cfg;
}

std::string config_error(const std::string& text) {
  try {
    scenario_from_json(text);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Config);
    return e.what();
  }
  FAIL("expected a Config error");
  return {};
}

}  // namespace

TEST_CASE("generation is deterministic per replication index") {
  const ScenarioConfig cfg = small_config();
  const GeneratedCohort a = generate_cohort(cfg, 2);
  const GeneratedCohort b = generate_cohort(cfg, 2);
  const GeneratedCohort c = generate_cohort(cfg, 3);
  CHECK(a.cohort.subjects() == b.cohort.subjects());
  CHECK(a.truth.x1 == b.truth.x1);
  CHECK_FALSE(a.cohort.subjects() == c.cohort.subjects());
  ScenarioConfig other = cfg;
  other.rng_seed = 99;
  CHECK_FALSE(generate_cohort(other, 2).cohort.subjects() == a.cohort.subjects());
}

TEST_CASE("generated cohorts follow the configuration") {
  ScenarioConfig cfg = small_config();
  cfg.n = 1000;
  cfg.n_c = 250;
  cfg.eta = 0.9;
  const GeneratedCohort g = generate_cohort(cfg, 0);
  CHECK(g.cohort.size() == 1000);
  std::size_t subset = 0, contaminated = 0;
  for (std::size_t i = 0; i < g.cohort.size(); ++i) {
    const SubjectRecord& s = g.cohort[i];
    if (s.in_calibration_subset) {
      ++subset;
      CHECK(s.x_double_star.has_value());
    } else {
      CHECK_FALSE(s.x_double_star.has_value());
    }
    if (g.truth.baseline_positive[i]) {
      ++contaminated;
      CHECK(g.truth.event_time(static_cast<Eigen::Index>(i)) == 0.0);
    }
    CHECK(s.t == cfg.visit_times);
  }
  CHECK(subset == 250);
  CHECK(contaminated == 100);
  CHECK(g.cohort.p() == 1);
  CHECK(g.cohort.q() == 2);
  CHECK(g.cohort.mode() == FollowUpMode::FullSchedule);

  const Cohort truth = true_data_cohort(g);
  CHECK(truth.size() == 900);
  CHECK(truth.mode() == FollowUpMode::StopAfterFirstPositive);
}

TEST_CASE("stop mode and missed visits shorten the schedule") {
  ScenarioConfig cfg = small_config();
  cfg.stop_after_first_positive = true;
  cfg.p_miss = 0.3;
  const GeneratedCohort g = generate_cohort(cfg, 1);
  CHECK(g.cohort.mode() == FollowUpMode::StopAfterFirstPositive);
  std::size_t visits = 0;
  for (const auto& s : g.cohort.subjects()) {
    visits += s.n_visits();
    for (std::size_t l = 0; l + 1 < s.n_visits(); ++l) CHECK(s.y[l] == 0);
  }
  CHECK(visits < 4 * g.cohort.size());
  CHECK(g.cohort.size() + g.truth.dropped_subjects == cfg.n);
}

TEST_CASE("scenario results do not depend on the thread count") {
  ScenarioConfig cfg = small_config();
  cfg.threads = 1;
  const std::string one = metrics_to_csv(run_scenario(cfg));
  cfg.threads = 3;
  const std::string three = metrics_to_csv(run_scenario(cfg));
  CHECK(one == three);
  CHECK(one.rfind("estimator,parameter,truth", 0) == 0);
}

TEST_CASE("scenario JSON round trip and hashing") {
  ScenarioConfig cfg = small_config();
  cfg.error.kind = ErrorDistribution::Kind::NormalMixture;
  cfg.binary_z.push_back({0.4, 0.2, 0.1});
  cfg.baseline_hazards = {0.01, 0.03};
  cfg.p_miss = 0.1;
  const ScenarioConfig back = scenario_from_json(scenario_to_json(cfg));
  CHECK(scenario_to_json(back) == scenario_to_json(cfg));
  CHECK(config_hash(back) == config_hash(cfg));

  ScenarioConfig threads = cfg;
  threads.threads = 8;
  CHECK(config_hash(threads) == config_hash(cfg));
  ScenarioConfig seed = cfg;
  seed.rng_seed += 1;
  CHECK(config_hash(seed) != config_hash(cfg));

  const ScenarioConfig partial = scenario_from_json("{\"n\": 50, \"n_c\": 20}", cfg);
  CHECK(partial.n == 50);
  CHECK(partial.p_miss == cfg.p_miss);
}

TEST_CASE("malformed scenario configs name the field") {
  CHECK(config_error("{\"bogus_key\": 1}").find("bogus_key") != std::string::npos);
  CHECK(config_error("{\"n\": \"many\"}").find("n") != std::string::npos);
  CHECK(config_error("{\"se\": 1.5}").find("se") != std::string::npos);
  ScenarioConfig cfg;
  cfg.replications = 0;
  CHECK_THROWS_AS(run_scenario(cfg), Error);
  cfg = ScenarioConfig{};
  CHECK_THROWS_AS(type_one_error(cfg), Error);
}

TEST_CASE("every preset loads and validates") {
  const std::vector<std::string> names = preset_names();
  CHECK(names.size() > 40);
  for (const auto& name : names) {
    const ScenarioConfig cfg = preset(name);
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.name == name);
  }
  try {
    preset("table9_row9");
    FAIL("expected a Config error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Config);
    CHECK(std::string(e.what()).find("table1_row1") != std::string::npos);
  }
}

TEST_CASE("metrics reduce hand-built replications") {
  ScenarioConfig cfg;
  cfg.beta_true = Eigen::Vector3d(0.5, 0.0, -0.2);
  cfg.estimators = {Estimator::Naive};
  std::vector<ReplicationResult> reps(3);
  reps[0].estimates[Estimator::Naive] = {Eigen::Vector3d(0.4, 0.1, -0.2), Eigen::Vector3d(0.1, 0.1, 0.1)};
  reps[1].estimates[Estimator::Naive] = {Eigen::Vector3d(0.8, -0.3, -0.1), Eigen::Vector3d(0.1, 0.1, 0.1)};
  reps[2].failures[Estimator::Naive] = "singular";
  reps[0].delta1 = 0.5;
  reps[1].delta1 = 0.7;
  const ScenarioResult r = summarize_replications(cfg, reps);
  const MetricsTable& t = r.metrics.at(Estimator::Naive);
  CHECK(t.successes == 2);
  CHECK(t.failures == 1);
  CHECK(t.failure_reasons.at("singular") == 1);
  REQUIRE(r.mean_delta1.has_value());
  CHECK(*r.mean_delta1 == doctest::Approx(0.6));

  const ParameterMetrics& x = t.parameters[0];
  CHECK(x.mean_estimate == doctest::Approx(0.6));
  CHECK(*x.pct_bias == doctest::Approx(100.0 * ((-0.1 / 0.5) + (0.3 / 0.5)) / 2.0));
  CHECK(x.ase == doctest::Approx(0.1));
  CHECK(*x.ese == doctest::Approx(std::sqrt((0.04 + 0.04) / 1.0)));
  CHECK(x.cp == doctest::Approx(0.5));  // |0.3| > 1.96 * 0.1
  CHECK(x.rejection_rate == doctest::Approx(1.0));
  const ParameterMetrics& z1 = t.parameters[1];
  CHECK_FALSE(z1.pct_bias.has_value());
  CHECK(z1.rejection_rate == doctest::Approx(0.5));
  CHECK(z1.cp == doctest::Approx(0.5));
}

TEST_CASE("manifest records the seed, hash and failures") {
  ScenarioConfig cfg = small_config();
  cfg.replications = 2;
  const ScenarioResult r = run_scenario(cfg);
  const auto j = nlohmann::json::parse(manifest_to_json(r));
  CHECK(j.at("seed") == cfg.rng_seed);
  CHECK(j.at("replications") == 2);
  CHECK(j.at("config_hash").get<std::string>().size() == 16);
  CHECK(j.at("estimators").contains("proposed"));
  CHECK(scenario_from_json(j.at("config").dump()).n == cfg.n);
  for (const auto& [est, table] : r.metrics) CHECK(table.successes + table.failures == 2);
}
