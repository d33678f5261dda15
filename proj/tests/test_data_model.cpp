#include "epsurv/data_model.hpp"
#include "epsurv/errors.hpp"
#include "support.hpp"

#include <doctest.h>

#include <sstream>

using namespace epsurv;

namespace {

LongTable table_from(const std::string& text) {
  std::istringstream in(text);
  return parse_long_csv(in);
}

const char* kSmall =
    "ID,subset_ind,x_1_star,x_1_starstar,z_1,y,t\n"
    "a,1,0.5,0.4,1,0,2\n"
    "a,1,0.5,0.4,1,1,5\n"
    "b,0,-1,NA,0,0,2\n"
    "b,0,-1,NA,0,0,5\n"
    "b,0,-1,NA,0,0,7\n"
    "c,0,0.25,,1,1,7\n";

Errc ingest_error(const std::string& text, IngestOptions opt = {}) {
  const LongTable t = table_from(text);
  try {
    ingest_long(t, ColumnMap::detect(t), opt);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::Io;
}

}  // namespace

TEST_CASE("time grid rejects unordered or non-positive times") {
  CHECK_NOTHROW(TimeGrid({1.0, 2.5, 4.0}));
  CHECK_THROWS_AS(TimeGrid(std::vector<double>{}), Error);
  CHECK_THROWS_AS(TimeGrid({2.0, 1.0}), Error);
  CHECK_THROWS_AS(TimeGrid({0.0, 1.0}), Error);
  const TimeGrid g({1.0, 2.5, 4.0});
  CHECK(g.n_intervals() == 4);
  CHECK(g.index_of(2.5) == std::optional<std::size_t>(1));
  CHECK_FALSE(g.index_of(3.0).has_value());
}

TEST_CASE("column detection orders indexed covariates") {
  const LongTable t = table_from("ID,z_2,x_2_star,y,x_1_star,z_1,t,x_1_starstar,x_2_starstar,stratum\n");
  const ColumnMap m = ColumnMap::detect(t);
  CHECK(m.x_star == std::vector<std::string>{"x_1_star", "x_2_star"});
  CHECK(m.x_star_star == std::vector<std::string>{"x_1_starstar", "x_2_starstar"});
  CHECK(m.z == std::vector<std::string>{"z_1", "z_2"});
  CHECK(m.stratum == "stratum");
}

TEST_CASE("long-format ingestion builds subjects, grid and mode") {
  const LongTable t = table_from(kSmall);
  const Cohort c = ingest_long(t, ColumnMap::detect(t));
  REQUIRE(c.size() == 3);
  CHECK(c.grid().taus() == std::vector<double>{2, 5, 7});
  CHECK(c.mode() == FollowUpMode::StopAfterFirstPositive);
  CHECK(c.p() == 1);
  CHECK(c.q() == 1);
  CHECK(c[0].y == std::vector<int>{0, 1});
  CHECK(c[0].in_calibration_subset);
  REQUIRE(c[0].x_double_star.has_value());
  CHECK((*c[0].x_double_star)(0) == doctest::Approx(0.4));
  CHECK_FALSE(c[1].x_double_star.has_value());
  CHECK(c[2].t == std::vector<double>{7});
  CHECK(validate_cohort(c).empty());
}

TEST_CASE("visits after a positive imply the full-schedule mode") {
  const std::string text = "ID,x_1_star,y,t\na,0,1,1\na,0,0,2\nb,1,0,1\n";
  const LongTable t = table_from(text);
  CHECK(ingest_long(t, ColumnMap::detect(t)).mode() == FollowUpMode::FullSchedule);
  CHECK(ingest_error(text, {FollowUpMode::StopAfterFirstPositive}) == Errc::ModeMismatch);
}

TEST_CASE("ingestion errors carry specific codes") {
  CHECK(ingest_error("ID,x_1_star,y,t\na,0,0,2\na,0,0,1\n") == Errc::NonmonotoneVisits);
  CHECK(ingest_error("ID,x_1_star,y,t\na,0,0,2\na,1,0,3\n") == Errc::CovariateDriftWithinSubject);
  CHECK(ingest_error("ID,x_1_star,y,t\na,0,2,2\n") == Errc::MalformedInput);
  CHECK(ingest_error("ID,x_1_star,y,t\na,0,0,-1\n") == Errc::MalformedInput);
  CHECK(ingest_error("ID,x_1_star,y,t\na,zz,0,1\n") == Errc::MalformedInput);
  CHECK(ingest_error("ID,x_1_star,y,t\n") == Errc::EmptyCohort);
  CHECK(ingest_error("ID,y,t\na,0,1\n") == Errc::MalformedInput);
  CHECK(ingest_error("ID,subset_ind,x_1_star,x_1_starstar,y,t\na,1,0,NA,0,1\n") == Errc::MissingCalibrationMeasure);
  CHECK(ingest_error("ID,subset_ind,x_1_star,y,t\na,1,0,0,1\n") == Errc::MissingCalibrationMeasure);
  CHECK_THROWS_AS(table_from("ID,y,t\na,0\n"), Error);
}

TEST_CASE("quoted fields and CRLF line endings parse") {
  const LongTable t = table_from("ID,x_1_star,y,t\r\n\"a,1\",0.5,0,1\r\n");
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0][0] == "a,1");
  CHECK(t.rows[0][3] == "1");
}

TEST_CASE("truncation keeps visits up to the first positive") {
  const std::string text = "ID,x_1_star,y,t\na,0,0,1\na,0,1,2\na,0,1,3\nb,1,0,1\nb,1,0,3\n";
  const LongTable t = table_from(text);
  const Cohort full = ingest_long(t, ColumnMap::detect(t));
  const Cohort cut = truncate_after_first_positive(full);
  CHECK(cut.mode() == FollowUpMode::StopAfterFirstPositive);
  CHECK(cut[0].t == std::vector<double>{1, 2});
  CHECK(cut[1].t == std::vector<double>{1, 3});
  CHECK(cut.grid() == full.grid());
}

TEST_CASE("snapping merges nearly equal visit times") {
  LongTable t = table_from("ID,x_1_star,y,t\na,0,0,1.0\na,0,0,2.001\nb,0,0,0.999\nb,0,0,2\n");
  const std::size_t changed = snap_to_grid(t, "t", 0.01);
  CHECK(changed == 2);
  const Cohort c = ingest_long(t, ColumnMap::detect(t));
  CHECK(c.grid().size() == 2);
}

TEST_CASE("summary reports counts") {
  const LongTable t = table_from(kSmall);
  const CohortSummary s = summarize(ingest_long(t, ColumnMap::detect(t)));
  CHECK(s.subjects == 3);
  CHECK(s.visits == 6);
  CHECK(s.event_positive == 2);
  CHECK(s.calibration_subset == 1);
  const std::string text = to_text(s);
  CHECK(text.find("subjects: 3") != std::string::npos);
  CHECK(text.find("follow_up_mode: stop") != std::string::npos);
}

TEST_CASE("error model validation") {
  CHECK_NOTHROW((OutcomeErrorModel{0.8, 0.9, 1.0, {}}.validate()));
  CHECK_THROWS_AS((OutcomeErrorModel{0.5, 0.5, 1.0, {}}.validate()), Error);
  CHECK_THROWS_AS((OutcomeErrorModel{1.2, 0.9, 1.0, {}}.validate()), Error);
  CHECK_THROWS_AS((OutcomeErrorModel{0.8, 0.9, 0.0, {}}.validate()), Error);
  OutcomeErrorModel m{0.8, 0.9, 1.0, {{"g1", {0.7, 0.95}}}};
  CHECK(m.rates_for("g1").first == 0.7);
  CHECK(m.rates_for("g0").second == 0.9);
}

TEST_CASE("survival curve validity and masses") {
  SurvivalCurve c{Eigen::Vector3d(1.0, 0.8, 0.5), false};
  CHECK(c.is_valid());
  CHECK(c.theta().sum() == doctest::Approx(1.0));
  CHECK(c.theta()(1) == doctest::Approx(0.3));
  c.s(2) = 0.8;
  CHECK_FALSE(c.is_valid());
}

TEST_CASE("property: long-format round trip preserves the cohort") {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 25; ++trial) {
    testsupport::CohortShape shape;
    shape.n = 1 + static_cast<std::size_t>(trial % 7);
    shape.j = 1 + trial % 5;
    shape.p = 1 + trial % 2;
    shape.q = trial % 3;
    shape.strata = 1 + trial % 3;
    shape.p_miss = 0.2;
    shape.stop = trial % 2 == 0;
    const Cohort c = testsupport::random_cohort(rng, shape);
    ColumnMap cols;
    for (Eigen::Index k = 0; k < c.p(); ++k) cols.x_star.push_back("x_" + std::to_string(k + 1) + "_star");
    for (Eigen::Index k = 0; k < c.q(); ++k) cols.z.push_back("z_" + std::to_string(k + 1));
    cols.stratum = "stratum";
    std::ostringstream os;
    write_long_csv(to_long(c, cols), os);
    std::istringstream is(os.str());
    const LongTable t = parse_long_csv(is);
    IngestOptions opt;
    opt.mode = c.mode();
    const Cohort back = ingest_long(t, ColumnMap::detect(t), opt);
    CHECK(back.subjects() == c.subjects());
    // the grid of the copy only contains times that were observed
    for (double tau : back.grid().taus()) CHECK(c.grid().index_of(tau).has_value());
  }
}
