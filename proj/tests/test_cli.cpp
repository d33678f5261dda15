#include "cli.hpp"
#include "epsurv/calibration.hpp"

#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using epsurv::cli::ExitCode;
using epsurv::cli::run_cli;

namespace {

struct CliRun {
  int code = 0;
  std::string out, err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "epsurv");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("epsurv_cli_" + std::to_string(++counter_) + "_" +
                                         std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
  static inline int counter_ = 0;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes a scenario file and generates one cohort from it.
std::string generate(const TempDir& dir, const std::string& scenario_json) {
  const std::string scenario = dir.file("scenario.json"), csv = dir.file("cohort.csv");
  std::ofstream(scenario) << scenario_json;
  const CliRun r = run({"generate", "--scenario", scenario, "--out", csv});
  REQUIRE(r.code == ExitCode::kOk);
  return csv;
}

const nlohmann::json& method(const nlohmann::json& report, const std::string& name) {
  for (const auto& m : report.at("methods"))
    if (m.at("method") == name) return m;
  FAIL("method missing from report: " << name);
  return report;
}

}  // namespace

TEST_CASE("fit reports every requested estimator") {
  TempDir dir;
  const std::string csv = generate(dir, R"({"preset": "table1_row1", "n": 600, "n_c": 200})");
  const std::string report = dir.file("report.json");
  const CliRun r = run({"fit", "--input", csv, "--se", "0.8", "--sp", "0.9", "--increment", "2", "--out", report});
  CHECK(r.code == ExitCode::kOk);
  CHECK(r.out.find("proposed") != std::string::npos);
  const auto j = nlohmann::json::parse(slurp(report));
  CHECK(j.at("subjects") == 600);
  CHECK(j.at("methods").size() == 3);
  const auto& prop = method(j, "proposed");
  CHECK(prop.at("converged") == true);
  const auto& x1 = prop.at("coefficients").at(0);
  CHECK(x1.at("name") == "x_1_star");
  const double beta = x1.at("beta"), se = x1.at("se");
  CHECK(x1.at("hazard_ratio").get<double>() == doctest::Approx(std::exp(2.0 * beta)));
  CHECK(x1.at("ci_lower").get<double>() < x1.at("ci_upper").get<double>());
  CHECK(se > 0.0);
  const auto& z1 = prop.at("coefficients").at(1);
  CHECK(z1.at("hazard_ratio").get<double>() == doctest::Approx(std::exp(z1.at("beta").get<double>())));
  CHECK(prop.at("survival").at(0).at("s").at(0) == 1.0);
}

TEST_CASE("calibrate then fit composes to the outcome-only fit times A") {
  TempDir dir;
  const std::string csv = generate(dir, R"({"preset": "table1_row1", "n": 800, "n_c": 300, "seed": 3})");
  const std::string calib = dir.file("calib.json"), report = dir.file("report.json");
  REQUIRE(run({"calibrate", "--input", csv, "--out", calib}).code == ExitCode::kOk);
  const CliRun r = run({"fit", "--input", csv, "--method", "outcome_only,proposed", "--se", "0.8", "--sp", "0.9", "--calibration", calib, "--out",
                        report});
  REQUIRE(r.code == ExitCode::kOk);
  const auto j = nlohmann::json::parse(slurp(report));
  const auto& oo = method(j, "outcome_only").at("coefficients");
  const auto& pr = method(j, "proposed").at("coefficients");
  Eigen::VectorXd b_star(oo.size()), b(pr.size());
  for (std::size_t k = 0; k < oo.size(); ++k) {
    b_star(static_cast<Eigen::Index>(k)) = oo.at(k).at("beta");
    b(static_cast<Eigen::Index>(k)) = pr.at(k).at("beta");
  }
  const epsurv::CorrectionMatrix corr = epsurv::build_correction(epsurv::read_calibration(calib));
  const Eigen::VectorXd expect = corr.a.transpose() * b_star;
  CHECK((b - expect).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("missing reference measure names the column") {
  TempDir dir;
  const std::string csv = dir.file("plain.csv");
  std::ofstream(csv) << "ID,x_1_star,y,t\na,0.1,0,1\na,0.1,1,2\nb,0.5,0,1\nb,0.5,0,2\nc,-0.2,1,1\n";
  const CliRun r = run({"fit", "--input", csv, "--method", "proposed"});
  CHECK(r.code == ExitCode::kValidation);
  CHECK(r.err.find("x_1_starstar") != std::string::npos);
  CHECK(run({"summary", "--input", csv}).code == ExitCode::kOk);
}

TEST_CASE("exit codes distinguish failure classes") {
  TempDir dir;
  CHECK(run({"fit", "--input", dir.file("absent.csv")}).code == ExitCode::kIo);
  CHECK(run({"simulate", "--preset", "table1_row1", "--replications", "0"}).code == ExitCode::kValidation);
  CHECK(run({"fit"}).code == ExitCode::kValidation);
  CHECK(run({"no-such-command"}).code == ExitCode::kValidation);

  const CliRun unknown = run({"presets", "--show", "table9_row9"});
  CHECK(unknown.code == ExitCode::kValidation);
  CHECK(unknown.err.find("table1_row1") != std::string::npos);

  const std::string csv = generate(dir, R"({"preset": "table1_row1", "n": 400, "n_c": 100})");
  CHECK(run({"fit", "--input", csv, "--method", "naive", "--se", "1.4", "--sp", "0.9"}).code == ExitCode::kValidation);
  CHECK(run({"fit", "--input", csv, "--method", "outcome_only", "--se", "0.8", "--sp", "0.9", "--max-iter", "1"}).code == ExitCode::kConvergence);
  CHECK(run({"fit", "--input", csv, "--method", "bogus"}).code == ExitCode::kValidation);
}

TEST_CASE("simulate writes metrics and manifest") {
  TempDir dir;
  const std::string out = dir.file("run");
  const std::string scenario = dir.file("small.json");
  std::ofstream(scenario) << R"({"preset": "table1_row1", "n": 300, "n_c": 100, "replications": 2})";
  const CliRun r = run({"simulate", "--scenario", scenario, "--seed", "7", "--out", out});
  REQUIRE(r.code == ExitCode::kOk);
  CHECK(r.out.rfind("estimator,parameter", 0) == 0);
  CHECK(slurp(out + "/metrics.csv") == r.out);
  const auto manifest = nlohmann::json::parse(slurp(out + "/manifest.json"));
  CHECK(manifest.at("seed") == 7);
  CHECK(manifest.at("scenario") == "table1_row1");
  CHECK(run({"simulate", "--preset", "table1_row1", "--scenario", scenario}).code == ExitCode::kValidation);
}

TEST_CASE("presets lists names and shows one as JSON") {
  const CliRun list = run({"presets"});
  CHECK(list.code == ExitCode::kOk);
  CHECK(list.out.find("tableS4_row2") != std::string::npos);
  const CliRun show = run({"presets", "--show", "table5_row4"});
  REQUIRE(show.code == ExitCode::kOk);
  CHECK(nlohmann::json::parse(show.out).contains("beta_true"));
}
