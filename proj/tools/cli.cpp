#include "cli.hpp"

#include "epsurv/calibration.hpp"
#include "epsurv/data_model.hpp"
#include "epsurv/errors.hpp"
#include "epsurv/glm_cloglog.hpp"
#include "epsurv/mle_engine.hpp"
#include "epsurv/outcome_likelihood.hpp"
#include "epsurv/presets.hpp"
#include "epsurv/simulation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace epsurv::cli {

namespace {

using nlohmann::json;

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::MaxIterationsExceeded:
      return kConvergence;
    case Errc::SingularHessian:
    case Errc::RankDeficient:
    case Errc::SingularDelta:
      return kSingularity;
    case Errc::Io:
      return kIo;
    default:
      return kValidation;
  }
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw Error(Errc::Io, "cannot write '" + path + "'");
  f << text;
  if (!f) throw Error(Errc::Io, "failed writing '" + path + "'");
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Data loading

struct DataArgs {
  std::string input;
  std::string mode = "auto";
  std::string x_star, x_star_star, z, stratum;
  std::optional<double> snap_tol;
};

void add_data_options(CLI::App* cmd, DataArgs& a) {
  cmd->add_option("--input", a.input, "Long-format CSV (ID, subset_ind, x_k_star, x_k_starstar, z_k, y, t)")
      ->required();
  cmd->add_option("--mode", a.mode, "Follow-up mode: auto, full or stop")
      ->check(CLI::IsMember({"auto", "full", "stop"}));
  cmd->add_option("--x-star", a.x_star, "Comma-separated error-prone covariate columns");
  cmd->add_option("--x-star-star", a.x_star_star, "Comma-separated reference-measure columns");
  cmd->add_option("--z", a.z, "Comma-separated precise covariate columns ('none' for no columns)");
  cmd->add_option("--stratum", a.stratum, "Stratum column");
  cmd->add_option("--snap-to-grid", a.snap_tol, "Merge visit times within this tolerance");
}

struct LoadedData {
  LongTable table;
  ColumnMap columns;
};

LoadedData load_table(const DataArgs& a) {
  LoadedData d;
  d.table = read_long_csv(a.input);
  d.columns = ColumnMap::detect(d.table);
  if (a.snap_tol) snap_to_grid(d.table, d.columns.t, *a.snap_tol);
  if (!a.x_star.empty()) d.columns.x_star = split_list(a.x_star);
  if (!a.x_star_star.empty()) d.columns.x_star_star = split_list(a.x_star_star);
  if (a.z == "none") {
    d.columns.z.clear();
  } else if (!a.z.empty()) {
    d.columns.z = split_list(a.z);
  }
  if (!a.stratum.empty()) d.columns.stratum = a.stratum;
  return d;
}

Cohort ingest(const LoadedData& d, const DataArgs& a) {
  IngestOptions opt;
  if (a.mode != "auto") opt.mode = parse_follow_up_mode(a.mode);
  return ingest_long(d.table, d.columns, opt);
}

// Reference columns the calibration fit will read; names the first absent one.
void require_reference_columns(const LoadedData& d) {
  std::vector<std::string> wanted = d.columns.x_star_star;
  if (wanted.empty()) {
    for (const auto& x : d.columns.x_star) wanted.push_back(x + "star");
  }
  for (const auto& name : wanted) {
    if (d.table.column(name) < 0) {
      throw Error(Errc::MissingCalibrationMeasure,
                  "calibration needs reference column '" + name + "' (or pass --calibration FILE)");
    }
  }
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  DataArgs data;
  std::string methods = "naive,covariate_only,proposed";
  std::optional<double> se, sp;
  double eta = 1.0;
  std::vector<std::string> stratum_error;
  std::string calibration;
  double increment = 1.0;
  double tol_g = 1e-6;
  int max_iter = 500;
  int history = 10;
  double fd_step = 1e-5;
  std::string out;
  std::size_t threads = 1;
  std::uint64_t seed = 0;
};

struct MethodReport {
  std::string method;
  CoefficientVector beta;
  std::optional<Eigen::MatrixXd> covariance;
  std::vector<SurvivalCurve> survival;
  bool converged = false;
  int iterations = 0;
  std::optional<double> loglik;
  std::vector<std::string> warnings;
  std::string message;
  std::optional<Errc> error;
};

struct FitContext {
  const FitArgs& args;
  const Cohort& cohort;
  const LoadedData& data;
  std::optional<GlmFit> naive;
  std::optional<std::string> naive_error;
  std::optional<FitResult> mle;
  std::optional<Error> mle_error;
  std::optional<CalibrationModel> calib;
  std::optional<CorrectionMatrix> corr;
};

GlmFit run_glm(const Cohort& cohort) {
  GlmOptions opt;
  opt.stratified = cohort.strata().size() > 1;
  return fit_cloglog(expand_person_period(truncate_after_first_positive(cohort)), opt);
}

MethodReport glm_report(const std::string& name, const GlmFit& g) {
  MethodReport r;
  r.method = name;
  r.beta = g.beta;
  r.covariance = g.beta_covariance;
  r.survival = g.survival();
  r.converged = g.converged;
  r.iterations = g.iterations;
  r.message = g.converged ? "converged" : "IRLS iteration limit reached";
  if (g.separation) r.warnings.push_back("possible separation: a coefficient exceeds the threshold");
  return r;
}

const GlmFit& naive_fit(FitContext& ctx) {
  if (!ctx.naive) ctx.naive = run_glm(ctx.cohort);
  return *ctx.naive;
}

OutcomeErrorModel error_model(const FitArgs& a, const std::string& method) {
  if (!a.se || !a.sp) {
    throw Error(Errc::InvalidErrorModel, "method '" + method + "' needs --se and --sp");
  }
  OutcomeErrorModel err{*a.se, *a.sp, a.eta, {}};
  for (const auto& entry : a.stratum_error) {
    const auto parts = [&] {
      std::vector<std::string> v;
      std::stringstream ss(entry);
      std::string s;
      while (std::getline(ss, s, ':')) v.push_back(s);
      return v;
    }();
    if (parts.size() != 3) {
      throw Error(Errc::InvalidErrorModel, "--stratum-error expects LABEL:SE:SP, got '" + entry + "'");
    }
    try {
      err.stratum_overrides[parts[0]] = {std::stod(parts[1]), std::stod(parts[2])};
    } catch (const std::exception&) {
      throw Error(Errc::InvalidErrorModel, "--stratum-error has a non-numeric rate in '" + entry + "'");
    }
  }
  err.validate();
  return err;
}

const FitResult& mle_fit(FitContext& ctx, const std::string& method) {
  if (ctx.mle) return *ctx.mle;
  if (ctx.mle_error) throw *ctx.mle_error;
  try {
    const OutcomeErrorModel err = error_model(ctx.args, method);
    const bool stratified = ctx.cohort.strata().size() > 1;
    const bool npv = err.eta < 1.0;
    const LikelihoodMode mode = stratified ? (npv ? LikelihoodMode::StratifiedNpv : LikelihoodMode::Stratified)
                                           : (npv ? LikelihoodMode::NpvAdjusted : LikelihoodMode::Standard);
    const LikelihoodSpec spec = make_likelihood_spec(ctx.cohort, err, mode);
    CoefficientVector start{Eigen::VectorXd::Zero(ctx.cohort.p()), Eigen::VectorXd::Zero(ctx.cohort.q())};
    try {
      const GlmFit& g = naive_fit(ctx);
      if (g.converged) start = g.beta;
    } catch (const Error&) {
    }
    OptimizerOptions opt;
    opt.tol_g = ctx.args.tol_g;
    opt.max_iter = ctx.args.max_iter;
    opt.history = ctx.args.history;
    opt.fd_step = ctx.args.fd_step;
    ctx.mle = fit(spec, start, opt);
    return *ctx.mle;
  } catch (const Error& e) {
    ctx.mle_error = e;
    throw;
  }
}

MethodReport mle_report(const std::string& name, const FitResult& f) {
  MethodReport r;
  r.method = name;
  r.beta = f.beta_hat;
  r.covariance = f.beta_covariance;
  r.survival = f.survival_hat;
  r.converged = f.converged;
  r.iterations = f.iterations;
  r.loglik = f.loglik;
  r.warnings = f.warnings;
  r.message = f.message;
  return r;
}

const CorrectionMatrix& correction(FitContext& ctx) {
  if (!ctx.corr) {
    if (!ctx.args.calibration.empty()) {
      ctx.calib = read_calibration(ctx.args.calibration);
      if (ctx.calib->p() != ctx.cohort.p() || ctx.calib->q() != ctx.cohort.q()) {
        throw Error(Errc::DimensionMismatch, "calibration file has p=" + std::to_string(ctx.calib->p()) +
                                                 ", q=" + std::to_string(ctx.calib->q()) +
                                                 " but the data have p=" + std::to_string(ctx.cohort.p()) +
                                                 ", q=" + std::to_string(ctx.cohort.q()));
      }
    } else {
      ctx.calib = fit_calibration(ctx.cohort);
    }
    ctx.corr = build_correction(*ctx.calib);
  }
  return *ctx.corr;
}

MethodReport corrected_report(FitContext& ctx, MethodReport base) {
  const CorrectionMatrix& corr = correction(ctx);
  MethodReport r = std::move(base);
  const CoefficientVector star = r.beta;
  r.beta = correct_beta(star, corr);
  if (r.covariance) r.covariance = corrected_covariance(star, *r.covariance, corr, *ctx.calib);
  return r;
}

MethodReport run_method(FitContext& ctx, const std::string& method) {
  if (method == "naive" || method == "true") {
    MethodReport r = glm_report(method, method == "naive" ? naive_fit(ctx) : run_glm(ctx.cohort));
    if (!r.converged) r.error = Errc::MaxIterationsExceeded;
    return r;
  }
  if (method == "covariate_only") {
    MethodReport r = corrected_report(ctx, glm_report(method, naive_fit(ctx)));
    if (!r.converged) r.error = Errc::MaxIterationsExceeded;
    return r;
  }
  if (method == "outcome_only" || method == "proposed") {
    MethodReport r = mle_report(method, mle_fit(ctx, method));
    if (method == "proposed") r = corrected_report(ctx, std::move(r));
    if (!r.converged) {
      r.error = Errc::MaxIterationsExceeded;
    } else if (!r.covariance) {
      r.error = Errc::SingularHessian;
    }
    return r;
  }
  throw Error(Errc::Config, "unknown method '" + method +
                                "'; choose from naive, true, covariate_only, outcome_only, proposed");
}

std::vector<std::string> coefficient_names(const LoadedData& d) {
  std::vector<std::string> names = d.columns.x_star;
  names.insert(names.end(), d.columns.z.begin(), d.columns.z.end());
  return names;
}

json report_json(const FitArgs& a, const Cohort& cohort, const std::vector<std::string>& names,
                 const std::vector<MethodReport>& reports) {
  json j;
  j["input"] = a.data.input;
  j["subjects"] = cohort.size();
  j["follow_up_mode"] = std::string(to_string(cohort.mode()));
  j["grid"] = cohort.grid().taus();
  j["increment"] = a.increment;
  j["strata"] = cohort.strata();
  json methods = json::array();
  const Eigen::Index p = cohort.p();
  for (const auto& r : reports) {
    json m;
    m["method"] = r.method;
    if (r.error && r.beta.beta_x.size() == 0) {
      m["error"] = std::string(to_string(*r.error));
      m["message"] = r.message;
      methods.push_back(std::move(m));
      continue;
    }
    if (r.error) m["error"] = std::string(to_string(*r.error));
    m["converged"] = r.converged;
    m["iterations"] = r.iterations;
    m["message"] = r.message;
    if (r.loglik) m["loglik"] = *r.loglik;
    m["warnings"] = r.warnings;
    const Eigen::VectorXd b = r.beta.joined();
    json coefs = json::array();
    for (Eigen::Index k = 0; k < b.size(); ++k) {
      json c;
      c["name"] = k < static_cast<Eigen::Index>(names.size()) ? names[static_cast<std::size_t>(k)]
                                                             : "beta_" + std::to_string(k + 1);
      c["beta"] = b(k);
      const double inc = k < p ? a.increment : 1.0;
      c["hazard_ratio"] = std::exp(inc * b(k));
      if (r.covariance) {
        const double se = std::sqrt(std::max(0.0, (*r.covariance)(k, k)));
        const double lo = std::exp(inc * (b(k) - kWaldZ * se));
        const double hi = std::exp(inc * (b(k) + kWaldZ * se));
        c["se"] = se;
        c["ci_lower"] = std::min(lo, hi);
        c["ci_upper"] = std::max(lo, hi);
      } else {
        c["se"] = nullptr;
      }
      coefs.push_back(std::move(c));
    }
    m["coefficients"] = std::move(coefs);
    json surv = json::array();
    for (std::size_t s = 0; s < r.survival.size(); ++s) {
      const auto& v = r.survival[s].s;
      surv.push_back({{"stratum", s < cohort.strata().size() ? cohort.strata()[s] : std::to_string(s)},
                      {"s", std::vector<double>(v.data(), v.data() + v.size())}});
    }
    m["survival"] = std::move(surv);
    methods.push_back(std::move(m));
  }
  j["methods"] = std::move(methods);
  return j;
}

void print_table(std::ostream& out, const json& report) {
  out << "method          parameter        beta        se      HR   95% CI\n";
  for (const auto& m : report["methods"]) {
    const std::string method = m["method"].get<std::string>();
    if (!m.contains("coefficients")) {
      out << std::left << std::setw(16) << method << "failed: " << m.value("message", std::string()) << '\n';
      continue;
    }
    for (const auto& c : m["coefficients"]) {
      out << std::left << std::setw(16) << method << std::setw(14) << c["name"].get<std::string>() << std::right
          << std::setw(10) << fixed(c["beta"].get<double>()) << std::setw(10)
          << (c["se"].is_null() ? std::string("NA") : fixed(c["se"].get<double>())) << std::setw(8)
          << fixed(c["hazard_ratio"].get<double>(), 3);
      if (c.contains("ci_lower")) {
        out << "   (" << fixed(c["ci_lower"].get<double>(), 3) << ", " << fixed(c["ci_upper"].get<double>(), 3)
            << ")";
      }
      out << '\n';
    }
    for (const auto& s : m["survival"]) {
      out << "  " << method << " survival [" << s["stratum"].get<std::string>() << "]:";
      for (double v : s["s"]) out << ' ' << fixed(v);
      out << '\n';
    }
    out << "  " << method << ": " << m["message"].get<std::string>() << ", " << m["iterations"].get<int>()
        << " iterations";
    if (m.contains("loglik")) out << ", loglik " << fixed(m["loglik"].get<double>(), 6);
    out << '\n';
    for (const auto& w : m["warnings"]) out << "  warning: " << w.get<std::string>() << '\n';
  }
}

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
  const std::vector<std::string> methods = split_list(a.methods);
  if (methods.empty()) throw Error(Errc::Config, "--method needs at least one method");
  const bool needs_calib = std::any_of(methods.begin(), methods.end(), [](const std::string& m) {
    return m == "covariate_only" || m == "proposed";
  });

  LoadedData data = load_table(a.data);
  if (needs_calib && a.calibration.empty()) require_reference_columns(data);
  for (const auto& m : methods) {
    if ((m == "outcome_only" || m == "proposed") && (!a.se || !a.sp)) {
      throw Error(Errc::InvalidErrorModel, "method '" + m + "' needs --se and --sp");
    }
  }
  if (a.se || a.sp) {
    OutcomeErrorModel given{a.se.value_or(1.0), a.sp.value_or(1.0), a.eta, {}};
    given.validate();
  }
  if (!a.calibration.empty()) data.columns.subset.clear();
  const Cohort cohort = ingest(data, a.data);

  FitContext ctx{a, cohort, data, {}, {}, {}, {}, {}, {}};
  std::vector<MethodReport> reports;
  int code = kOk;
  for (const auto& m : methods) {
    try {
      reports.push_back(run_method(ctx, m));
      if (reports.back().error && code == kOk) code = exit_code_for(*reports.back().error);
    } catch (const Error& e) {
      if (e.code() == Errc::Config || e.code() == Errc::Io) throw;
      MethodReport r;
      r.method = m;
      r.error = e.code();
      r.message = e.what();
      reports.push_back(std::move(r));
      err << "epsurv: " << m << ": " << e.what() << '\n';
      if (code == kOk) code = exit_code_for(e.code());
    }
  }

  const json report = report_json(a, cohort, coefficient_names(data), reports);
  if (!a.out.empty()) write_text(a.out, report.dump(2) + "\n");
  print_table(out, report);
  return code;
}

// ---------------------------------------------------------------------------
// calibrate

struct CalibrateArgs {
  DataArgs data;
  std::string out;
};

int cmd_calibrate(const CalibrateArgs& a, std::ostream& out) {
  LoadedData data = load_table(a.data);
  require_reference_columns(data);
  const Cohort cohort = ingest(data, a.data);
  const CalibrationModel calib = fit_calibration(cohort);
  build_correction(calib);
  if (!a.out.empty()) write_calibration(calib, a.out);
  out << "calibration subset: " << calib.n_c << " subjects, p = " << calib.p() << ", q = " << calib.q() << '\n';
  for (Eigen::Index r = 0; r < calib.p(); ++r) {
    out << data.columns.x_star[static_cast<std::size_t>(r)] << ": intercept " << fixed(calib.delta0(r));
    for (Eigen::Index c = 0; c < calib.p(); ++c) {
      out << ", " << data.columns.x_star[static_cast<std::size_t>(c)] << ' ' << fixed(calib.delta1(r, c));
    }
    for (Eigen::Index c = 0; c < calib.q(); ++c) {
      out << ", " << data.columns.z[static_cast<std::size_t>(c)] << ' ' << fixed(calib.delta2(r, c));
    }
    out << '\n';
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// simulate / generate

struct ScenarioArgs {
  std::string preset;
  std::string scenario;
  std::optional<std::size_t> replications;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

void add_scenario_options(CLI::App* cmd, ScenarioArgs& a) {
  auto* p = cmd->add_option("--preset", a.preset, "Named scenario (see 'presets')");
  auto* s = cmd->add_option("--scenario", a.scenario, "Scenario JSON file");
  p->excludes(s);
  cmd->add_option("--replications", a.replications, "Number of replications");
  cmd->add_option("--seed", a.seed, "Base random seed");
  cmd->add_option("--threads", a.threads, "Worker threads");
}

ScenarioConfig resolve_scenario(const ScenarioArgs& a) {
  if (a.preset.empty() && a.scenario.empty()) throw Error(Errc::Config, "pass --preset NAME or --scenario FILE");
  ScenarioConfig cfg;
  if (!a.preset.empty()) {
    cfg = preset(a.preset);
  } else {
    std::ifstream in(a.scenario);
    if (!in) throw Error(Errc::Io, "cannot open '" + a.scenario + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    ScenarioConfig base;
    try {
      const json j = json::parse(text);
      if (j.is_object() && j.contains("preset")) {
        if (!j["preset"].is_string()) throw Error(Errc::Config, "scenario field 'preset' must be a string");
        base = preset(j["preset"].get<std::string>());
      }
    } catch (const json::parse_error&) {
    }
    cfg = scenario_from_json(text, base);
  }
  if (a.replications) {
    if (*a.replications == 0) throw Error(Errc::Config, "--replications must be at least 1");
    cfg.replications = *a.replications;
  }
  if (a.seed) cfg.rng_seed = *a.seed;
  if (a.threads) cfg.threads = std::max<std::size_t>(1, *a.threads);
  cfg.validate();
  return cfg;
}

struct SimulateArgs {
  ScenarioArgs scenario;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  const ScenarioConfig cfg = resolve_scenario(a.scenario);
  const ScenarioResult res = run_scenario(cfg);
  const std::string csv = metrics_to_csv(res);
  if (!a.out.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(a.out, ec);
    if (ec) throw Error(Errc::Io, "cannot create directory '" + a.out + "': " + ec.message());
    write_text((std::filesystem::path(a.out) / "metrics.csv").string(), csv);
    write_text((std::filesystem::path(a.out) / "manifest.json").string(), manifest_to_json(res) + "\n");
  }
  out << csv;
  for (const auto& [est, table] : res.metrics) {
    if (table.failures > 0) {
      err << "epsurv: " << to_string(est) << " failed in " << table.failures << " of " << cfg.replications
          << " replications\n";
    }
  }
  return kOk;
}

struct GenerateArgs {
  ScenarioArgs scenario;
  std::size_t rep = 0;
  std::string out;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  const ScenarioConfig cfg = resolve_scenario(a.scenario);
  const GeneratedCohort gen = generate_cohort(cfg, a.rep);
  ColumnMap cols;
  cols.x_star = {"x_1_star"};
  cols.x_star_star = {"x_1_starstar"};
  for (Eigen::Index k = 0; k < gen.cohort.q(); ++k) cols.z.push_back("z_" + std::to_string(k + 1));
  if (cfg.n_strata() > 1) cols.stratum = "stratum";
  const LongTable table = to_long(gen.cohort, cols);
  if (a.out.empty()) {
    write_long_csv(table, out);
  } else {
    std::ofstream f(a.out);
    if (!f) throw Error(Errc::Io, "cannot write '" + a.out + "'");
    write_long_csv(table, f);
    if (!f) throw Error(Errc::Io, "failed writing '" + a.out + "'");
  }
  return kOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Discrete-time proportional hazards with misclassified outcomes and mismeasured covariates"};
  app.name("epsurv");
  app.require_subcommand(1);

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "Fit one or more estimators to a long-format data set");
  add_data_options(fit_cmd, fit_args.data);
  fit_cmd->add_option("--method", fit_args.methods,
                      "Comma-separated methods: naive, true, covariate_only, outcome_only, proposed");
  fit_cmd->add_option("--se", fit_args.se, "Sensitivity of the error-prone outcome");
  fit_cmd->add_option("--sp", fit_args.sp, "Specificity of the error-prone outcome");
  fit_cmd->add_option("--eta", fit_args.eta, "Baseline negative predictive value");
  fit_cmd->add_option("--stratum-error", fit_args.stratum_error, "Per-stratum rates as LABEL:SE:SP");
  fit_cmd->add_option("--calibration", fit_args.calibration, "Calibration JSON from 'calibrate'");
  fit_cmd->add_option("--increment", fit_args.increment, "Exposure increment for hazard ratios");
  fit_cmd->add_option("--tol-g", fit_args.tol_g, "Projected-gradient tolerance");
  fit_cmd->add_option("--max-iter", fit_args.max_iter, "Optimizer iteration limit");
  fit_cmd->add_option("--history", fit_args.history, "L-BFGS history size");
  fit_cmd->add_option("--fd-step", fit_args.fd_step, "Relative step of the finite-difference Hessian");
  fit_cmd->add_option("--threads", fit_args.threads, "Worker threads (fits run on one)");
  fit_cmd->add_option("--seed", fit_args.seed, "Accepted for uniformity; fits are deterministic");
  fit_cmd->add_option("--out", fit_args.out, "Write the JSON report here");

  CalibrateArgs cal_args;
  auto* cal_cmd = app.add_subcommand("calibrate", "Fit the calibration regression on the subset");
  add_data_options(cal_cmd, cal_args.data);
  cal_cmd->add_option("--out", cal_args.out, "Write the calibration JSON here");

  SimulateArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "Run a Monte Carlo scenario");
  add_scenario_options(sim_cmd, sim_args.scenario);
  sim_cmd->add_option("--out", sim_args.out, "Directory for metrics.csv and manifest.json");

  GenerateArgs gen_args;
  auto* gen_cmd = app.add_subcommand("generate", "Write one simulated cohort in long format");
  add_scenario_options(gen_cmd, gen_args.scenario);
  gen_cmd->add_option("--rep", gen_args.rep, "Replication index");
  gen_cmd->add_option("--out", gen_args.out, "Output CSV (stdout when omitted)");

  std::string show;
  auto* presets_cmd = app.add_subcommand("presets", "List named scenarios");
  presets_cmd->add_option("--show", show, "Print one preset as JSON");

  DataArgs sum_args;
  auto* sum_cmd = app.add_subcommand("summary", "Describe a long-format data set");
  add_data_options(sum_cmd, sum_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    if (*fit_cmd) return cmd_fit(fit_args, out, err);
    if (*cal_cmd) return cmd_calibrate(cal_args, out);
    if (*sim_cmd) return cmd_simulate(sim_args, out, err);
    if (*gen_cmd) return cmd_generate(gen_args, out);
    if (*presets_cmd) {
      if (!show.empty()) {
        out << scenario_to_json(preset(show)) << '\n';
      } else {
        for (const auto& name : preset_names()) out << name << '\n';
      }
      return kOk;
    }
    if (*sum_cmd) {
      const LoadedData data = load_table(sum_args);
      const Cohort cohort = ingest(data, sum_args);
      out << to_text(summarize(cohort));
      for (const auto& d : validate_cohort(cohort)) {
        out << "diagnostic: " << (d.subject_id.empty() ? "" : d.subject_id + ": ") << d.reason << '\n';
      }
      return kOk;
    }
  } catch (const Error& e) {
    err << "epsurv: " << to_string(e.code()) << ": " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "epsurv: " << e.what() << '\n';
    return kValidation;
  }
  return kValidation;
}

}  // namespace epsurv::cli
