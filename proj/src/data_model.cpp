#include "epsurv/data_model.hpp"

#include "epsurv/errors.hpp"

#include <boost/tokenizer.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <regex>
#include <set>
#include <sstream>
#include <unordered_map>

namespace epsurv {

// ---------------------------------------------------------------------------
// TimeGrid

TimeGrid::TimeGrid(std::vector<double> taus) : taus_(std::move(taus)) {
  if (taus_.empty()) {
    throw Error(Errc::EmptyCohort, "time grid needs at least one visit time");
  }
  for (std::size_t k = 0; k < taus_.size(); ++k) {
    if (!std::isfinite(taus_[k]) || taus_[k] <= 0.0) {
      throw Error(Errc::MalformedInput, "visit times must be finite and positive");
    }
    if (k > 0 && taus_[k] <= taus_[k - 1]) {
      throw Error(Errc::NonmonotoneVisits, "time grid must be strictly increasing");
    }
  }
}

std::optional<std::size_t> TimeGrid::index_of(double t) const {
  auto it = std::lower_bound(taus_.begin(), taus_.end(), t);
  if (it == taus_.end() || *it != t) return std::nullopt;
  return static_cast<std::size_t>(it - taus_.begin());
}

std::string_view to_string(FollowUpMode mode) {
  return mode == FollowUpMode::FullSchedule ? "full" : "stop";
}

FollowUpMode parse_follow_up_mode(std::string_view text) {
  if (text == "full" || text == "FullSchedule") return FollowUpMode::FullSchedule;
  if (text == "stop" || text == "StopAfterFirstPositive") {
    return FollowUpMode::StopAfterFirstPositive;
  }
  throw Error(Errc::Config, "unknown follow-up mode '" + std::string(text) +
                                "' (expected full or stop)");
}

// ---------------------------------------------------------------------------
// SubjectRecord / Cohort

bool SubjectRecord::any_positive() const {
  return std::find(y.begin(), y.end(), 1) != y.end();
}

namespace {

bool same_vector(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() == b.size() && (a.array() == b.array()).all();
}

}  // namespace

bool SubjectRecord::operator==(const SubjectRecord& other) const {
  if (x_double_star.has_value() != other.x_double_star.has_value()) return false;
  if (x_double_star && !same_vector(*x_double_star, *other.x_double_star)) return false;
  return id == other.id && y == other.y && t == other.t &&
         same_vector(x_star, other.x_star) && same_vector(z, other.z) &&
         stratum == other.stratum && in_calibration_subset == other.in_calibration_subset;
}

Cohort::Cohort(TimeGrid grid, std::vector<SubjectRecord> subjects, FollowUpMode mode)
    : grid_(std::move(grid)), subjects_(std::move(subjects)), mode_(mode) {
  if (!subjects_.empty()) {
    p_ = subjects_.front().x_star.size();
    q_ = subjects_.front().z.size();
  }
  std::set<std::string> labels;
  for (const auto& s : subjects_) {
    if (s.x_star.size() != p_ || s.z.size() != q_) {
      throw Error(Errc::DimensionMismatch, "subject " + s.id + " has inconsistent covariate count");
    }
    labels.insert(s.stratum);
  }
  strata_.assign(labels.begin(), labels.end());
  stratum_index_.reserve(subjects_.size());
  for (const auto& s : subjects_) {
    auto it = std::lower_bound(strata_.begin(), strata_.end(), s.stratum);
    stratum_index_.push_back(static_cast<int>(it - strata_.begin()));
  }
}

Eigen::MatrixXd Cohort::design() const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(size()), w());
  for (std::size_t i = 0; i < size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    x.row(row).head(p_) = subjects_[i].x_star.transpose();
    x.row(row).tail(q_) = subjects_[i].z.transpose();
  }
  return x;
}

bool Cohort::operator==(const Cohort& other) const {
  return grid_ == other.grid_ && mode_ == other.mode_ && subjects_ == other.subjects_;
}

// ---------------------------------------------------------------------------
// Error model, coefficients, survival

std::pair<double, double> OutcomeErrorModel::rates_for(const std::string& stratum) const {
  auto it = stratum_overrides.find(stratum);
  if (it != stratum_overrides.end()) return it->second;
  return {se, sp};
}

void OutcomeErrorModel::validate() const {
  auto check = [](double se_v, double sp_v, const std::string& where) {
    if (!(se_v > 0.0 && se_v <= 1.0) || !(sp_v > 0.0 && sp_v <= 1.0)) {
      throw Error(Errc::InvalidErrorModel, "sensitivity and specificity must lie in (0, 1]" + where);
    }
    if (se_v + sp_v <= 1.0) {
      throw Error(Errc::InvalidErrorModel, "uninformative test: se + sp <= 1" + where);
    }
  };
  check(se, sp, "");
  for (const auto& [label, rates] : stratum_overrides) {
    check(rates.first, rates.second, " (stratum " + label + ")");
  }
  if (!(eta > 0.0 && eta <= 1.0)) {
    throw Error(Errc::InvalidErrorModel, "negative predictive value must lie in (0, 1]");
  }
}

Eigen::VectorXd CoefficientVector::joined() const {
  Eigen::VectorXd out(beta_x.size() + beta_z.size());
  out << beta_x, beta_z;
  return out;
}

CoefficientVector CoefficientVector::split(const Eigen::VectorXd& beta, Eigen::Index p) {
  return {beta.head(p), beta.tail(beta.size() - p)};
}

Eigen::VectorXd SurvivalCurve::theta() const {
  const Eigen::Index n = s.size();
  Eigen::VectorXd th(n);
  for (Eigen::Index j = 0; j + 1 < n; ++j) th(j) = s(j) - s(j + 1);
  th(n - 1) = s(n - 1);
  return th;
}

bool SurvivalCurve::is_valid() const {
  if (s.size() < 2) return false;
  if (!(s(0) <= 1.0 && s(0) > 0.0)) return false;
  if (!s1_free && s(0) != 1.0) return false;
  for (Eigen::Index j = 1; j < s.size(); ++j) {
    if (!(s(j) < s(j - 1)) || !(s(j) > 0.0)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Delimited text

int LongTable::column(std::string_view name) const {
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (header[k] == name) return static_cast<int>(k);
  }
  return -1;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  using Sep = boost::escaped_list_separator<char>;
  boost::tokenizer<Sep> tok(line, Sep('\\', ',', '"'));
  std::vector<std::string> out;
  for (const auto& field : tok) {
    std::string f = field;
    // trim surrounding blanks
    auto b = f.find_first_not_of(" \t");
    auto e = f.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? std::string() : f.substr(b, e - b + 1));
  }
  return out;
}

double parse_number(std::string_view field, const std::string& what) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw Error(Errc::MalformedInput, "cannot parse '" + std::string(field) + "' as a number (" + what + ")");
  }
  return v;
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

LongTable parse_long_csv(std::istream& in) {
  LongTable table;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto fields = split_csv_line(line);
    if (!have_header) {
      if (!fields.empty() && fields[0].rfind("\xEF\xBB\xBF", 0) == 0) fields[0].erase(0, 3);
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw Error(Errc::MalformedInput,
                  "row " + std::to_string(table.rows.size() + 1) + " has " +
                      std::to_string(fields.size()) + " fields, header has " +
                      std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  if (!have_header) throw Error(Errc::EmptyCohort, "input has no header row");
  return table;
}

LongTable read_long_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open '" + path + "' for reading");
  return parse_long_csv(in);
}

void write_long_csv(const LongTable& table, std::ostream& out) {
  auto write_row = [&out](const std::vector<std::string>& row) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) out << ',';
      if (row[k].find_first_of(",\"") != std::string::npos) {
        out << '"';
        for (char c : row[k]) out << (c == '"' ? "\\\"" : std::string(1, c));
        out << '"';
      } else {
        out << row[k];
      }
    }
    out << '\n';
  };
  write_row(table.header);
  for (const auto& row : table.rows) write_row(row);
}

bool is_missing(std::string_view field) { return field.empty() || field == "NA"; }

ColumnMap ColumnMap::detect(const LongTable& table) {
  ColumnMap map;
  static const std::regex x_star_re(R"(x_(\d+)_star)");
  static const std::regex x_ss_re(R"(x_(\d+)_starstar)");
  static const std::regex z_re(R"(z_(\d+))");
  std::vector<std::pair<int, std::string>> xs, xss, zs;
  std::smatch m;
  for (const auto& name : table.header) {
    if (std::regex_match(name, m, x_ss_re)) {
      xss.emplace_back(std::stoi(m[1]), name);
    } else if (std::regex_match(name, m, x_star_re)) {
      xs.emplace_back(std::stoi(m[1]), name);
    } else if (std::regex_match(name, m, z_re)) {
      zs.emplace_back(std::stoi(m[1]), name);
    }
  }
  auto names = [](std::vector<std::pair<int, std::string>> v) {
    std::sort(v.begin(), v.end());
    std::vector<std::string> out;
    for (auto& e : v) out.push_back(std::move(e.second));
    return out;
  };
  map.x_star = names(xs);
  map.x_star_star = names(xss);
  map.z = names(zs);
  if (table.column("stratum") >= 0) map.stratum = "stratum";
  return map;
}

namespace {

struct ResolvedColumns {
  int id, subset, y, t, stratum;
  std::vector<int> x_star, x_star_star, z;
};

int require_column(const LongTable& table, const std::string& name) {
  const int c = table.column(name);
  if (c < 0) throw Error(Errc::MalformedInput, "missing column '" + name + "'");
  return c;
}

ResolvedColumns resolve(const LongTable& table, const ColumnMap& columns) {
  ResolvedColumns r{};
  r.id = require_column(table, columns.id);
  r.y = require_column(table, columns.y);
  r.t = require_column(table, columns.t);
  r.subset = columns.subset.empty() ? -1 : table.column(columns.subset);
  r.stratum = columns.stratum.empty() ? -1 : require_column(table, columns.stratum);
  if (columns.x_star.empty()) {
    throw Error(Errc::MalformedInput, "no error-prone covariate columns (x_<k>_star)");
  }
  for (const auto& n : columns.x_star) r.x_star.push_back(require_column(table, n));
  for (const auto& n : columns.z) r.z.push_back(require_column(table, n));
  for (const auto& n : columns.x_star_star) r.x_star_star.push_back(require_column(table, n));
  if (!r.x_star_star.empty() && r.x_star_star.size() != r.x_star.size()) {
    throw Error(Errc::DimensionMismatch, "need one x** column per x* column");
  }
  return r;
}

bool compatible_with_stop(const SubjectRecord& s) {
  for (std::size_t l = 0; l + 1 < s.y.size(); ++l) {
    if (s.y[l] == 1) return false;
  }
  return true;
}

}  // namespace

Cohort ingest_long(const LongTable& table, const ColumnMap& columns, const IngestOptions& options) {
  if (table.rows.empty()) throw Error(Errc::EmptyCohort, "input has no data rows");
  const ResolvedColumns rc = resolve(table, columns);
  const auto p = static_cast<Eigen::Index>(rc.x_star.size());

  // Subjects keep the order of first appearance.
  std::vector<SubjectRecord> subjects;
  std::unordered_map<std::string, std::size_t> position;
  std::set<double> times;

  auto read_vector = [&](const std::vector<std::string>& row, const std::vector<int>& cols,
                         const std::string& id) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const auto& f = row[static_cast<std::size_t>(cols[k])];
      if (is_missing(f)) {
        throw Error(Errc::MalformedInput,
                    "missing value in column '" + table.header[static_cast<std::size_t>(cols[k])] +
                        "' for subject " + id);
      }
      v(static_cast<Eigen::Index>(k)) = parse_number(f, table.header[static_cast<std::size_t>(cols[k])]);
    }
    return v;
  };

  for (const auto& row : table.rows) {
    const std::string& id = row[static_cast<std::size_t>(rc.id)];
    if (is_missing(id)) throw Error(Errc::MalformedInput, "row with missing subject id");
    const auto& yf = row[static_cast<std::size_t>(rc.y)];
    const auto& tf = row[static_cast<std::size_t>(rc.t)];
    if (is_missing(yf) || is_missing(tf)) {
      throw Error(Errc::MalformedInput, "missing y or t for subject " + id);
    }
    const double yv = parse_number(yf, columns.y);
    if (yv != 0.0 && yv != 1.0) {
      throw Error(Errc::MalformedInput, "y must be 0 or 1 (subject " + id + ")");
    }
    const double tv = parse_number(tf, columns.t);
    if (tv <= 0.0) {
      throw Error(Errc::MalformedInput, "visit times must be positive (subject " + id + ")");
    }
    bool in_subset = false;
    if (rc.subset >= 0) {
      const auto& sf = row[static_cast<std::size_t>(rc.subset)];
      in_subset = !is_missing(sf) && parse_number(sf, columns.subset) == 1.0;
    }
    Eigen::VectorXd xs = read_vector(row, rc.x_star, id);
    Eigen::VectorXd zs = read_vector(row, rc.z, id);
    std::optional<Eigen::VectorXd> xss;
    if (in_subset) {
      if (rc.x_star_star.empty()) {
        throw Error(Errc::MissingCalibrationMeasure,
                    "subject " + id + " is in the calibration subset but no x** columns were given");
      }
      Eigen::VectorXd v(p);
      for (Eigen::Index k = 0; k < p; ++k) {
        const auto col = static_cast<std::size_t>(rc.x_star_star[static_cast<std::size_t>(k)]);
        if (is_missing(row[col])) {
          throw Error(Errc::MissingCalibrationMeasure,
                      "column '" + table.header[col] + "' is missing for calibration subject " + id);
        }
        v(k) = parse_number(row[col], table.header[col]);
      }
      xss = v;
    }
    const std::string stratum = rc.stratum >= 0 ? row[static_cast<std::size_t>(rc.stratum)] : "";

    auto [it, inserted] = position.try_emplace(id, subjects.size());
    if (inserted) {
      SubjectRecord s;
      s.id = id;
      s.x_star = std::move(xs);
      s.z = std::move(zs);
      s.stratum = stratum;
      s.in_calibration_subset = in_subset;
      s.x_double_star = std::move(xss);
      subjects.push_back(std::move(s));
    } else {
      const SubjectRecord& s = subjects[it->second];
      const bool xss_same = s.x_double_star.has_value() == xss.has_value() &&
                            (!xss || same_vector(*s.x_double_star, *xss));
      if (!same_vector(s.x_star, xs) || !same_vector(s.z, zs) || s.stratum != stratum ||
          s.in_calibration_subset != in_subset || !xss_same) {
        throw Error(Errc::CovariateDriftWithinSubject,
                    "baseline covariates vary across rows of subject " + id);
      }
    }
    SubjectRecord& s = subjects[it->second];
    if (!s.t.empty() && tv <= s.t.back()) {
      throw Error(Errc::NonmonotoneVisits, "visit times not strictly increasing for subject " + id);
    }
    s.t.push_back(tv);
    s.y.push_back(static_cast<int>(yv));
    times.insert(tv);
  }

  TimeGrid grid(std::vector<double>(times.begin(), times.end()));

  bool stop_ok = std::all_of(subjects.begin(), subjects.end(), compatible_with_stop);
  FollowUpMode mode = stop_ok ? FollowUpMode::StopAfterFirstPositive : FollowUpMode::FullSchedule;
  if (options.mode) {
    if (*options.mode == FollowUpMode::StopAfterFirstPositive && !stop_ok) {
      throw Error(Errc::ModeMismatch,
                  "stop-after-first-positive mode requested but some subject has visits after a positive");
    }
    mode = *options.mode;
  }
  return Cohort(std::move(grid), std::move(subjects), mode);
}

LongTable to_long(const Cohort& cohort, const ColumnMap& columns) {
  LongTable table;
  table.header.push_back(columns.id);
  table.header.push_back(columns.subset);
  for (const auto& n : columns.x_star) table.header.push_back(n);
  for (const auto& n : columns.x_star_star) table.header.push_back(n);
  for (const auto& n : columns.z) table.header.push_back(n);
  if (!columns.stratum.empty()) table.header.push_back(columns.stratum);
  table.header.push_back(columns.y);
  table.header.push_back(columns.t);
  if (static_cast<Eigen::Index>(columns.x_star.size()) != cohort.p() ||
      static_cast<Eigen::Index>(columns.z.size()) != cohort.q()) {
    throw Error(Errc::DimensionMismatch, "column map does not match cohort dimensions");
  }

  for (const auto& s : cohort.subjects()) {
    for (std::size_t l = 0; l < s.n_visits(); ++l) {
      std::vector<std::string> row;
      row.push_back(s.id);
      row.push_back(s.in_calibration_subset ? "1" : "0");
      for (Eigen::Index k = 0; k < s.x_star.size(); ++k) row.push_back(format_number(s.x_star(k)));
      for (std::size_t k = 0; k < columns.x_star_star.size(); ++k) {
        row.push_back(s.x_double_star ? format_number((*s.x_double_star)(static_cast<Eigen::Index>(k)))
                                      : "NA");
      }
      for (Eigen::Index k = 0; k < s.z.size(); ++k) row.push_back(format_number(s.z(k)));
      if (!columns.stratum.empty()) row.push_back(s.stratum);
      row.push_back(std::to_string(s.y[l]));
      row.push_back(format_number(s.t[l]));
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

std::size_t snap_to_grid(LongTable& table, const std::string& t_column, double tol) {
  const int c = table.column(t_column);
  if (c < 0) throw Error(Errc::MalformedInput, "missing column '" + t_column + "'");
  const auto col = static_cast<std::size_t>(c);
  std::set<double> raw;
  for (const auto& row : table.rows) {
    if (!is_missing(row[col])) raw.insert(parse_number(row[col], t_column));
  }
  // Greedy clustering: a time within tol of the current anchor joins it.
  std::vector<double> anchors;
  for (double t : raw) {
    if (anchors.empty() || t - anchors.back() > tol) anchors.push_back(t);
  }
  std::size_t changed = 0;
  for (auto& row : table.rows) {
    if (is_missing(row[col])) continue;
    const double t = parse_number(row[col], t_column);
    auto it = std::upper_bound(anchors.begin(), anchors.end(), t);
    const double anchor = *std::prev(it);
    if (anchor != t) {
      row[col] = format_number(anchor);
      ++changed;
    }
  }
  return changed;
}

std::vector<Diagnostic> validate_cohort(const Cohort& cohort) {
  std::vector<Diagnostic> out;
  const TimeGrid& grid = cohort.grid();
  if (cohort.size() == 0) out.push_back({"", "cohort has no subjects"});
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!(grid[k] > 0.0) || (k > 0 && grid[k] <= grid[k - 1])) {
      out.push_back({"", "time grid is not strictly increasing and positive"});
      break;
    }
  }
  for (const auto& s : cohort.subjects()) {
    if (s.y.size() != s.t.size()) {
      out.push_back({s.id, "outcome and visit-time vectors differ in length"});
      continue;
    }
    if (s.y.empty()) out.push_back({s.id, "subject has no visits"});
    for (std::size_t l = 0; l < s.t.size(); ++l) {
      if (l > 0 && s.t[l] <= s.t[l - 1]) {
        out.push_back({s.id, "visit times not strictly increasing"});
        break;
      }
    }
    for (double t : s.t) {
      if (!grid.index_of(t)) {
        out.push_back({s.id, "visit time " + format_number(t) + " is not on the time grid"});
      }
    }
    for (int y : s.y) {
      if (y != 0 && y != 1) {
        out.push_back({s.id, "outcome value outside {0, 1}"});
        break;
      }
    }
    if (cohort.mode() == FollowUpMode::StopAfterFirstPositive && !compatible_with_stop(s)) {
      out.push_back({s.id, "visits continue after the first positive in stop-after-first-positive mode"});
    }
    if (s.in_calibration_subset != s.x_double_star.has_value()) {
      out.push_back({s.id, "calibration measure present iff subject is in the calibration subset"});
    }
  }
  return out;
}

Cohort truncate_after_first_positive(const Cohort& cohort) {
  std::vector<SubjectRecord> subjects = cohort.subjects();
  for (auto& s : subjects) {
    auto it = std::find(s.y.begin(), s.y.end(), 1);
    if (it != s.y.end()) {
      const auto keep = static_cast<std::size_t>(it - s.y.begin()) + 1;
      s.y.resize(keep);
      s.t.resize(keep);
    }
  }
  return Cohort(cohort.grid(), std::move(subjects), FollowUpMode::StopAfterFirstPositive);
}

CohortSummary summarize(const Cohort& cohort) {
  CohortSummary out;
  out.subjects = cohort.size();
  out.grid = cohort.grid().taus();
  out.strata = cohort.strata().size();
  out.mode = cohort.mode();
  for (const auto& s : cohort.subjects()) {
    out.visits += s.n_visits();
    if (s.any_positive()) ++out.event_positive;
    if (s.in_calibration_subset) ++out.calibration_subset;
  }
  return out;
}

std::string to_text(const CohortSummary& summary) {
  std::ostringstream os;
  os << "subjects: " << summary.subjects << '\n'
     << "visits: " << summary.visits << '\n'
     << "J: " << summary.grid.size() << '\n'
     << "grid:";
  for (double t : summary.grid) os << ' ' << t;
  os << '\n'
     << "event_positive: " << summary.event_positive << '\n'
     << "calibration_subset: " << summary.calibration_subset << '\n'
     << "strata: " << summary.strata << '\n'
     << "follow_up_mode: " << to_string(summary.mode) << '\n';
  return os.str();
}

}  // namespace epsurv
