#ifndef EPSURV_DATA_MODEL_HPP
#define EPSURV_DATA_MODEL_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace epsurv {

/// Distinct visit times tau_1 < ... < tau_J. tau_0 = 0 and tau_{J+1} = inf are
/// implicit, so a grid of size J defines J + 1 disjoint intervals.
class TimeGrid {
 public:
  TimeGrid() = default;
  explicit TimeGrid(std::vector<double> taus);

  std::size_t size() const { return taus_.size(); }
  std::size_t n_intervals() const { return taus_.size() + 1; }
  double operator[](std::size_t k) const { return taus_[k]; }
  const std::vector<double>& taus() const { return taus_; }

  /// Zero-based position of an exact grid match.
  std::optional<std::size_t> index_of(double t) const;

  bool operator==(const TimeGrid&) const = default;

 private:
  std::vector<double> taus_;
};

enum class FollowUpMode { FullSchedule, StopAfterFirstPositive };

std::string_view to_string(FollowUpMode mode);
FollowUpMode parse_follow_up_mode(std::string_view text);

struct SubjectRecord {
  std::string id;
  std::vector<int> y;     // error-prone results, 1 = positive
  std::vector<double> t;  // visit times, each on the grid
  Eigen::VectorXd x_star;
  Eigen::VectorXd z;
  std::string stratum;
  bool in_calibration_subset = false;
  std::optional<Eigen::VectorXd> x_double_star;

  std::size_t n_visits() const { return y.size(); }
  bool any_positive() const;

  bool operator==(const SubjectRecord& other) const;
};

/// A cohort is immutable once built. Invariant checking is left to
/// validate_cohort so that invalid cohorts can still be inspected.
class Cohort {
 public:
  Cohort(TimeGrid grid, std::vector<SubjectRecord> subjects, FollowUpMode mode);

  const TimeGrid& grid() const { return grid_; }
  const std::vector<SubjectRecord>& subjects() const { return subjects_; }
  const SubjectRecord& operator[](std::size_t i) const { return subjects_[i]; }
  FollowUpMode mode() const { return mode_; }

  std::size_t size() const { return subjects_.size(); }
  Eigen::Index p() const { return p_; }
  Eigen::Index q() const { return q_; }
  Eigen::Index w() const { return p_ + q_; }

  /// Sorted distinct stratum labels.
  const std::vector<std::string>& strata() const { return strata_; }
  int stratum_index(std::size_t subject) const { return stratum_index_[subject]; }

  /// N x (p+q) matrix with columns x* then z.
  Eigen::MatrixXd design() const;

  bool operator==(const Cohort& other) const;

 private:
  TimeGrid grid_;
  std::vector<SubjectRecord> subjects_;
  FollowUpMode mode_;
  Eigen::Index p_ = 0;
  Eigen::Index q_ = 0;
  std::vector<std::string> strata_;
  std::vector<int> stratum_index_;
};

/// Known misclassification rates of the error-prone outcome.
struct OutcomeErrorModel {
  double se = 1.0;
  double sp = 1.0;
  double eta = 1.0;  // baseline negative predictive value
  std::map<std::string, std::pair<double, double>> stratum_overrides;  // label -> (se, sp)

  std::pair<double, double> rates_for(const std::string& stratum) const;
  /// Throws InvalidErrorModel when any rate is outside (0, 1] or se + sp <= 1.
  void validate() const;
};

struct CoefficientVector {
  Eigen::VectorXd beta_x;
  Eigen::VectorXd beta_z;

  Eigen::VectorXd joined() const;
  static CoefficientVector split(const Eigen::VectorXd& beta, Eigen::Index p);
};

/// Baseline survival (S_1, ..., S_{J+1}). S_1 = 1 unless s1_free.
struct SurvivalCurve {
  Eigen::VectorXd s;
  bool s1_free = false;

  /// Interval masses theta_j = S_j - S_{j+1}, with S_{J+2} = 0.
  Eigen::VectorXd theta() const;
  bool is_valid() const;
};

// ---------------------------------------------------------------------------
// Long-format ingestion

struct LongTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column position or -1.
  int column(std::string_view name) const;
};

LongTable parse_long_csv(std::istream& in);
LongTable read_long_csv(const std::string& path);
void write_long_csv(const LongTable& table, std::ostream& out);

bool is_missing(std::string_view field);

struct ColumnMap {
  std::string id = "ID";
  std::string subset = "subset_ind";
  std::string y = "y";
  std::string t = "t";
  std::vector<std::string> x_star;
  std::vector<std::string> x_star_star;
  std::vector<std::string> z;
  std::string stratum;  // empty: single stratum

  /// Picks up x_<k>_star, x_<k>_starstar and z_<k> columns in index order.
  static ColumnMap detect(const LongTable& table);
};

struct IngestOptions {
  std::optional<FollowUpMode> mode;  // empty: detect from the data
};

Cohort ingest_long(const LongTable& table, const ColumnMap& columns,
                   const IngestOptions& options = {});

/// Inverse of ingest_long; baseline covariates are repeated on every row.
LongTable to_long(const Cohort& cohort, const ColumnMap& columns);

/// Rounds visit times onto the first earlier distinct time within tol.
/// Returns the number of rows whose time changed.
std::size_t snap_to_grid(LongTable& table, const std::string& t_column, double tol);

struct Diagnostic {
  std::string subject_id;
  std::string reason;
};

std::vector<Diagnostic> validate_cohort(const Cohort& cohort);

/// Drops every visit after the first positive result.
Cohort truncate_after_first_positive(const Cohort& cohort);

struct CohortSummary {
  std::size_t subjects = 0;
  std::size_t visits = 0;
  std::vector<double> grid;
  std::size_t event_positive = 0;
  std::size_t calibration_subset = 0;
  std::size_t strata = 0;
  FollowUpMode mode = FollowUpMode::FullSchedule;
};

CohortSummary summarize(const Cohort& cohort);
std::string to_text(const CohortSummary& summary);

}  // namespace epsurv

#endif  // EPSURV_DATA_MODEL_HPP
