#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "eom/report_table.hpp"

namespace eom {

/// Label used for any categorical value that is absent in the source file.
inline constexpr std::string_view kMissingLevel = "missing";

enum class Gender { male, female, missing };
enum class Marital { unmarried, married, other, missing };
enum class Sector { rural, urban, missing };
enum class EmploymentStatus { wage_salary, self_employed, other, missing };
enum class MigrationReason { job_search, confirm_job, other_work, education, forced, marriage, tied, other, none };
enum class Stream { RR, RU, UR, UU, none };
enum class Distance { intra_district, inter_district, inter_state, none };

std::string to_string(Gender v);
std::string to_string(Marital v);
std::string to_string(Sector v);
std::string to_string(EmploymentStatus v);
std::string to_string(MigrationReason v);
std::string to_string(Stream v);
std::string to_string(Distance v);

struct Household {
  std::optional<double> dependents_count;
  std::string household_type{kMissingLevel};
  std::optional<double> household_size;
  std::string land_category{kMissingLevel};
  std::optional<double> mpce;
};

/// One survey respondent. Non-workers carry an empty occ_code.
struct WorkerRecord {
  std::string person_id;
  std::optional<double> daily_wage;
  double years_edu = 0.0;
  std::string occ_code;
  std::string industry{kMissingLevel};
  std::optional<double> age;
  Gender gender = Gender::missing;
  Marital marital = Marital::missing;
  std::string social_group{kMissingLevel};
  std::string religion{kMissingLevel};
  Sector sector = Sector::missing;
  std::string state_id{kMissingLevel};
  std::string district_id{kMissingLevel};
  bool migrant = false;
  MigrationReason migration_reason = MigrationReason::none;
  Stream stream = Stream::none;
  Distance distance = Distance::none;
  std::optional<double> years_since_migration;
  std::string prior_employment{kMissingLevel};
  Household household;
  double weight = 1.0;
  EmploymentStatus employment_status = EmploymentStatus::missing;

  /// Schema-declared extra columns (instruments, regional controls) and
  /// columns derived during the analysis (Mills ratios, EOM components).
  std::map<std::string, double, std::less<>> numeric_extra;
  std::map<std::string, std::string, std::less<>> label_extra;
};

/// Checks the record invariants; returns a description of the first
/// violation or an empty string.
std::string validate_record(const WorkerRecord& r);

using FieldValue = std::variant<std::monostate, double, std::string>;
enum class FieldKind { numeric, categorical, unknown };

struct ProvenanceEntry {
  std::string operation;
  std::string detail;
};

/// Immutable collection of records plus an append-only log of how it was
/// produced. Transformations return new datasets.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<WorkerRecord> rows, std::string source,
          std::vector<std::string> numeric_extras = {}, std::vector<std::string> label_extras = {});

  std::span<const WorkerRecord> rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }
  const WorkerRecord& operator[](std::size_t i) const { return rows_[i]; }

  const std::string& source() const { return source_; }
  const std::vector<ProvenanceEntry>& provenance() const { return log_; }
  const std::vector<std::string>& numeric_extras() const { return numeric_extras_; }
  const std::vector<std::string>& label_extras() const { return label_extras_; }

  FieldKind kind(std::string_view field) const;
  bool has_field(std::string_view field) const { return kind(field) != FieldKind::unknown; }

  /// Same extras and log, new rows, one more log entry.
  Dataset derive(std::vector<WorkerRecord> rows, std::string operation, std::string detail) const;
  Dataset subset(const std::vector<std::size_t>& indices, std::string operation, std::string detail) const;

  Dataset with_numeric_column(const std::string& name, const std::vector<std::optional<double>>& values) const;
  Dataset with_label_column(const std::string& name, const std::vector<std::string>& values) const;

 private:
  std::vector<WorkerRecord> rows_;
  std::string source_;
  std::vector<ProvenanceEntry> log_;
  std::vector<std::string> numeric_extras_;
  std::vector<std::string> label_extras_;
};

/// Numeric view of a field: built-ins, the derived `log_wage`, the 0/1
/// indicators `migrant`, `is_employed`, `is_wage_salary`, and numeric extras.
std::optional<double> numeric_field(const WorkerRecord& r, std::string_view field);
/// Categorical view of a field. Missing values come back as "missing".
std::string label_field(const WorkerRecord& r, std::string_view field);
FieldValue field_value(const Dataset& ds, const WorkerRecord& r, std::string_view field);

/// Text of a field for grouping: labels as-is, numbers in shortest form,
/// several fields joined by " / ".
std::string group_label(const Dataset& ds, const WorkerRecord& r, const std::vector<std::string>& fields);

std::string provenance_json(const Dataset& ds);

// ---------------------------------------------------------------------------
// Ingestion

/// Education level label -> years of schooling.
struct Codebook {
  std::map<std::string, double, std::less<>> years;

  static Codebook indian_default();
  static Codebook from_json_file(const std::filesystem::path& path);
  std::optional<double> lookup(std::string_view label) const;
};

/// Maps record fields onto CSV header names. Fields mapped explicitly must
/// be present in the file; unmapped built-ins fall back to a header of the
/// same name and are optional, except the required ones.
struct Schema {
  std::map<std::string, std::string> columns;
  /// field name -> CSV header for extra numeric / label columns.
  std::map<std::string, std::string> numeric_extras;
  std::map<std::string, std::string> label_extras;
  Codebook codebook = Codebook::indian_default();

  static Schema from_json_file(const std::filesystem::path& path);
  std::string header_for(const std::string& field) const;
};

/// Built-in record fields that a CSV column can populate.
const std::vector<std::string>& builtin_columns();

Dataset load_csv(const std::filesystem::path& path, const Schema& schema = {});
/// Writes a dataset with the default header names, including every extra
/// column; load_csv with a default schema reads it back.
void write_csv(const Dataset& ds, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Sample selection and trimming

struct FieldFilter {
  std::string field;
  /// Allowed labels for a categorical field (empty: no level condition).
  std::vector<std::string> levels;
  std::optional<double> min;
  std::optional<double> max;
};

struct FilterSpec {
  std::vector<FieldFilter> conditions;

  /// Working age 15-59 inclusive and wage/salary employment.
  static FilterSpec analysis_default();
  std::string describe() const;
};

bool matches(const Dataset& ds, const WorkerRecord& r, const FilterSpec& spec);
Dataset filter_analysis_sample(const Dataset& ds, const FilterSpec& criteria = FilterSpec::analysis_default());

/// Drops floor(fraction * N) rows from each end of the wage order, where N
/// counts rows with a wage. Rows without a wage pass through untouched.
Dataset trim_wage_tails(const Dataset& ds, double fraction = 0.005);

// ---------------------------------------------------------------------------
// Design matrices

struct CategoricalTerm {
  std::string field;
  std::string base;
};

/// Regression formula. Numeric terms accept a `field^p` power suffix.
/// Interaction operands are either a field (numeric, or categorical declared
/// in `categorical`) or a single dummy `field=level`.
struct ModelSpec {
  std::string response = "log_wage";
  std::vector<std::string> numeric;
  std::vector<CategoricalTerm> categorical;
  std::vector<std::vector<std::string>> interactions;
  bool intercept = true;
  std::string cluster;

  /// Every dataset field the formula touches, response and cluster included.
  std::vector<std::string> referenced_fields() const;
};

inline constexpr std::string_view kInterceptName = "(Intercept)";

struct DesignMatrix {
  Eigen::VectorXd response;
  Eigen::MatrixXd columns;
  Eigen::VectorXd weights;
  std::optional<Eigen::VectorXi> cluster_ids;
  std::vector<std::string> column_names;
  /// Dataset row behind each design row (listwise deletion drops rows).
  std::vector<std::size_t> source_rows;
  /// Non-base levels per categorical field, in column order.
  std::map<std::string, std::vector<std::string>> levels;

  Eigen::Index n() const { return columns.rows(); }
  Eigen::Index k() const { return columns.cols(); }
  std::optional<Eigen::Index> column_index(std::string_view name) const;
  Eigen::VectorXd column(std::string_view name) const;
  /// Throws on any shape invariant violation.
  void check() const;
};

/// Wraps raw matrices into a design; names default to x0, x1, ...
DesignMatrix make_design(Eigen::VectorXd response, Eigen::MatrixXd columns, Eigen::VectorXd weights,
                         std::vector<std::string> names = {});

/// Row subset of a design (keeps names and levels).
DesignMatrix select_rows(const DesignMatrix& d, const std::vector<Eigen::Index>& rows);
/// Column subset by name, in the order given.
DesignMatrix select_columns(const DesignMatrix& d, const std::vector<std::string>& names);
/// Appends named columns.
DesignMatrix append_columns(const DesignMatrix& d, const Eigen::MatrixXd& cols, const std::vector<std::string>& names);

/// Encodes `spec` over `ds`. With `level_template`, categorical levels are
/// taken from the template (unseen levels encode as the base) so that the
/// resulting columns line up with a design fitted elsewhere.
DesignMatrix encode_design(const Dataset& ds, const ModelSpec& spec, const DesignMatrix* level_template = nullptr);

// ---------------------------------------------------------------------------
// Tabulation

struct Statistic {
  enum class Kind { share, mean } kind = Kind::share;
  std::string field;

  static Statistic share() { return {}; }
  static Statistic mean(std::string field) { return {Kind::mean, std::move(field)}; }
};

/// Weighted shares (percent) or means. With one group field the rows are its
/// levels; with more, the last field spans the columns and each row holds
/// that row's cells. Shares add to 100 along the margin being shared.
ReportTable weighted_tabulate(const Dataset& ds, const std::vector<std::string>& group_fields, const Statistic& stat);

}  // namespace eom
