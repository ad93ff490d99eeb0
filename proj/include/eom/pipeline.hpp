#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "eom/classifier.hpp"
#include "eom/regression.hpp"
#include "eom/report_table.hpp"
#include "eom/selection.hpp"
#include "eom/survey_data.hpp"

namespace eom {

struct SubgroupLevel {
  std::string label;
  /// Categorical axis: the field value. Banded axis: inclusive bounds.
  std::string level;
  std::optional<double> min;
  std::optional<double> max;
};

struct SubgroupAxis {
  std::string name;
  std::string title;
  std::string field;
  std::vector<SubgroupLevel> levels;
  bool banded() const;
};

struct IVSample {
  std::string name;
  /// "migrants" or "non_migrants": the comparison group the sample refines.
  std::string base;
  FilterSpec filter;
  bool iv_valid = false;
};

struct IVConfig {
  std::string endogenous = "years_edu";
  std::vector<std::string> external;
  /// Heteroskedasticity drivers; empty means the external instruments.
  std::vector<std::string> drivers;
  std::vector<IVSample> samples;
};

struct RunConfig {
  std::filesystem::path data;
  std::optional<std::filesystem::path> schema;
  std::optional<std::filesystem::path> codebook;
  double trim_fraction = 0.005;
  /// Working-age population on which the selection probits run.
  FilterSpec population;
  /// Wage/salary rows entering the wage equations.
  FilterSpec wage_sample;
  FilterSpec migrants;
  FilterSpec non_migrants;
  std::string migrant_label = "Work related migrants";
  std::string non_migrant_label = "Non-migrants";
  ThresholdPolicy threshold;
  std::vector<double> sensitivity_k{0.9, 1.0, 1.1};
  std::vector<Center> sensitivity_centers{Center::mean, Center::median};
  /// Controls shared by both wage specifications.
  ModelSpec controls;
  std::vector<SelectionSpec> selections;
  std::vector<SubgroupAxis> axes;
  std::optional<IVConfig> iv;
  CovarianceKind covariance = CovarianceKind::hc1;
  std::filesystem::path out_dir = "out";
  std::vector<Format> formats{Format::csv, Format::json, Format::markdown};
  std::uint64_t seed = 1;

  ModelSpec attained_formula() const;
  ModelSpec decomposed_formula() const;
};

/// Parses a run configuration; relative paths resolve against `base_dir`.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Default years-since-migration bands 0-2, 3-5, 6-10, 11+.
std::vector<SubgroupLevel> default_migration_bands();

/// Loads the data named by the config (schema and codebook applied).
Dataset load_config_data(const RunConfig& cfg);

/// Checks every field the config references against the loaded data.
/// Throws UnknownField (config error) naming the first missing column.
void validate_run_config(const RunConfig& cfg, const Dataset& ds);

struct ReportBundle {
  /// Table id (file stem) -> table, in emission order.
  std::vector<std::pair<std::string, ReportTable>> tables;
  std::vector<std::string> warnings;
  std::string provenance;

  const ReportTable* find(std::string_view id) const;
};

/// Prepared analysis data: population with EOM columns, network index and
/// comparison labels attached, wage tails trimmed.
struct PreparedData {
  Dataset population;
  OccupationStatsMap occupation_stats;
};

PreparedData prepare_data(const RunConfig& cfg, const Dataset& raw);

/// Runs every stage. A failing stage raises an Error whose message names it.
ReportBundle run_replication(const RunConfig& cfg);
ReportBundle run_replication(const RunConfig& cfg, const Dataset& raw);

/// Writes each table in each configured format, plus provenance.json.
/// Nothing is left behind if a write fails. Returns the files written.
std::vector<std::filesystem::path> write_bundle(const ReportBundle& bundle, const std::filesystem::path& dir,
                                                const std::vector<Format>& formats);

/// Wage-equation table for one set of fits: attained and decomposed blocks.
struct SpecFits {
  std::optional<FitResult> attained;
  std::optional<FitResult> decomposed;
};

}  // namespace eom
