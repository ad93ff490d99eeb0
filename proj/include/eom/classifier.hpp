#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "eom/report_table.hpp"
#include "eom/survey_data.hpp"

namespace eom {

/// Realized-matches statistics of one occupation: the weighted education
/// distribution of everyone observed working in it.
struct OccupationEduStats {
  std::string occ_code;
  double mean_edu = 0.0;
  double sd_edu = 0.0;  // population form, sqrt(sum w (e - mean)^2 / sum w)
  double median_edu = 0.0;
  double weighted_count = 0.0;
  std::size_t raw_count = 0;
  bool classifiable = false;
};

/// Occupations below either floor cannot be classified.
struct SupportRule {
  double min_weighted_count = 5.0;
  std::size_t min_raw_count = 2;
};

enum class MatchStatus { undereducated, adequate, overeducated, unclassifiable };
std::string to_string(MatchStatus s);

enum class Center { mean, median };
std::string to_string(Center c);
Center parse_center(std::string_view s);

/// Adequate band = center +/- k * sd, bounds inclusive.
struct ThresholdPolicy {
  double k = 1.0;
  Center center = Center::mean;

  void validate() const;
  double center_of(const OccupationEduStats& s) const {
    return center == Center::mean ? s.mean_edu : s.median_edu;
  }
};

/// Attained years split into required, surplus and deficit years.
struct EduDecomposition {
  double attained = 0.0;
  double required = 0.0;
  double surplus = 0.0;
  double deficit = 0.0;

  /// attained - required - surplus + deficit, evaluated left to right.
  /// Exactly zero for every decomposition produced by decompose().
  double identity_residual() const { return attained - required - surplus + deficit; }
};

using OccupationStatsMap = std::map<std::string, OccupationEduStats>;

/// Per-occupation weighted mean, SD and median over rows with an occupation.
OccupationStatsMap compute_occupation_stats(const Dataset& ds, const SupportRule& rule = {});

MatchStatus classify(double years_edu, const OccupationEduStats& stats, const ThresholdPolicy& policy = {});

/// Required years are the policy center for mismatched workers and the
/// attained years for adequately matched ones. Throws InvalidStatus for
/// unclassifiable workers.
EduDecomposition decompose(double years_edu, const OccupationEduStats& stats, MatchStatus status,
                           const ThresholdPolicy& policy = {});

/// Adds `match_status` (label) plus `required_edu`, `surplus_edu` and
/// `deficit_edu` (numeric, missing when unclassifiable) to every row.
Dataset attach_eom_columns(const Dataset& ds, const OccupationStatsMap& stats, const ThresholdPolicy& policy = {});

/// Weighted percent under/adequate/over per group (columns), plus a Total
/// column. Occupation statistics come from `stats` when given, else from
/// `ds` itself.
ReportTable incidence_table(const Dataset& ds, const std::vector<std::string>& group_fields,
                            const ThresholdPolicy& policy = {}, const OccupationStatsMap* stats = nullptr);

/// One incidence block per (k, center) pair, stacked in the given order.
/// Row labels read "k=0.9, mean: Adequately educated".
ReportTable sensitivity_sweep(const Dataset& ds, const std::vector<double>& ks, const std::vector<Center>& centers,
                              const std::vector<std::string>& group_fields = {},
                              const OccupationStatsMap* stats = nullptr);

/// Row labels of an incidence block.
inline constexpr const char* kUnderLabel = "Undereducated";
inline constexpr const char* kAdequateLabel = "Adequately educated";
inline constexpr const char* kOverLabel = "Overeducated";
inline constexpr const char* kTotalLabel = "Total";

}  // namespace eom
