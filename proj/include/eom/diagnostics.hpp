#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "eom/iv.hpp"
#include "eom/regression.hpp"
#include "eom/report_table.hpp"
#include "eom/survey_data.hpp"

namespace eom {

struct TestResult {
  std::string name;
  double statistic = 0.0;
  /// "F" or "chi2".
  std::string distribution;
  double df1 = 0.0;
  std::optional<double> df2;
  double p_value = 1.0;
  /// False for an explicit "not defined" marker such as a just-identified J.
  bool defined = true;
  std::string note;

  bool reject_at_05() const { return defined && p_value < 0.05; }
  std::string decision() const;
};

double f_upper_p(double statistic, double df1, double df2);
double chi2_upper_p(double statistic, double df);

/// Control-function test: the first-stage residuals enter the structural
/// equation and their joint F, df (m, n-k-m), is reported.
TestResult durbin_wu_hausman(const TwoSLSFit& fit);
TestResult durbin_wu_hausman(const DesignMatrix& design, const std::vector<std::string>& endogenous,
                             const InstrumentSet& instruments);

/// n R^2 from the weighted regression of e^2/sigma^2 on [1, fitted]; chi2(1).
TestResult breusch_pagan(const FitResult& fit, const DesignMatrix& design);

struct ChowResult {
  TestResult test;
  std::vector<std::string> groups;
  /// Block-diagonal fit; coefficient names are "[group] column".
  FitResult stacked;
};

/// Equality of `target` across the levels of `group_field`, every other
/// coefficient free to differ by group. F with (G-1, n-Gk) df.
/// Throws TooFewGroups, GroupTooSmall.
ChowResult chow_test(const Dataset& ds, const ModelSpec& formula, const std::string& group_field,
                     const std::string& target);
TestResult chow_coefficient_equality(const Dataset& ds, const ModelSpec& formula, const std::string& group_field,
                                     const std::string& target);

/// First-stage partial F and Sanderson-Windmeijer F per endogenous column,
/// Cragg-Donald minimum-eigenvalue F and the Anderson canonical-correlation
/// LM underidentification test.
std::vector<TestResult> weak_instrument_stats(const TwoSLSFit& fit);

/// Hansen J from two-step efficient GMM with a heteroskedasticity-robust
/// weight matrix. A just-identified model yields an undefined marker.
TestResult hansen_j(const TwoSLSFit& fit);

/// 1 / (1 - r^2); +infinity at |r| = 1.
double vif_from_r(double r);

/// Weighted pairwise correlations and the implied VIF, one row per pair.
/// Throws ZeroVariance naming the offending column.
ReportTable pairwise_corr_vif(const Eigen::MatrixXd& columns, const std::vector<std::string>& names,
                              const Eigen::VectorXd& weights = {});

/// One row per test: statistic, df and p-value.
ReportTable tests_table(const std::string& title, const std::vector<std::pair<std::string, TestResult>>& rows);

}  // namespace eom
