#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "eom/regression.hpp"
#include "eom/survey_data.hpp"

namespace eom {

struct GeneratedInstruments {
  Eigen::MatrixXd columns;
  std::vector<std::string> names;
  std::vector<std::string> warnings;
};

/// Lewbel instruments G_j = (Z_j - mean_w Z_j) * e, where e are the residuals
/// of the weighted regression of `endog` on every column of `exog` and Z_j
/// runs over the named driver columns of `exog`. Constant drivers are dropped
/// with a warning. Columns are named `lewbel_<driver>`.
GeneratedInstruments generate_lewbel_instruments(const DesignMatrix& exog, const Eigen::VectorXd& endog,
                                                 const std::vector<std::string>& drivers);
/// Same construction with driver columns supplied directly; they need not
/// be part of `exog`. Every G_j is re-centered to weighted mean zero.
GeneratedInstruments generate_lewbel_instruments(const DesignMatrix& exog, const Eigen::VectorXd& endog,
                                                 const Eigen::MatrixXd& drivers, const std::vector<std::string>& names);

struct InstrumentSet {
  Eigen::MatrixXd external;
  std::vector<std::string> external_names;
  Eigen::MatrixXd generated;
  std::vector<std::string> generated_names;
  std::vector<std::string> warnings;

  /// External columns followed by generated ones.
  Eigen::MatrixXd excluded() const;
  std::vector<std::string> names() const;
  Eigen::Index count() const { return external.cols() + generated.cols(); }
};

/// Takes the named columns of `ds` rows behind `design` as external instruments.
InstrumentSet external_instruments(const Dataset& ds, const DesignMatrix& design, const std::vector<std::string>& fields);

struct TwoSLSFit {
  FitResult second_stage;
  std::vector<FitResult> first_stages;
  std::vector<std::string> endogenous_names;
  std::vector<std::string> exogenous_names;
  std::vector<std::string> instrument_names;

  // Inputs kept for the diagnostics.
  Eigen::VectorXd y;
  Eigen::VectorXd weights;
  Eigen::MatrixXd exogenous;
  Eigen::MatrixXd endogenous;
  Eigen::MatrixXd instruments;
  /// Structural columns with the endogenous ones replaced by first-stage fits.
  Eigen::MatrixXd projected;
  std::optional<Eigen::VectorXi> cluster_ids;
};

/// Two-stage least squares. `design` is the structural equation; the columns
/// named in `endogenous` are instrumented by the excluded instruments plus the
/// remaining (exogenous) columns. Second-stage residuals use the original
/// endogenous values. Throws UnderIdentified, InstrumentNameCollision,
/// RankDeficient.
TwoSLSFit fit_2sls(const DesignMatrix& design, const std::vector<std::string>& endogenous,
                   const InstrumentSet& instruments, CovarianceKind covariance = CovarianceKind::hc1);

}  // namespace eom
