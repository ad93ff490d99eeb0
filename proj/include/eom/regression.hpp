#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "eom/survey_data.hpp"

namespace eom {

enum class CovarianceKind { classical, hc1, cluster };
std::string to_string(CovarianceKind k);
CovarianceKind parse_covariance(std::string_view s);

struct FitResult {
  std::vector<std::string> names;
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd covariance;
  Eigen::VectorXd residuals;  // y - X b, unweighted
  Eigen::VectorXd fitted;
  Eigen::VectorXd weights;
  double r_squared = 0.0;  // weighted, centered
  double ssr = 0.0;        // sum of w e^2
  Eigen::Index n = 0;
  Eigen::Index k = 0;
  CovarianceKind estimator = CovarianceKind::classical;
  /// (X'WX)^{-1}, the bread of every sandwich.
  Eigen::MatrixXd bread;
  std::vector<std::size_t> source_rows;

  Eigen::VectorXd standard_errors() const;
  std::optional<Eigen::Index> index_of(std::string_view name) const;
  double coef(std::string_view name) const;
  double se(std::string_view name) const;
};

/// Weighted least squares through a column-pivoted QR of sqrt(W) X. The
/// covariance is the classical sigma^2 (X'WX)^{-1} with sigma^2 = SSR/(n-k).
/// Throws RankDeficient (naming the collinear columns) or
/// InsufficientObservations.
FitResult fit_wls(const DesignMatrix& design);

/// Sandwich covariance for a fit on `design`:
///   HC1:     n/(n-k) * B (sum w_i^2 e_i^2 x_i x_i') B
///   cluster: G/(G-1) * (n-1)/(n-k) * B (sum_g s_g s_g') B,  s_g = sum_{i in g} w_i e_i x_i
/// `classical` returns the fit's own classical matrix.
Eigen::MatrixXd sandwich_cov(const FitResult& fit, const DesignMatrix& design, CovarianceKind kind);

/// Copy of `fit` carrying the requested covariance.
FitResult with_covariance(FitResult fit, const DesignMatrix& design, CovarianceKind kind);

Eigen::VectorXd predict(const FitResult& fit, const DesignMatrix& new_design);
Eigen::VectorXd predict(const FitResult& fit, const Eigen::MatrixXd& x, const std::vector<std::string>& names);

/// Coefficients, SEs, tag, n, k, R^2; with `vectors` also residuals, fitted
/// values and weights so that diagnostics can run on the saved file.
nlohmann::json to_json(const FitResult& fit, bool vectors = false);
FitResult fit_from_json(const nlohmann::json& j);

namespace detail {

/// Sandwich core shared with 2SLS, where X holds the projected regressors
/// while e stays the structural residual.
Eigen::MatrixXd sandwich(const Eigen::MatrixXd& x, const Eigen::VectorXd& w, const Eigen::VectorXd& e,
                         const Eigen::MatrixXd& bread, CovarianceKind kind,
                         const std::optional<Eigen::VectorXi>& clusters);

/// Plain weighted least squares used for auxiliary regressions.
struct LeastSquares {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd residuals;
  double ssr = 0.0;
};
LeastSquares least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w);

/// Weighted centered R^2 of y given residuals; 0 when y has no variation.
double weighted_r_squared(const Eigen::VectorXd& y, const Eigen::VectorXd& residuals, const Eigen::VectorXd& w);

}  // namespace detail

}  // namespace eom
