#pragma once

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eom/regression.hpp"
#include "eom/survey_data.hpp"

namespace eom {

struct ProbitFit {
  std::vector<std::string> names;
  Eigen::VectorXd coefficients;
  /// -H^{-1} at the optimum, with weights rescaled to mean one.
  Eigen::MatrixXd covariance;
  double log_likelihood = 0.0;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  Eigen::Index n = 0;
  std::string outcome;

  Eigen::VectorXd standard_errors() const;
  double coef(std::string_view name) const;
  double se(std::string_view name) const;
};

struct ProbitOptions {
  double tolerance = 1e-8;
  int max_iterations = 100;
  int max_halvings = 50;
};

/// Weighted probit by Newton-Raphson from linear-probability starting values.
/// Weights are rescaled to mean one so the likelihood is on the sample scale.
/// Throws DegenerateResponse, PerfectSeparation or NotConverged.
ProbitFit fit_probit(const DesignMatrix& design, const ProbitOptions& options = {});

/// Log-likelihood and score on the mean-one weight scale used by fit_probit.
double probit_log_likelihood(const DesignMatrix& design, const Eigen::VectorXd& b);
Eigen::VectorXd probit_score(const DesignMatrix& design, const Eigen::VectorXd& b);

enum class MillsBranch { yes, no };

/// yes: phi(z)/Phi(z); no: -phi(z)/(1-Phi(z)), with z = x'b.
Eigen::VectorXd inverse_mills(const ProbitFit& fit, const DesignMatrix& design, MillsBranch branch);
double inverse_mills(double z, MillsBranch branch);

/// Experience-weighted migrant stock per destination district.
struct NetworkIndex {
  std::map<std::string, double> network;

  double at(const std::string& district) const;
  double squared(const std::string& district) const { return at(district) * at(district); }
};

NetworkIndex migrant_network(const Dataset& ds);
/// Adds numeric columns `network` and `network_sq` from each row's district.
Dataset attach_network(const Dataset& ds, const NetworkIndex& index);

enum class LambdaMode {
  /// Yes-branch ratio; the term is left out when no wage row was selected
  /// and refused when the wage rows mix both outcomes.
  yes_branch,
  /// Yes-branch for selected rows, no-branch for the others.
  by_outcome,
};

LambdaMode parse_lambda_mode(std::string_view s);

struct SelectionSpec {
  /// Short name; the correction column is `lambda_<name>`.
  std::string name;
  /// 0/1 field, e.g. is_employed, is_wage_salary, migrant.
  std::string outcome;
  /// Right-hand side; its response is replaced by `outcome`.
  ModelSpec regressors;
  std::vector<std::string> exclusions;
  /// Rows on which the probit is estimated.
  FilterSpec sample;
  LambdaMode mode = LambdaMode::yes_branch;

  std::string lambda_name() const { return "lambda_" + name; }
};

struct HeckmanResult {
  FitResult wage;
  DesignMatrix design;
  std::vector<std::pair<std::string, ProbitFit>> probits;
  /// Correction columns added to the wage equation, in order.
  std::vector<std::string> lambda_columns;
  /// Wage rows with the correction columns attached, and the formula that
  /// includes them; subgroup fits reuse both.
  Dataset data;
  ModelSpec formula;
  std::vector<std::string> notes;
};

/// Probit for one selection spec on `full`.
ProbitFit fit_selection(const Dataset& full, const SelectionSpec& spec);

/// Fits each selection probit, attaches the Mills ratios to the wage rows
/// of `full` picked by `wage_sample`, and fits the wage equation by WLS with
/// the requested covariance. A probit whose outcome never varies is skipped
/// with a note. Throws ExclusionVariableInWageEquation.
HeckmanResult heckman_wage_fit(const Dataset& full, const FilterSpec& wage_sample, const ModelSpec& wage_formula,
                               const std::vector<SelectionSpec>& selections,
                               CovarianceKind covariance = CovarianceKind::hc1);

}  // namespace eom
