#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "eom/survey_data.hpp"

namespace eom {

/// Seeds a 64-bit Mersenne Twister through splitmix64 so that neighbouring
/// seeds (seed, seed + 1, ...) give unrelated streams.
std::mt19937_64 make_engine(std::uint64_t seed);
std::uint64_t splitmix64(std::uint64_t x);

struct SelectionBlock {
  /// Slopes on [years_edu, excl]; the intercept is solved for `target_share`.
  std::vector<double> theta{0.1, 1.0};
  double rho = 0.5;
  double target_share = 0.5;
};

struct EndogeneityBlock {
  /// First-stage coefficients on the external instruments (one per column).
  std::vector<double> pi{1.0};
  double rho = 0.5;
  /// Heteroskedasticity strength of the first-stage error.
  double delta = 1.0;
  /// Direct effect of the first external instrument on the wage error
  /// (nonzero makes that instrument invalid).
  double invalid_gamma = 0.0;
};

struct DGPConfig {
  int n = 1000;
  /// Wage equation truth. Selection DGP: [intercept, years_edu, age];
  /// Lewbel DGP: [intercept, years_edu, nightlight, mpce].
  std::vector<double> beta;
  double sigma = 0.5;
  std::optional<SelectionBlock> selection;
  std::optional<EndogeneityBlock> endogeneity;
  std::uint64_t seed = 1;

  void validate() const;
  static DGPConfig selection_default();
  static DGPConfig lewbel_default();
};

DGPConfig dgp_from_json(const nlohmann::json& j);

struct Truth {
  std::map<std::string, double> coefficients;
  double rho = 0.0;
  std::vector<double> theta;
};

struct Simulated {
  Dataset data;
  Truth truth;
};

/// Wage rows carry employment_status wage_salary and a daily wage; the
/// others are `other` with no wage. The exclusion variable is the numeric
/// extra `excl`. Wage regressors: years_edu, age; selection: years_edu, excl.
Simulated simulate_selection_dgp(const DGPConfig& cfg);

/// Endogenous years_edu with first-stage error u = U + exp(delta*h/2) e2,
/// h = nightlight + mpce/2, and wage error rho*U + sqrt(1-rho^2) e1, so the
/// first stage is heteroskedastic in the drivers nightlight and mpce (numeric
/// extras, uniform with unit variance) while their products with u stay
/// uncorrelated with the wage error. External instruments are the numeric
/// extras named by lewbel_instrument_names().
Simulated simulate_lewbel_dgp(const DGPConfig& cfg);
std::vector<std::string> lewbel_instrument_names(std::size_t count);

/// Linear model y = beta0 + beta1 x1 + beta2 x2 + s(x) e with
/// log s^2 = gamma * (mean-free linear index): gamma = 0 is homoskedastic.
/// Columns are the numeric extras x1, x2; the response is log_wage.
Simulated simulate_regression_dgp(const DGPConfig& cfg, double gamma);

/// Groups g0..g{G-1} (label extra `group`) with their own slope on x1.
Simulated simulate_group_dgp(const DGPConfig& cfg, const std::vector<double>& slopes);

struct OccupationPlan {
  std::string code;
  double modal_edu = 10.0;
  double share = 1.0;
};

struct FixtureConfig {
  int n = 8000;
  std::uint64_t seed = 1;
  std::vector<OccupationPlan> occupations;
  double under_share = 0.15;
  double over_share = 0.15;
  /// Distance in years of mismatched workers from the modal level.
  double gap = 3.0;
  /// Mismatched workers sit gap + U{-jitter..jitter} years from the mode.
  int jitter = 1;
  double migrant_share = 0.3;
  int states = 4;
  int districts_per_state = 5;

  static FixtureConfig standard();
  void validate() const;
};

FixtureConfig fixture_from_json(const nlohmann::json& j);

/// Survey-shaped synthetic data: households, migration fields, weights,
/// region and instrument columns (colleges, nightlight, nightlight_sd,
/// district), and education drawn so that the realized-matches rule
/// recovers the planned under/adequate/over shares.
Dataset synth_fixture(const FixtureConfig& cfg);

// ---------------------------------------------------------------------------
// Monte Carlo

struct Estimate {
  std::string name;
  double value = 0.0;
  double se = 0.0;
  double truth = 0.0;
};

struct Replication {
  std::vector<Estimate> estimates;
  /// Test name -> rejected at the nominal level.
  std::vector<std::pair<std::string, bool>> rejections;
};

struct Estimator {
  std::string name;
  /// Runs one replication on the data generated from `cfg` (seed already set).
  std::function<Replication(const DGPConfig& cfg)> run;
};

struct CoefficientSummary {
  double truth = 0.0;
  double mean_estimate = 0.0;
  double mean_bias = 0.0;
  /// Monte Carlo standard error of mean_bias.
  double mc_se_bias = 0.0;
  double sd_estimate = 0.0;
  double mean_se = 0.0;
  double median_abs_error = 0.0;
  double coverage_95 = 0.0;
};

struct MonteCarloSummary {
  std::string estimator;
  int replications = 0;
  int failures = 0;
  std::vector<std::string> failure_messages;
  std::map<std::string, CoefficientSummary> coefficients;
  std::map<std::string, double> rejection_rate;

  nlohmann::json to_json() const;
};

/// Replication i uses seed cfg.seed + i. Replications run on `threads`
/// workers (0: hardware concurrency); the summary does not depend on the
/// schedule. Failed replications are counted and reported with their index.
MonteCarloSummary monte_carlo(const Estimator& estimator, const DGPConfig& cfg, int reps, unsigned threads = 0);

}  // namespace eom
