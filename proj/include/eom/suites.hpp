#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "eom/simulation.hpp"

namespace eom {

/// Probit on the selection DGP. Rates: "within_3se" (all coefficients),
/// "gradient_ok" (sup-norm score below 1e-8 at the optimum).
Estimator probit_recovery_estimator();

/// Heckman-corrected and naive OLS years_edu estimates ("heckman_edu",
/// "ols_edu") on the selection DGP.
Estimator heckman_estimator();

/// Generated-instrument 2SLS for years_edu ("lewbel_edu") on the Lewbel DGP,
/// with drivers nightlight and mpce and no external instruments.
/// Rate "strong" records Sanderson-Windmeijer F > 10.
Estimator lewbel_estimator();

/// Rejection-rate estimators for the test-calibration suite. Each records the
/// rate under the name of its test.
Estimator dwh_estimator();
Estimator hansen_estimator();
Estimator breusch_pagan_estimator(double gamma);
Estimator chow_estimator(std::vector<double> slopes);

struct SuiteRun {
  std::string label;
  DGPConfig config;
  Estimator estimator;
};

/// Named suites: probit, heckman, lewbel, calibration.
std::vector<std::string> suite_names();
std::vector<SuiteRun> suite_runs(const std::string& suite, std::uint64_t seed);

/// Runs every part of a suite and returns {label: summary} JSON.
nlohmann::json run_suite(const std::string& suite, int reps, std::uint64_t seed, unsigned threads = 0);

}  // namespace eom
