#include "eom/suites.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

#include "eom/diagnostics.hpp"
#include "eom/error.hpp"
#include "eom/iv.hpp"
#include "eom/selection.hpp"

namespace eom {

namespace {

SelectionSpec selection_spec() {
  SelectionSpec s;
  s.name = "sel";
  s.outcome = "is_wage_salary";
  s.regressors.numeric = {"years_edu", "excl"};
  s.exclusions = {"excl"};
  return s;
}

FilterSpec wage_rows() {
  FilterSpec f;
  f.conditions.push_back({"employment_status", {"wage_salary"}, std::nullopt, std::nullopt});
  return f;
}

ModelSpec lewbel_formula() {
  ModelSpec f;
  f.numeric = {"years_edu", "nightlight", "mpce"};
  return f;
}

TwoSLSFit external_fit(const DGPConfig& c) {
  const Simulated sim = simulate_lewbel_dgp(c);
  const DesignMatrix d = encode_design(sim.data, lewbel_formula());
  const InstrumentSet set = external_instruments(sim.data, d, lewbel_instrument_names(c.endogeneity->pi.size()));
  return fit_2sls(d, {"years_edu"}, set, CovarianceKind::hc1);
}

Replication single_rejection(const std::string& name, const TestResult& t) {
  Replication r;
  r.rejections.push_back({name, t.reject_at_05()});
  return r;
}

}  // namespace

Estimator probit_recovery_estimator() {
  return {"probit", [](const DGPConfig& c) {
            const Simulated sim = simulate_selection_dgp(c);
            const ProbitFit fit = fit_selection(sim.data, selection_spec());
            Replication r;
            bool within = true;
            for (std::size_t j = 0; j < fit.names.size(); ++j) {
              const auto i = static_cast<Eigen::Index>(j);
              const double se = std::sqrt(fit.covariance(i, i));
              const double truth = sim.truth.theta.at(j);
              r.estimates.push_back({"probit " + fit.names[j], fit.coefficients(i), se, truth});
              within = within && std::abs(fit.coefficients(i) - truth) <= 3.0 * se;
            }
            r.rejections.push_back({"within_3se", within});
            r.rejections.push_back({"gradient_ok", fit.converged && fit.gradient_norm < 1e-8});
            return r;
          }};
}

Estimator heckman_estimator() {
  return {"heckman", [](const DGPConfig& c) {
            const Simulated sim = simulate_selection_dgp(c);
            ModelSpec f;
            f.numeric = {"years_edu", "age"};
            const HeckmanResult h = heckman_wage_fit(sim.data, wage_rows(), f, {selection_spec()}, CovarianceKind::hc1);
            const DesignMatrix d = encode_design(filter_analysis_sample(sim.data, wage_rows()), f);
            const FitResult ols = with_covariance(fit_wls(d), d, CovarianceKind::hc1);
            const double truth = sim.truth.coefficients.at("years_edu");
            Replication r;
            r.estimates.push_back({"heckman_edu", h.wage.coef("years_edu"), h.wage.se("years_edu"), truth});
            r.estimates.push_back({"ols_edu", ols.coef("years_edu"), ols.se("years_edu"), truth});
            return r;
          }};
}

Estimator lewbel_estimator() {
  return {"lewbel", [](const DGPConfig& c) {
            const Simulated sim = simulate_lewbel_dgp(c);
            const DesignMatrix d = encode_design(sim.data, lewbel_formula());
            const DesignMatrix exog = select_columns(d, {std::string(kInterceptName), "nightlight", "mpce"});
            GeneratedInstruments g = generate_lewbel_instruments(exog, d.column("years_edu"), {"nightlight", "mpce"});
            InstrumentSet set;
            set.external.resize(d.n(), 0);
            set.generated = std::move(g.columns);
            set.generated_names = std::move(g.names);
            const TwoSLSFit fit = fit_2sls(d, {"years_edu"}, set, CovarianceKind::hc1);
            const auto weak = weak_instrument_stats(fit);
            Replication r;
            r.estimates.push_back({"lewbel_edu", fit.second_stage.coef("years_edu"), fit.second_stage.se("years_edu"),
                                   sim.truth.coefficients.at("years_edu")});
            r.rejections.push_back({"strong", weak.at(1).statistic > 10.0});
            return r;
          }};
}

Estimator dwh_estimator() {
  return {"dwh", [](const DGPConfig& c) { return single_rejection("DWH", durbin_wu_hausman(external_fit(c))); }};
}

Estimator hansen_estimator() {
  return {"hansen_j", [](const DGPConfig& c) { return single_rejection("Hansen J", hansen_j(external_fit(c))); }};
}

Estimator breusch_pagan_estimator(double gamma) {
  return {"breusch_pagan", [gamma](const DGPConfig& c) {
            const Simulated sim = simulate_regression_dgp(c, gamma);
            ModelSpec f;
            f.numeric = {"x1", "x2"};
            const DesignMatrix d = encode_design(sim.data, f);
            return single_rejection("Breusch-Pagan", breusch_pagan(fit_wls(d), d));
          }};
}

Estimator chow_estimator(std::vector<double> slopes) {
  return {"chow", [slopes = std::move(slopes)](const DGPConfig& c) {
            const Simulated sim = simulate_group_dgp(c, slopes);
            ModelSpec f;
            f.numeric = {"x1", "x2"};
            return single_rejection("Chow", chow_coefficient_equality(sim.data, f, "group", "x1"));
          }};
}

std::vector<std::string> suite_names() { return {"probit", "heckman", "lewbel", "calibration"}; }

std::vector<SuiteRun> suite_runs(const std::string& suite, std::uint64_t seed) {
  std::vector<SuiteRun> runs;
  auto add = [&](std::string label, DGPConfig c, Estimator e) {
    c.seed = seed;
    runs.push_back({std::move(label), std::move(c), std::move(e)});
  };
  if (suite == "probit") {
    DGPConfig c = DGPConfig::selection_default();
    c.n = 10000;
    add("probit", c, probit_recovery_estimator());
  } else if (suite == "heckman") {
    add("heckman", DGPConfig::selection_default(), heckman_estimator());
  } else if (suite == "lewbel") {
    DGPConfig c = DGPConfig::lewbel_default();
    c.endogeneity->pi = {0.0};
    add("heteroskedastic", c, lewbel_estimator());
    c.endogeneity->delta = 0.0;
    add("homoskedastic", c, lewbel_estimator());
  } else if (suite == "calibration") {
    DGPConfig iv = DGPConfig::lewbel_default();
    iv.n = 2000;
    iv.endogeneity->rho = 0.0;
    iv.endogeneity->delta = 0.0;
    add("dwh_size", iv, dwh_estimator());
    iv.n = 5000;
    iv.endogeneity->rho = 0.5;
    add("dwh_power", iv, dwh_estimator());
    iv.n = 2000;
    iv.endogeneity->pi = {1.0, 1.0, 1.0};
    add("hansen_size", iv, hansen_estimator());
    iv.n = 5000;
    iv.endogeneity->invalid_gamma = 0.3;
    add("hansen_power", iv, hansen_estimator());

    DGPConfig reg;
    reg.n = 2000;
    reg.beta = {1.0, 0.5, 0.5};
    add("bp_size", reg, breusch_pagan_estimator(0.0));
    add("bp_power", reg, breusch_pagan_estimator(1.0));

    DGPConfig grp;
    grp.n = 3000;
    grp.beta = {1.0, 0.0, 0.3};
    grp.sigma = 0.005 * std::sqrt(1000.0);
    add("chow_size", grp, chow_estimator({0.04, 0.04, 0.04}));
    add("chow_power", grp, chow_estimator({0.02, 0.02, 0.06}));
  } else {
    throw config_error("UnknownSuite", "unknown simulation suite '" + suite + "'");
  }
  return runs;
}

nlohmann::json run_suite(const std::string& suite, int reps, std::uint64_t seed, unsigned threads) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& run : suite_runs(suite, seed)) out[run.label] = monte_carlo(run.estimator, run.config, reps, threads).to_json();
  return out;
}

}  // namespace eom
