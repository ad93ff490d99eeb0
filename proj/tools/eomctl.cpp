#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "eom/classifier.hpp"
#include "eom/diagnostics.hpp"
#include "eom/error.hpp"
#include "eom/pipeline.hpp"
#include "eom/regression.hpp"
#include "eom/report_table.hpp"
#include "eom/selection.hpp"
#include "eom/simulation.hpp"
#include "eom/suites.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format;
  std::optional<double> k;
  std::string center;
};

void add_common(CLI::App* app, Common& c, bool config_required) {
  auto* opt = app->add_option("--config", c.config, "run configuration (JSON)");
  if (config_required) opt->required();
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--format", c.format, "csv, json or markdown")->check(CLI::IsMember({"csv", "json", "markdown"}));
  app->add_option("--k", c.k, "threshold multiplier");
  app->add_option("--center", c.center, "threshold center")->check(CLI::IsMember({"mean", "median"}));
}

eom::RunConfig run_config(const Common& c) {
  eom::RunConfig cfg = eom::load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.k) cfg.threshold.k = *c.k;
  if (!c.center.empty()) cfg.threshold.center = eom::parse_center(c.center);
  cfg.threshold.validate();
  if (!c.out.empty()) cfg.out_dir = c.out;
  return cfg;
}

// Tables go to <out>/<id>.<ext> when --out is given, else to stdout.
void deliver(const Common& c, const std::vector<std::pair<std::string, eom::ReportTable>>& tables) {
  const eom::Format f = eom::parse_format(c.format.empty() ? "markdown" : c.format);
  if (c.out.empty()) {
    for (const auto& [id, t] : tables) std::cout << eom::render(t, f) << '\n';
    return;
  }
  std::error_code ec;
  fs::create_directories(c.out, ec);
  for (const auto& [id, t] : tables) eom::emit(t, f, fs::path(c.out) / (id + eom::extension(f)));
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw eom::config_error("IoError", "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

eom::ReportTable fit_table(const std::string& title, const eom::FitResult& fit) {
  eom::ReportTable t;
  t.title = title;
  t.add_column("Estimate");
  for (std::size_t j = 0; j < fit.names.size(); ++j) {
    const auto i = static_cast<Eigen::Index>(j);
    t.add_row(fit.names[j], {eom::Cell::coefficient(fit.coefficients(i), std::sqrt(std::max(fit.covariance(i, i), 0.0)))});
  }
  t.add_row("Observations", {eom::Cell::number(static_cast<double>(fit.n))});
  t.add_row("R-squared", {eom::Cell::number(fit.r_squared)});
  t.footnotes.push_back("Standard errors (" + eom::to_string(fit.estimator) + ") are given in parenthesis.");
  return t;
}

int cmd_ingest(const Common& c, const std::string& data) {
  eom::Dataset ds;
  if (!c.config.empty()) {
    const eom::RunConfig cfg = run_config(c);
    ds = eom::load_config_data(cfg);
    eom::validate_run_config(cfg, ds);
  } else {
    if (data.empty()) throw eom::config_error("NoInput", "ingest needs --config or --data");
    ds = eom::load_csv(data);
  }
  eom::ReportTable t;
  t.title = "Ingestion summary: " + ds.source();
  t.add_column("Non-missing");
  t.add_column("Weighted mean");
  t.add_row("Records", {eom::Cell::number(static_cast<double>(ds.size())), {}});
  std::vector<std::string> fields = eom::builtin_columns();
  fields.insert(fields.end(), ds.numeric_extras().begin(), ds.numeric_extras().end());
  for (const auto& f : fields) {
    if (ds.kind(f) != eom::FieldKind::numeric) continue;
    double n = 0, sw = 0, swx = 0;
    for (const auto& r : ds.rows())
      if (auto v = eom::numeric_field(r, f)) {
        n += 1;
        sw += r.weight;
        swx += r.weight * *v;
      }
    t.add_row(f, {eom::Cell::number(n), sw > 0 ? eom::Cell::number(swx / sw) : eom::Cell{}});
  }
  deliver(c, {{"ingest", t}, {"ingest_employment", eom::weighted_tabulate(ds, {"employment_status"}, eom::Statistic::share())}});
  return 0;
}

int cmd_eom(const Common& c) {
  const eom::RunConfig cfg = run_config(c);
  const eom::Dataset raw = eom::load_config_data(cfg);
  eom::validate_run_config(cfg, raw);
  const eom::PreparedData prep = eom::prepare_data(cfg, raw);
  eom::FilterSpec groups;
  groups.conditions.push_back({"comparison", {cfg.migrant_label, cfg.non_migrant_label}, std::nullopt, std::nullopt});
  groups.conditions.push_back({"employment_status", {"wage_salary", "self_employed"}, std::nullopt, std::nullopt});
  const eom::Dataset employed = eom::filter_analysis_sample(prep.population, groups);
  deliver(c, {{"eom_incidence", eom::incidence_table(employed, {"comparison"}, cfg.threshold, &prep.occupation_stats)},
              {"eom_sensitivity", eom::sensitivity_sweep(employed, cfg.sensitivity_k, cfg.sensitivity_centers,
                                                         {"comparison"}, &prep.occupation_stats)}});
  return 0;
}

int cmd_fit(const Common& c, const std::string& group, const std::string& spec) {
  const eom::RunConfig cfg = run_config(c);
  const eom::Dataset raw = eom::load_config_data(cfg);
  eom::validate_run_config(cfg, raw);
  const eom::PreparedData prep = eom::prepare_data(cfg, raw);
  eom::FilterSpec rows = cfg.wage_sample;
  const auto& g = group == "migrants" ? cfg.migrants : cfg.non_migrants;
  rows.conditions.insert(rows.conditions.end(), g.conditions.begin(), g.conditions.end());
  const eom::ModelSpec formula = spec == "attained" ? cfg.attained_formula() : cfg.decomposed_formula();
  const eom::HeckmanResult h = eom::heckman_wage_fit(prep.population, rows, formula, cfg.selections, cfg.covariance);
  eom::ReportTable t = fit_table("Wage equation (" + spec + ", " + group + ")", h.wage);
  for (const auto& n : h.notes) t.footnotes.push_back(n);
  deliver(c, {{"fit_" + spec + "_" + group, t}});
  if (!c.out.empty()) write_json(fs::path(c.out) / ("fit_" + spec + "_" + group + ".json"), eom::to_json(h.wage, true));
  return 0;
}

int cmd_replicate(const Common& c) {
  const eom::RunConfig cfg = run_config(c);
  const eom::ReportBundle bundle = eom::run_replication(cfg);
  const std::vector<eom::Format> formats =
      c.format.empty() ? cfg.formats : std::vector<eom::Format>{eom::parse_format(c.format)};
  const auto written = eom::write_bundle(bundle, cfg.out_dir, formats);
  for (const auto& p : written) std::cout << p.string() << '\n';
  return 0;
}

eom::ReportTable summary_table(const json& suite) {
  eom::ReportTable t;
  t.title = "Monte Carlo summary";
  for (const char* col : {"Truth", "Mean bias", "MC SE of bias", "SD", "Mean SE", "Coverage 95%", "Rate"})
    t.add_column(col);
  for (const auto& [label, s] : suite.items()) {
    for (const auto& [name, c] : s.at("coefficients").items())
      t.add_row(label + ": " + name, {eom::Cell::number(c.at("truth")), eom::Cell::number(c.at("mean_bias")),
                                      eom::Cell::number(c.at("mc_se_bias")), eom::Cell::number(c.at("sd_estimate")),
                                      eom::Cell::number(c.at("mean_se")), eom::Cell::number(c.at("coverage_95")), {}});
    for (const auto& [name, r] : s.at("rejection_rate").items())
      t.add_row(label + ": " + name, {{}, {}, {}, {}, {}, {}, eom::Cell::number(r.get<double>())});
    if (s.at("failures").get<int>() > 0)
      t.footnotes.push_back(label + ": " + std::to_string(s.at("failures").get<int>()) + " failed replications");
  }
  return t;
}

int cmd_simulate(const Common& c, const std::string& suite, int reps, unsigned threads, const std::string& fixture) {
  const std::uint64_t seed = c.seed.value_or(1);
  if (!fixture.empty()) {
    eom::FixtureConfig fc = eom::FixtureConfig::standard();
    if (!c.config.empty()) {
      std::ifstream in(c.config);
      if (!in) throw eom::config_error("IoError", "cannot open " + c.config);
      fc = eom::fixture_from_json(json::parse(in));
    }
    if (c.seed || c.config.empty()) fc.seed = seed;
    eom::write_csv(eom::synth_fixture(fc), fixture);
    std::cout << fixture << '\n';
    return 0;
  }
  std::vector<std::string> suites = suite == "all" ? eom::suite_names() : std::vector<std::string>{suite};
  json all = json::object();
  for (const auto& s : suites) all[s] = eom::run_suite(s, reps, seed, threads);
  std::vector<std::pair<std::string, eom::ReportTable>> tables;
  for (const auto& [name, j] : all.items()) {
    eom::ReportTable t = summary_table(j);
    t.title += ": " + name;
    tables.emplace_back("simulate_" + name, std::move(t));
  }
  deliver(c, tables);
  if (!c.out.empty()) write_json(fs::path(c.out) / "simulate.json", all);
  return 0;
}

int cmd_diagnose(const Common& c, const std::string& fit_path) {
  std::ifstream in(fit_path);
  if (!in) throw eom::config_error("IoError", "cannot open " + fit_path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw eom::config_error("ConfigParse", e.what());
  }
  const eom::FitResult fit = eom::fit_from_json(j);
  if (fit.residuals.size() == 0)
    throw eom::config_error("NoVectors", "saved fit lacks residuals; save it with vectors");
  const Eigen::Index n = fit.residuals.size();
  const eom::DesignMatrix d = eom::make_design(fit.fitted + fit.residuals, Eigen::MatrixXd::Ones(n, 1),
                                               fit.weights, {std::string(eom::kInterceptName)});
  const eom::TestResult bp = eom::breusch_pagan(fit, d);
  deliver(c, {{"diagnose", eom::tests_table("Diagnostics for " + fs::path(fit_path).filename().string(), {{bp.name, bp}})}});
  return 0;
}

int exit_code(eom::ErrorKind k) {
  switch (k) {
    case eom::ErrorKind::config: return 2;
    case eom::ErrorKind::data: return 3;
    case eom::ErrorKind::numerical: return 4;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Education-occupation mismatch and returns-to-education toolkit"};
  app.require_subcommand(1);

  Common ingest_c, eom_c, fit_c, rep_c, sim_c, diag_c;
  std::string data, group = "migrants", spec = "attained", suite = "all", fixture, fit_path;
  int reps = 200;
  unsigned threads = 0;

  auto* ingest = app.add_subcommand("ingest", "validate and summarize input data");
  add_common(ingest, ingest_c, false);
  ingest->add_option("--data", data, "CSV file (when no config is given)");

  auto* eomc = app.add_subcommand("eom", "mismatch incidence and threshold sensitivity");
  add_common(eomc, eom_c, true);

  auto* fit = app.add_subcommand("fit", "one selection-corrected wage equation");
  add_common(fit, fit_c, true);
  fit->add_option("--group", group)->check(CLI::IsMember({"migrants", "non_migrants"}));
  fit->add_option("--spec", spec)->check(CLI::IsMember({"attained", "decomposed"}));

  auto* rep = app.add_subcommand("replicate", "full report bundle");
  add_common(rep, rep_c, true);

  auto* sim = app.add_subcommand("simulate", "Monte Carlo suites or synthetic fixture export");
  add_common(sim, sim_c, false);
  sim->add_option("--suite", suite)->check(CLI::IsMember({"all", "probit", "heckman", "lewbel", "calibration"}));
  sim->add_option("--reps", reps)->check(CLI::PositiveNumber);
  sim->add_option("--threads", threads);
  sim->add_option("--fixture", fixture, "write a synthetic survey CSV instead of running suites");

  auto* diag = app.add_subcommand("diagnose", "tests on a saved fit");
  add_common(diag, diag_c, false);
  diag->add_option("--fit", fit_path, "fit JSON written by `fit --out`")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*ingest) return cmd_ingest(ingest_c, data);
    if (*eomc) return cmd_eom(eom_c);
    if (*fit) return cmd_fit(fit_c, group, spec);
    if (*rep) return cmd_replicate(rep_c);
    if (*sim) return cmd_simulate(sim_c, suite, reps, threads, fixture);
    if (*diag) return cmd_diagnose(diag_c, fit_path);
  } catch (const eom::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
