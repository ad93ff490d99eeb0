#include "eom/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>

#include "eom/diagnostics.hpp"
#include "eom/error.hpp"
#include "eom/iv.hpp"

namespace eom {

namespace fs = std::filesystem;
using nlohmann::json;

bool SubgroupAxis::banded() const {
  return std::any_of(levels.begin(), levels.end(), [](const SubgroupLevel& l) { return l.min || l.max; });
}

std::vector<SubgroupLevel> default_migration_bands() {
  return {{"0-2", "", 0.0, 2.0}, {"3-5", "", 3.0, 5.0}, {"6-10", "", 6.0, 10.0}, {"11 and above", "", 11.0, std::nullopt}};
}

ModelSpec RunConfig::attained_formula() const {
  ModelSpec m = controls;
  m.numeric.insert(m.numeric.begin(), "years_edu");
  return m;
}

ModelSpec RunConfig::decomposed_formula() const {
  ModelSpec m = controls;
  m.numeric.insert(m.numeric.begin(), {"required_edu", "surplus_edu", "deficit_edu"});
  return m;
}

const ReportTable* ReportBundle::find(std::string_view id) const {
  for (const auto& [name, t] : tables)
    if (name == id) return &t;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

const std::set<std::string>& derived_fields() {
  static const std::set<std::string> s{"required_edu", "surplus_edu", "deficit_edu", "match_status",
                                       "network",      "network_sq",  "comparison"};
  return s;
}

FilterSpec parse_filter(const json& j) {
  FilterSpec f;
  for (const auto& c : j) {
    FieldFilter ff;
    ff.field = c.at("field").get<std::string>();
    if (c.contains("levels")) ff.levels = c["levels"].get<std::vector<std::string>>();
    if (c.contains("min") && !c["min"].is_null()) ff.min = c["min"].get<double>();
    if (c.contains("max") && !c["max"].is_null()) ff.max = c["max"].get<double>();
    f.conditions.push_back(std::move(ff));
  }
  return f;
}

ModelSpec parse_model(const json& j, ModelSpec m = {}) {
  if (j.contains("response")) m.response = j["response"].get<std::string>();
  if (j.contains("numeric")) m.numeric = j["numeric"].get<std::vector<std::string>>();
  if (j.contains("categorical")) {
    m.categorical.clear();
    for (const auto& c : j["categorical"]) m.categorical.push_back({c.at("field").get<std::string>(), c.at("base").get<std::string>()});
  }
  if (j.contains("interactions")) m.interactions = j["interactions"].get<std::vector<std::vector<std::string>>>();
  if (j.contains("intercept")) m.intercept = j["intercept"].get<bool>();
  return m;
}

FilterSpec and_filters(const FilterSpec& a, const FilterSpec& b) {
  FilterSpec out = a;
  out.conditions.insert(out.conditions.end(), b.conditions.begin(), b.conditions.end());
  return out;
}

}  // namespace

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
  RunConfig c;
  c.population.conditions.push_back({"age", {}, 15.0, 59.0});
  c.wage_sample.conditions.push_back({"employment_status", {"wage_salary"}, std::nullopt, std::nullopt});
  c.migrants.conditions.push_back({"migrant_status", {"migrant"}, std::nullopt, std::nullopt});
  c.migrants.conditions.push_back(
      {"migration_reason", {"job_search", "confirm_job", "other_work"}, std::nullopt, std::nullopt});
  c.non_migrants.conditions.push_back({"migrant_status", {"non_migrant"}, std::nullopt, std::nullopt});
  auto resolve = [&](const std::string& p) {
    fs::path path = p;
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  try {
    if (!j.is_object()) throw config_error("ConfigParse", "run configuration must be a JSON object");
    const json& data = j.at("data");
    if (data.is_string()) {
      c.data = resolve(data.get<std::string>());
    } else {
      c.data = resolve(data.at("path").get<std::string>());
      if (data.contains("schema")) c.schema = resolve(data["schema"].get<std::string>());
    }
    if (j.contains("codebook")) c.codebook = resolve(j["codebook"].get<std::string>());
    c.trim_fraction = j.value("trim_fraction", c.trim_fraction);
    if (j.contains("population")) c.population = parse_filter(j["population"]);
    if (j.contains("wage_sample")) c.wage_sample = parse_filter(j["wage_sample"]);
    if (j.contains("groups")) {
      const json& g = j["groups"];
      if (g.contains("migrants")) {
        c.migrants = parse_filter(g["migrants"].at("filter"));
        c.migrant_label = g["migrants"].value("label", c.migrant_label);
      }
      if (g.contains("non_migrants")) {
        c.non_migrants = parse_filter(g["non_migrants"].at("filter"));
        c.non_migrant_label = g["non_migrants"].value("label", c.non_migrant_label);
      }
    }
    if (j.contains("threshold")) {
      c.threshold.k = j["threshold"].value("k", c.threshold.k);
      c.threshold.center = parse_center(j["threshold"].value("center", std::string("mean")));
    }
    if (j.contains("sensitivity")) {
      const json& s = j["sensitivity"];
      if (s.contains("k")) c.sensitivity_k = s["k"].get<std::vector<double>>();
      if (s.contains("centers")) {
        c.sensitivity_centers.clear();
        for (const auto& x : s["centers"]) c.sensitivity_centers.push_back(parse_center(x.get<std::string>()));
      }
    }
    if (j.contains("controls")) c.controls = parse_model(j["controls"]);
    c.covariance = parse_covariance(j.value("covariance", std::string("HC1")));
    if (j.contains("cluster")) c.controls.cluster = j["cluster"].get<std::string>();
    if (c.covariance == CovarianceKind::cluster && c.controls.cluster.empty())
      throw config_error("NoClusterColumn", "cluster covariance requires a \"cluster\" column");

    if (j.contains("selection")) {
      for (const auto& s : j["selection"]) {
        SelectionSpec spec;
        spec.name = s.at("name").get<std::string>();
        spec.outcome = s.at("outcome").get<std::string>();
        spec.regressors = parse_model(s);
        spec.exclusions = s.value("exclusions", std::vector<std::string>{});
        if (s.contains("sample")) spec.sample = parse_filter(s["sample"]);
        spec.mode = parse_lambda_mode(s.value("mode", std::string("yes_branch")));
        c.selections.push_back(std::move(spec));
      }
    }
    if (j.contains("subgroups")) {
      for (const auto& a : j["subgroups"]) {
        SubgroupAxis axis;
        axis.name = a.at("name").get<std::string>();
        axis.field = a.at("field").get<std::string>();
        axis.title = a.value("title", axis.name);
        if (a.contains("bands")) {
          if (a["bands"].is_string()) {
            if (a["bands"].get<std::string>() != "default")
              throw config_error("BadBands", "bands must be \"default\" or a list");
            axis.levels = default_migration_bands();
          } else {
            for (const auto& b : a["bands"]) {
              SubgroupLevel l;
              l.label = b.at("label").get<std::string>();
              if (b.contains("min") && !b["min"].is_null()) l.min = b["min"].get<double>();
              if (b.contains("max") && !b["max"].is_null()) l.max = b["max"].get<double>();
              axis.levels.push_back(l);
            }
          }
        } else {
          for (const auto& l : a.at("levels")) {
            if (l.is_string()) axis.levels.push_back({l.get<std::string>(), l.get<std::string>(), {}, {}});
            else axis.levels.push_back({l.at("label").get<std::string>(), l.at("level").get<std::string>(), {}, {}});
          }
        }
        c.axes.push_back(std::move(axis));
      }
    }
    if (j.contains("iv")) {
      const json& v = j["iv"];
      IVConfig iv;
      iv.endogenous = v.value("endogenous", iv.endogenous);
      iv.external = v.value("external", std::vector<std::string>{});
      iv.drivers = v.value("drivers", std::vector<std::string>{});
      for (const auto& s : v.at("samples")) {
        IVSample smp;
        smp.name = s.at("name").get<std::string>();
        smp.base = s.at("base").get<std::string>();
        if (s.contains("filter")) smp.filter = parse_filter(s["filter"]);
        smp.iv_valid = s.value("iv_valid", false);
        iv.samples.push_back(std::move(smp));
      }
      c.iv = std::move(iv);
    }
    if (j.contains("output")) {
      const json& o = j["output"];
      if (o.contains("dir")) c.out_dir = resolve(o["dir"].get<std::string>());
      if (o.contains("formats")) {
        c.formats.clear();
        for (const auto& f : o["formats"]) c.formats.push_back(parse_format(f.get<std::string>()));
      }
    }
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw config_error("ConfigParse", e.what());
  }
  c.threshold.validate();
  if (c.trim_fraction < 0.0 || c.trim_fraction > 0.1)
    throw config_error("BadTrimFraction", "trim_fraction must lie in [0, 0.1]");
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("IoError", "cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw config_error("ConfigParse", path.string() + ": " + e.what());
  }
  return parse_run_config(j, path.parent_path());
}

Dataset load_config_data(const RunConfig& cfg) {
  Schema schema = cfg.schema ? Schema::from_json_file(*cfg.schema) : Schema{};
  if (cfg.codebook) schema.codebook = Codebook::from_json_file(*cfg.codebook);
  return load_csv(cfg.data, schema);
}

namespace {

void check_bands(const SubgroupAxis& axis) {
  const auto& l = axis.levels;
  auto bad = [&](const std::string& why) { throw config_error("BadBands", "axis '" + axis.name + "': " + why); };
  if (l.front().min.value_or(-1.0) != 0.0) bad("first band must start at 0");
  if (l.back().max) bad("last band must be open-ended");
  for (std::size_t i = 0; i + 1 < l.size(); ++i) {
    if (!l[i].max || !l[i + 1].min) bad("inner bands need both bounds");
    if (*l[i + 1].min != *l[i].max + 1.0) bad("bands must be contiguous (next min = previous max + 1)");
    if (*l[i].max < *l[i].min) bad("band " + l[i].label + " is empty");
  }
}

}  // namespace

void validate_run_config(const RunConfig& cfg, const Dataset& ds) {
  auto need = [&](const std::string& field, const std::string& where) {
    if (field.rfind("lambda_", 0) == 0 || derived_fields().count(field)) return;
    if (!ds.has_field(field))
      throw config_error("UnknownField", "column '" + field + "' referenced by " + where + " is not in the data");
  };
  auto need_filter = [&](const FilterSpec& f, const std::string& where) {
    for (const auto& c : f.conditions) need(c.field, where);
  };
  auto need_model = [&](const ModelSpec& m, const std::string& where) {
    for (const auto& f : m.referenced_fields()) need(f, where);
  };
  need_filter(cfg.population, "population");
  need_filter(cfg.wage_sample, "wage_sample");
  need_filter(cfg.migrants, "groups.migrants");
  need_filter(cfg.non_migrants, "groups.non_migrants");
  need_model(cfg.attained_formula(), "controls");
  for (const auto& s : cfg.selections) {
    need(s.outcome, "selection '" + s.name + "'");
    need_model(s.regressors, "selection '" + s.name + "'");
    need_filter(s.sample, "selection '" + s.name + "'");
    for (const auto& e : s.exclusions) need(e, "selection '" + s.name + "'");
  }
  for (const auto& a : cfg.axes) {
    need(a.field, "subgroup axis '" + a.name + "'");
    if (a.levels.empty()) throw config_error("BadAxis", "subgroup axis '" + a.name + "' has no levels");
    if (a.banded()) {
      if (ds.kind(a.field) != FieldKind::numeric)
        throw config_error("NotNumeric", "banded axis '" + a.name + "' needs a numeric field");
      check_bands(a);
    }
  }
  if (cfg.iv) {
    need(cfg.iv->endogenous, "iv.endogenous");
    for (const auto& z : cfg.iv->external) need(z, "iv.external");
    for (const auto& z : cfg.iv->drivers) need(z, "iv.drivers");
    if (cfg.iv->external.empty() && cfg.iv->drivers.empty())
      throw config_error("UnderIdentified", "iv block declares neither external instruments nor drivers");
    for (const auto& s : cfg.iv->samples) {
      if (!s.iv_valid)
        throw config_error("IVSampleNotValid", "IV sample '" + s.name + "' is not marked iv_valid");
      if (s.base != "migrants" && s.base != "non_migrants")
        throw config_error("BadIVSample", "IV sample base must be migrants or non_migrants");
      need_filter(s.filter, "IV sample '" + s.name + "'");
    }
  }
}

// ---------------------------------------------------------------------------
// Stages

namespace {

template <class F>
auto stage(const std::string& name, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    std::string msg = e.what();
    const std::string prefix = e.code() + ": ";
    if (msg.rfind(prefix, 0) == 0) msg.erase(0, prefix.size());
    throw Error(e.kind(), e.code(), "stage '" + name + "': " + msg);
  }
}

std::string covariance_note(const RunConfig& cfg) {
  switch (cfg.covariance) {
    case CovarianceKind::hc1: return "Robust (HC1) standard errors are given in parenthesis.";
    case CovarianceKind::cluster: return "Standard errors clustered by " + cfg.controls.cluster + " are given in parenthesis.";
    case CovarianceKind::classical: break;
  }
  return "Classical standard errors are given in parenthesis.";
}

const char* kStarsNote = "*** signals significant at 1% level, ** at 5% level and * at 10% level.";

FitResult fit_with(const DesignMatrix& d, CovarianceKind kind) {
  FitResult f = fit_wls(d);
  return kind == CovarianceKind::classical ? f : with_covariance(std::move(f), d, kind);
}

Cell coef_cell(const std::optional<FitResult>& fit, const std::string& name) {
  if (!fit) return {};
  auto i = fit->index_of(name);
  if (!i) return {};
  return Cell::coefficient(fit->coefficients(*i), std::sqrt(std::max(fit->covariance(*i, *i), 0.0)));
}

Cell count_cell(const std::optional<FitResult>& fit) {
  return fit ? Cell::number(static_cast<double>(fit->n)) : Cell{};
}

Cell r2_cell(const std::optional<FitResult>& fit) { return fit ? Cell::number(fit->r_squared) : Cell{}; }

const std::vector<std::pair<std::string, std::string>>& attained_rows() {
  static const std::vector<std::pair<std::string, std::string>> r{{"Attained education", "years_edu"}};
  return r;
}

const std::vector<std::pair<std::string, std::string>>& decomposed_rows() {
  static const std::vector<std::pair<std::string, std::string>> r{
      {"Required education", "required_edu"}, {"Surplus education", "surplus_edu"}, {"Deficit education", "deficit_edu"}};
  return r;
}

// Rows of a wage table: the attained block then the decomposed block.
std::vector<std::string> wage_row_labels() {
  std::vector<std::string> out;
  for (const auto& [label, col] : attained_rows()) out.push_back(label);
  out.push_back("Observations (attained)");
  out.push_back("R-squared (attained)");
  for (const auto& [label, col] : decomposed_rows()) out.push_back(label);
  out.push_back("Observations (decomposed)");
  out.push_back("R-squared (decomposed)");
  return out;
}

std::vector<Cell> wage_column(const SpecFits& f) {
  std::vector<Cell> out;
  for (const auto& [label, col] : attained_rows()) out.push_back(coef_cell(f.attained, col));
  out.push_back(count_cell(f.attained));
  out.push_back(r2_cell(f.attained));
  for (const auto& [label, col] : decomposed_rows()) out.push_back(coef_cell(f.decomposed, col));
  out.push_back(count_cell(f.decomposed));
  out.push_back(r2_cell(f.decomposed));
  return out;
}

ReportTable wage_table(const std::string& title, const std::vector<std::pair<std::string, SpecFits>>& columns) {
  ReportTable t;
  t.title = title;
  for (const auto& label : wage_row_labels()) t.add_row(label, {});
  for (const auto& [label, fits] : columns) {
    const std::size_t c = t.add_column(label);
    const auto cells = wage_column(fits);
    for (std::size_t r = 0; r < cells.size(); ++r) t.at(r, c) = cells[r];
  }
  return t;
}

struct GroupFits {
  HeckmanResult attained;
  HeckmanResult decomposed;
  SpecFits fits() const { return {attained.wage, decomposed.wage}; }
};

GroupFits fit_group(const RunConfig& cfg, const Dataset& pop, const FilterSpec& group) {
  const FilterSpec rows = and_filters(cfg.wage_sample, group);
  GroupFits g;
  g.attained = heckman_wage_fit(pop, rows, cfg.attained_formula(), cfg.selections, cfg.covariance);
  g.decomposed = heckman_wage_fit(pop, rows, cfg.decomposed_formula(), cfg.selections, cfg.covariance);
  return g;
}

std::string axis_column(const SubgroupAxis& a) { return "axis_" + a.name; }

Dataset attach_axis(const Dataset& ds, const SubgroupAxis& axis) {
  std::vector<std::string> labels(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& r = ds[i];
    if (axis.banded()) {
      auto v = numeric_field(r, axis.field);
      if (!v) continue;
      for (const auto& l : axis.levels)
        if ((!l.min || *v >= *l.min) && (!l.max || *v <= *l.max)) {
          labels[i] = l.label;
          break;
        }
    } else {
      const std::string v = label_field(r, axis.field);
      for (const auto& l : axis.levels)
        if (l.level == v) {
          labels[i] = l.label;
          break;
        }
    }
  }
  return ds.with_label_column(axis_column(axis), labels);
}

std::vector<std::size_t> rows_with_label(const Dataset& ds, const std::string& field, const std::string& label) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (label_field(ds[i], field) == label) out.push_back(i);
  return out;
}

struct AxisSpec {
  std::vector<std::pair<std::string, std::optional<FitResult>>> fits;
  std::vector<std::string> estimable;
  Dataset data;
};

AxisSpec fit_axis(const RunConfig& cfg, const HeckmanResult& overall, const SubgroupAxis& axis,
                  std::vector<std::string>& footnotes, const std::string& spec_name) {
  AxisSpec out;
  out.data = attach_axis(overall.data, axis);
  const std::string field = axis_column(axis);
  std::vector<std::size_t> keep;
  for (const auto& level : axis.levels) {
    const auto rows = rows_with_label(out.data, field, level.label);
    std::optional<FitResult> fit;
    if (rows.empty()) {
      footnotes.push_back("Group '" + level.label + "' has no observations (" + spec_name + ") and was skipped.");
    } else {
      try {
        const DesignMatrix d = encode_design(out.data.subset(rows, "select", field + " = " + level.label), overall.formula);
        fit = fit_with(d, cfg.covariance);
        out.estimable.push_back(level.label);
        keep.insert(keep.end(), rows.begin(), rows.end());
      } catch (const Error& e) {
        footnotes.push_back("Group '" + level.label + "' (" + spec_name + ") skipped: " + e.what());
      }
    }
    out.fits.emplace_back(level.label, std::move(fit));
  }
  std::sort(keep.begin(), keep.end());
  out.data = out.data.subset(keep, "select", "estimable groups of " + axis.name);
  return out;
}

Cell chow_cell(const AxisSpec& a, const HeckmanResult& overall, const SubgroupAxis& axis, const std::string& target,
               std::vector<std::string>& footnotes) {
  if (a.estimable.size() < 2) return Cell::label("n/a");
  try {
    const TestResult t = chow_coefficient_equality(a.data, overall.formula, axis_column(axis), target);
    return Cell::statistic(t.statistic, t.p_value);
  } catch (const Error& e) {
    footnotes.push_back(std::string("Chow test for ") + target + " not computed: " + e.what());
    return Cell::label("n/a");
  }
}

ReportTable subgroup_table(const RunConfig& cfg, const GroupFits& overall, const SubgroupAxis& axis,
                           const std::string& title) {
  std::vector<std::string> footnotes;
  const AxisSpec att = fit_axis(cfg, overall.attained, axis, footnotes, "attained");
  const AxisSpec dec = fit_axis(cfg, overall.decomposed, axis, footnotes, "decomposed");

  std::vector<std::pair<std::string, SpecFits>> columns{{"Overall", overall.fits()}};
  for (std::size_t i = 0; i < axis.levels.size(); ++i) {
    const SpecFits f{att.fits[i].second, dec.fits[i].second};
    if (!f.attained && !f.decomposed) continue;
    columns.emplace_back(axis.levels[i].label, f);
  }
  ReportTable t = wage_table(title, columns);
  const std::size_t chow = t.add_column("Chow test");
  for (const auto& [label, col] : attained_rows())
    t.at(*t.row_index(label), chow) = chow_cell(att, overall.attained, axis, col, footnotes);
  for (const auto& [label, col] : decomposed_rows())
    t.at(*t.row_index(label), chow) = chow_cell(dec, overall.decomposed, axis, col, footnotes);
  t.footnotes.push_back(kStarsNote);
  t.footnotes.push_back(covariance_note(cfg));
  t.footnotes.push_back("Chow test indicates whether the difference in the coefficients is significant or not.");
  for (auto& f : footnotes) t.footnotes.push_back(std::move(f));
  return t;
}

ReportTable probit_table(const std::vector<std::pair<std::string, ProbitFit>>& probits,
                         const std::vector<SelectionSpec>& specs) {
  ReportTable t;
  t.title = "Sample selection probit models";
  std::vector<std::string> rows;
  for (const auto& [name, fit] : probits)
    for (const auto& n : fit.names)
      if (std::find(rows.begin(), rows.end(), n) == rows.end()) rows.push_back(n);
  for (const auto& r : rows) t.add_row(r, {});
  t.add_row("Observations", {});
  t.add_row("Log-likelihood", {});
  for (const auto& spec : specs) {
    const std::size_t c = t.add_column(spec.name);
    auto it = std::find_if(probits.begin(), probits.end(), [&](const auto& p) { return p.first == spec.name; });
    if (it == probits.end()) {
      t.footnotes.push_back("Probit '" + spec.name + "' not estimated: " + spec.outcome + " does not vary.");
      continue;
    }
    const ProbitFit& fit = it->second;
    for (std::size_t j = 0; j < fit.names.size(); ++j) {
      const auto i = static_cast<Eigen::Index>(j);
      t.at(*t.row_index(fit.names[j]), c) =
          Cell::coefficient(fit.coefficients(i), std::sqrt(std::max(fit.covariance(i, i), 0.0)));
    }
    t.at(t.rows() - 2, c) = Cell::number(static_cast<double>(fit.n));
    t.at(t.rows() - 1, c) = Cell::number(fit.log_likelihood);
  }
  t.footnotes.push_back(kStarsNote);
  t.footnotes.push_back("Standard errors from the inverse information matrix are given in parenthesis.");
  return t;
}

struct IVOutcome {
  std::string name;
  FitResult ols;
  TwoSLSFit iv;
  std::vector<TestResult> weak;
  TestResult bp, hansen, dwh;
  std::vector<std::string> warnings;
};

IVOutcome run_iv_sample(const RunConfig& cfg, const IVSample& smp, const HeckmanResult& base) {
  const IVConfig& ivc = *cfg.iv;
  IVOutcome out;
  out.name = smp.name;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < base.data.size(); ++i)
    if (matches(base.data, base.data[i], smp.filter)) rows.push_back(i);
  const Dataset ds = base.data.subset(rows, "select", "IV sample " + smp.name);
  const DesignMatrix design = encode_design(ds, base.formula);
  out.ols = fit_with(design, cfg.covariance);
  out.bp = breusch_pagan(out.ols, design);

  const auto endo = design.column_index(ivc.endogenous);
  if (!endo) throw config_error("UnknownColumn", "endogenous '" + ivc.endogenous + "' is not a wage regressor");
  std::vector<std::string> exog_names;
  for (const auto& n : design.column_names)
    if (n != ivc.endogenous) exog_names.push_back(n);
  const DesignMatrix exog = select_columns(design, exog_names);

  InstrumentSet set = external_instruments(ds, design, ivc.external);
  const auto drivers = ivc.drivers.empty() ? ivc.external : ivc.drivers;
  Eigen::MatrixXd z(design.n(), static_cast<Eigen::Index>(drivers.size()));
  for (std::size_t j = 0; j < drivers.size(); ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    if (auto e = exog.column_index(drivers[j])) {
      z.col(col) = exog.columns.col(*e);
      continue;
    }
    for (Eigen::Index i = 0; i < design.n(); ++i) {
      auto v = numeric_field(ds[design.source_rows[static_cast<std::size_t>(i)]], drivers[j]);
      if (!v) throw data_error("MissingValue", "driver '" + drivers[j] + "' missing");
      z(i, col) = *v;
    }
  }
  GeneratedInstruments g = generate_lewbel_instruments(exog, design.column(ivc.endogenous), z, drivers);
  set.generated = std::move(g.columns);
  set.generated_names = std::move(g.names);
  out.warnings = std::move(g.warnings);

  out.iv = fit_2sls(design, {ivc.endogenous}, set, cfg.covariance);
  out.weak = weak_instrument_stats(out.iv);
  out.hansen = hansen_j(out.iv);
  out.dwh = durbin_wu_hausman(out.iv);
  return out;
}

Cell test_cell(const TestResult& t) {
  if (!t.defined) return Cell::label(t.note.empty() ? "n/a" : t.note);
  return Cell{t.statistic, t.p_value, 0, {}};
}

const TestResult& find_test(const std::vector<TestResult>& tests, const std::string& prefix) {
  for (const auto& t : tests)
    if (t.name.rfind(prefix, 0) == 0) return t;
  throw numerical_error("MissingTest", prefix);
}

}  // namespace

PreparedData prepare_data(const RunConfig& cfg, const Dataset& raw) {
  PreparedData p;
  Dataset pop = filter_analysis_sample(raw, cfg.population);
  FilterSpec employed;
  employed.conditions.push_back({"employment_status", {"wage_salary", "self_employed"}, std::nullopt, std::nullopt});
  p.occupation_stats = compute_occupation_stats(filter_analysis_sample(pop, employed));
  pop = attach_eom_columns(pop, p.occupation_stats, cfg.threshold);
  pop = attach_network(pop, migrant_network(raw));
  std::vector<std::string> comparison(pop.size(), "other");
  for (std::size_t i = 0; i < pop.size(); ++i) {
    if (matches(pop, pop[i], cfg.migrants)) comparison[i] = cfg.migrant_label;
    else if (matches(pop, pop[i], cfg.non_migrants)) comparison[i] = cfg.non_migrant_label;
  }
  pop = pop.with_label_column("comparison", comparison);
  p.population = trim_wage_tails(pop, cfg.trim_fraction);
  return p;
}

ReportBundle run_replication(const RunConfig& cfg) {
  const Dataset raw = stage("ingest", [&] { return load_config_data(cfg); });
  return run_replication(cfg, raw);
}

ReportBundle run_replication(const RunConfig& cfg, const Dataset& raw) {
  stage("validate", [&] { validate_run_config(cfg, raw); });
  ReportBundle bundle;
  const PreparedData prep = stage("prepare", [&] { return prepare_data(cfg, raw); });
  const Dataset& pop = prep.population;

  // Table 1: migrants against non-migrants.
  const GroupFits mig = stage("wage equations: " + cfg.migrant_label, [&] { return fit_group(cfg, pop, cfg.migrants); });
  const GroupFits non = stage("wage equations: " + cfg.non_migrant_label, [&] { return fit_group(cfg, pop, cfg.non_migrants); });
  {
    ReportTable t = wage_table("Returns to education for wage/salary employed in working-age group",
                               {{cfg.migrant_label, mig.fits()}, {cfg.non_migrant_label, non.fits()}});
    t.footnotes.push_back(kStarsNote);
    t.footnotes.push_back(covariance_note(cfg));
    std::set<std::string> seen;
    for (const auto* g : {&mig, &non})
      for (const auto* h : {&g->attained, &g->decomposed})
        for (const auto& n : h->notes)
          if (seen.insert(n).second) t.footnotes.push_back((g == &mig ? cfg.migrant_label : cfg.non_migrant_label) + ": " + n);
    bundle.tables.emplace_back("table1", std::move(t));
  }

  // Tables 2-5: subgroup axes among migrants.
  for (std::size_t a = 0; a < cfg.axes.size(); ++a) {
    const auto& axis = cfg.axes[a];
    ReportTable t = stage("subgroups: " + axis.name, [&] {
      return subgroup_table(cfg, mig, axis,
                            "Returns to education and EOM for " + cfg.migrant_label + ": by " + axis.title);
    });
    bundle.tables.emplace_back("table" + std::to_string(a + 2) + "_" + axis.name, std::move(t));
  }

  // Table 6 and the IV diagnostics.
  if (cfg.iv) {
    std::vector<IVOutcome> ivs;
    for (const auto& smp : cfg.iv->samples)
      ivs.push_back(stage("iv: " + smp.name, [&] {
        return run_iv_sample(cfg, smp, smp.base == "migrants" ? mig.attained : non.attained);
      }));
    ReportTable t6;
    t6.title = "Returns to education (Lewbel IV model)";
    t6.add_row("Attained education", {});
    t6.add_row("Observations", {});
    t6.add_row("R-squared", {});
    for (const auto& o : ivs) {
      for (const auto* f : {&o.ols, &o.iv.second_stage}) {
        const std::size_t c = t6.add_column(o.name + ": " + (f == &o.ols ? "OLS" : "Lewbel IV"));
        t6.at(0, c) = coef_cell(*f, cfg.iv->endogenous);
        t6.at(1, c) = Cell::number(static_cast<double>(f->n));
        t6.at(2, c) = Cell::number(f->r_squared);
      }
      for (const auto& w : o.warnings) t6.footnotes.push_back(o.name + ": " + w);
    }
    t6.footnotes.push_back(kStarsNote);
    t6.footnotes.push_back(covariance_note(cfg));
    t6.footnotes.push_back("Only the second-stage estimate for the education variable is reported.");
    bundle.tables.emplace_back("table6", std::move(t6));

    ReportTable a12;
    a12.title = "Diagnostic tests for Lewbel IV models";
    const std::string endo = cfg.iv->endogenous;
    a12.add_row("Breusch-Pagan / Cook-Weisberg test for heteroskedasticity", {});
    a12.add_row("Weak instrument test (Sanderson-Windmeijer F)", {});
    a12.add_row("Underidentification test (Anderson canonical correlation LM)", {});
    a12.add_row("Weak identification test (Cragg-Donald Wald F)", {});
    a12.add_row("Hansen J statistic", {});
    a12.add_row("Durbin-Wu-Hausman endogeneity test (F)", {});
    for (const auto& o : ivs) {
      const std::size_t c = a12.add_column(o.name);
      a12.at(0, c) = test_cell(o.bp);
      a12.at(1, c) = test_cell(find_test(o.weak, "Sanderson-Windmeijer F (" + endo + ")"));
      a12.at(2, c) = test_cell(find_test(o.weak, "Anderson"));
      a12.at(3, c) = test_cell(find_test(o.weak, "Cragg-Donald"));
      a12.at(4, c) = test_cell(o.hansen);
      a12.at(5, c) = test_cell(o.dwh);
    }
    a12.footnotes.push_back("p-values are in parenthesis.");
    a12.footnotes.push_back(
        "Underidentification uses the homoskedastic Anderson canonical-correlation LM statistic.");
    bundle.tables.emplace_back("tableA12", std::move(a12));
  }

  // Collinearity of the education components.
  {
    ReportTable vif = stage("collinearity", [&] {
      const DesignMatrix& d = mig.decomposed.design;
      std::vector<std::string> names{"required_edu", "surplus_edu", "deficit_edu"};
      Eigen::MatrixXd cols(d.n(), 3);
      for (Eigen::Index j = 0; j < 3; ++j) cols.col(j) = d.column(names[static_cast<std::size_t>(j)]);
      ReportTable t = pairwise_corr_vif(cols, names, d.weights);
      t.title += " (" + cfg.migrant_label + ")";
      return t;
    });
    bundle.tables.emplace_back("tableA12_vif", std::move(vif));
  }

  bundle.tables.emplace_back("tableA2", stage("selection probits", [&] {
                               return probit_table(mig.attained.probits, cfg.selections);
                             }));

  bundle.tables.emplace_back("tableA11", stage("sensitivity", [&] {
    FilterSpec groups;
    groups.conditions.push_back({"comparison", {cfg.migrant_label, cfg.non_migrant_label}, std::nullopt, std::nullopt});
    groups.conditions.push_back({"employment_status", {"wage_salary", "self_employed"}, std::nullopt, std::nullopt});
    const Dataset employed = filter_analysis_sample(pop, groups);
    return sensitivity_sweep(employed, cfg.sensitivity_k, cfg.sensitivity_centers, {"comparison"},
                             &prep.occupation_stats);
  }));

  bundle.provenance = provenance_json(pop);
  return bundle;
}

std::vector<fs::path> write_bundle(const ReportBundle& bundle, const fs::path& dir, const std::vector<Format>& formats) {
  std::vector<fs::path> written;
  try {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw config_error("IoError", "cannot create " + dir.string() + ": " + ec.message());
    for (const auto& [id, table] : bundle.tables)
      for (Format f : formats) {
        const fs::path p = dir / (id + extension(f));
        emit(table, f, p);
        written.push_back(p);
      }
    const fs::path prov = dir / "provenance.json";
    std::ofstream out(prov, std::ios::binary);
    if (!out) throw config_error("IoError", "cannot write " + prov.string());
    out << bundle.provenance << '\n';
    out.close();
    written.push_back(prov);
  } catch (...) {
    std::error_code ec;
    for (const auto& p : written) fs::remove(p, ec);
    throw;
  }
  return written;
}

}  // namespace eom
