#include "eom/iv.hpp"

#include <algorithm>
#include <set>

#include "eom/error.hpp"

namespace eom {

GeneratedInstruments generate_lewbel_instruments(const DesignMatrix& exog, const Eigen::VectorXd& endog,
                                                 const std::vector<std::string>& drivers) {
  Eigen::MatrixXd z(exog.n(), static_cast<Eigen::Index>(drivers.size()));
  for (std::size_t j = 0; j < drivers.size(); ++j) {
    auto c = exog.column_index(drivers[j]);
    if (!c) throw config_error("UnknownColumn", "driver '" + drivers[j] + "' is not an exogenous column");
    z.col(static_cast<Eigen::Index>(j)) = exog.columns.col(*c);
  }
  return generate_lewbel_instruments(exog, endog, z, drivers);
}

GeneratedInstruments generate_lewbel_instruments(const DesignMatrix& exog, const Eigen::VectorXd& endog,
                                                 const Eigen::MatrixXd& drivers, const std::vector<std::string>& names) {
  if (names.empty()) throw config_error("NoDrivers", "Lewbel instruments need at least one driver column");
  if (static_cast<Eigen::Index>(names.size()) != drivers.cols())
    throw config_error("ColumnMismatch", "one name per driver column required");
  if (endog.size() != exog.n() || drivers.rows() != exog.n())
    throw config_error("ColumnMismatch", "column lengths differ from the design");
  const auto& w = exog.weights;
  const Eigen::VectorXd e = detail::least_squares(exog.columns, endog, w).residuals;

  GeneratedInstruments out;
  std::vector<Eigen::VectorXd> cols;
  for (std::size_t j = 0; j < names.size(); ++j) {
    const auto z = drivers.col(static_cast<Eigen::Index>(j));
    if (z.maxCoeff() == z.minCoeff()) {
      out.warnings.push_back("Driver '" + names[j] + "' is constant; its generated instrument was dropped.");
      continue;
    }
    Eigen::VectorXd g = (z.array() - w.dot(z) / w.sum()).matrix().cwiseProduct(e);
    g.array() -= w.dot(g) / w.sum();
    cols.push_back(std::move(g));
    out.names.push_back("lewbel_" + names[j]);
  }
  out.columns.resize(exog.n(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.columns.col(static_cast<Eigen::Index>(j)) = cols[j];
  return out;
}

Eigen::MatrixXd InstrumentSet::excluded() const {
  const Eigen::Index n = std::max(external.rows(), generated.rows());
  Eigen::MatrixXd z(n, count());
  if (external.cols()) z.leftCols(external.cols()) = external;
  if (generated.cols()) z.rightCols(generated.cols()) = generated;
  return z;
}

std::vector<std::string> InstrumentSet::names() const {
  auto out = external_names;
  out.insert(out.end(), generated_names.begin(), generated_names.end());
  return out;
}

InstrumentSet external_instruments(const Dataset& ds, const DesignMatrix& design, const std::vector<std::string>& fields) {
  InstrumentSet set;
  set.external.resize(design.n(), static_cast<Eigen::Index>(fields.size()));
  for (std::size_t j = 0; j < fields.size(); ++j) {
    if (ds.kind(fields[j]) != FieldKind::numeric)
      throw config_error(ds.has_field(fields[j]) ? "NotNumeric" : "UnknownField", fields[j]);
    for (Eigen::Index i = 0; i < design.n(); ++i) {
      const auto& r = ds[design.source_rows[static_cast<std::size_t>(i)]];
      auto v = numeric_field(r, fields[j]);
      if (!v) throw data_error("MissingValue", "instrument '" + fields[j] + "' missing for " + r.person_id);
      set.external(i, static_cast<Eigen::Index>(j)) = *v;
    }
  }
  set.external_names = fields;
  return set;
}

TwoSLSFit fit_2sls(const DesignMatrix& design, const std::vector<std::string>& endogenous,
                   const InstrumentSet& instruments, CovarianceKind covariance) {
  design.check();
  if (endogenous.empty()) throw config_error("NoEndogenous", "2SLS needs at least one endogenous column");
  const auto inst_names = instruments.names();
  if (static_cast<Eigen::Index>(inst_names.size()) < static_cast<Eigen::Index>(endogenous.size()))
    throw config_error("UnderIdentified", std::to_string(inst_names.size()) + " excluded instrument(s) for " +
                                              std::to_string(endogenous.size()) + " endogenous regressor(s)");
  for (const auto& z : inst_names)
    if (design.column_index(z)) throw config_error("InstrumentNameCollision", "'" + z + "' is also a regressor");
  const Eigen::MatrixXd excluded = instruments.excluded();
  if (excluded.rows() != design.n()) throw config_error("ColumnMismatch", "instrument rows differ from design rows");

  TwoSLSFit out;
  std::vector<Eigen::Index> endo_idx, exo_idx;
  const std::set<std::string> endo_set(endogenous.begin(), endogenous.end());
  for (const auto& name : endogenous) {
    auto j = design.column_index(name);
    if (!j) throw config_error("UnknownColumn", "endogenous column '" + name + "' not in design");
    endo_idx.push_back(*j);
  }
  for (Eigen::Index j = 0; j < design.k(); ++j)
    if (!endo_set.count(design.column_names[static_cast<std::size_t>(j)])) {
      exo_idx.push_back(j);
      out.exogenous_names.push_back(design.column_names[static_cast<std::size_t>(j)]);
    }
  out.endogenous_names = endogenous;
  out.instrument_names = inst_names;
  out.y = design.response;
  out.weights = design.weights;
  out.cluster_ids = design.cluster_ids;
  out.exogenous = design.columns(Eigen::all, exo_idx);
  out.endogenous = design.columns(Eigen::all, endo_idx);
  out.instruments = excluded;

  Eigen::MatrixXd zfull(design.n(), out.exogenous.cols() + excluded.cols());
  zfull << out.exogenous, excluded;
  auto znames = out.exogenous_names;
  znames.insert(znames.end(), inst_names.begin(), inst_names.end());

  DesignMatrix second = design;
  for (std::size_t m = 0; m < endo_idx.size(); ++m) {
    DesignMatrix first = make_design(out.endogenous.col(static_cast<Eigen::Index>(m)), zfull, design.weights, znames);
    first.cluster_ids = design.cluster_ids;
    first.source_rows = design.source_rows;
    FitResult f = fit_wls(first);
    if (covariance != CovarianceKind::classical) f = with_covariance(std::move(f), first, covariance);
    second.columns.col(endo_idx[m]) = f.fitted;
    out.first_stages.push_back(std::move(f));
  }
  out.projected = second.columns;

  FitResult fit = fit_wls(second);
  fit.fitted = design.columns * fit.coefficients;
  fit.residuals = design.response - fit.fitted;
  fit.ssr = (design.weights.array() * fit.residuals.array().square()).sum();
  fit.r_squared = detail::weighted_r_squared(design.response, fit.residuals, design.weights);
  if (covariance == CovarianceKind::classical) {
    fit.covariance = (fit.ssr / static_cast<double>(fit.n - fit.k)) * fit.bread;
  } else {
    fit.covariance =
        detail::sandwich(out.projected, design.weights, fit.residuals, fit.bread, covariance, design.cluster_ids);
  }
  fit.estimator = covariance;
  out.second_stage = std::move(fit);
  return out;
}

}  // namespace eom
