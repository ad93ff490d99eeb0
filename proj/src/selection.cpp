#include "eom/selection.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "eom/error.hpp"
#include "eom/normal.hpp"

namespace eom {

Eigen::VectorXd ProbitFit::standard_errors() const { return covariance.diagonal().cwiseMax(0.0).cwiseSqrt(); }

double ProbitFit::coef(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return coefficients(static_cast<Eigen::Index>(i));
  throw config_error("UnknownColumn", std::string(name));
}

double ProbitFit::se(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return std::sqrt(std::max(covariance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)), 0.0));
  throw config_error("UnknownColumn", std::string(name));
}

namespace {

Eigen::VectorXd unit_mean(const Eigen::VectorXd& w) { return w * (static_cast<double>(w.size()) / w.sum()); }

struct Evaluation {
  double ll = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd information;  // -Hessian
};

Evaluation evaluate(const Eigen::MatrixXd& x, const Eigen::VectorXd& s, const Eigen::VectorXd& w,
                    const Eigen::VectorXd& b, bool derivatives) {
  Evaluation ev;
  const Eigen::VectorXd z = x * b;
  Eigen::VectorXd g(x.rows()), d(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (s(i) > 0.5) {
      ev.ll += w(i) * normal::log_cdf(z(i));
      const double lam = normal::mills(z(i));
      g(i) = lam;
      d(i) = lam * (z(i) + lam);
    } else {
      ev.ll += w(i) * normal::log_cdf(-z(i));
      const double lam = normal::mills(-z(i));
      g(i) = -lam;
      d(i) = lam * (lam - z(i));
    }
  }
  if (derivatives) {
    ev.score = x.transpose() * (w.array() * g.array()).matrix();
    const Eigen::MatrixXd xd = x.array().colwise() * (w.array() * d.array()).sqrt();
    ev.information = xd.transpose() * xd;
  }
  return ev;
}

void check_response(const DesignMatrix& design) {
  bool any0 = false, any1 = false;
  for (Eigen::Index i = 0; i < design.n(); ++i) {
    const double v = design.response(i);
    if (v == 1.0) any1 = true;
    else if (v == 0.0) any0 = true;
    else throw data_error("NonBinaryResponse", "probit response must be 0 or 1, found " + std::to_string(v));
  }
  if (!any0 || !any1) throw numerical_error("DegenerateResponse", "probit response does not vary");
}

void check_separation(const DesignMatrix& design) {
  for (Eigen::Index j = 0; j < design.k(); ++j) {
    const auto col = design.columns.col(j);
    if (col.maxCoeff() == col.minCoeff()) continue;
    double lo0 = INFINITY, hi0 = -INFINITY, lo1 = INFINITY, hi1 = -INFINITY;
    for (Eigen::Index i = 0; i < design.n(); ++i) {
      if (design.response(i) == 1.0) {
        lo1 = std::min(lo1, col(i));
        hi1 = std::max(hi1, col(i));
      } else {
        lo0 = std::min(lo0, col(i));
        hi0 = std::max(hi0, col(i));
      }
    }
    if (hi0 <= lo1 || hi1 <= lo0)
      throw numerical_error("PerfectSeparation", "column '" + design.column_names[static_cast<std::size_t>(j)] +
                                                     "' separates the response");
  }
}

Eigen::VectorXd starting_values(const DesignMatrix& design) {
  const FitResult lpm = fit_wls(design);
  Eigen::VectorXd b = 2.5 * lpm.coefficients;
  if (auto i = lpm.index_of(kInterceptName)) b(*i) = 2.5 * (lpm.coefficients(*i) - 0.5);
  return b;
}

}  // namespace

double probit_log_likelihood(const DesignMatrix& design, const Eigen::VectorXd& b) {
  return evaluate(design.columns, design.response, unit_mean(design.weights), b, false).ll;
}

Eigen::VectorXd probit_score(const DesignMatrix& design, const Eigen::VectorXd& b) {
  return evaluate(design.columns, design.response, unit_mean(design.weights), b, true).score;
}

ProbitFit fit_probit(const DesignMatrix& design, const ProbitOptions& options) {
  design.check();
  check_response(design);
  check_separation(design);

  const Eigen::VectorXd w = unit_mean(design.weights);
  // Iterate on columns scaled to unit max-abs; the optimum maps back exactly.
  const Eigen::VectorXd scale = design.columns.cwiseAbs().colwise().maxCoeff().transpose().cwiseMax(1e-300);
  const Eigen::MatrixXd x = design.columns * scale.cwiseInverse().asDiagonal();
  Eigen::VectorXd b = starting_values(design).cwiseProduct(scale);
  Evaluation ev = evaluate(x, design.response, w, b, true);
  auto gradient_norm = [&] { return ev.score.cwiseQuotient(scale).lpNorm<Eigen::Infinity>(); };

  ProbitFit fit;
  fit.names = design.column_names;
  fit.n = design.n();
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    if (gradient_norm() < options.tolerance) break;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(ev.information);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw numerical_error("SingularHessian", "probit information matrix is not positive definite");
    const Eigen::VectorXd step = ldlt.solve(ev.score);
    // Once the predicted gain is below the resolution of the log-likelihood
    // the full Newton step is taken without a line search.
    const bool local = ev.score.dot(step) < 1e-12 * std::max(1.0, std::abs(ev.ll));
    double t = 1.0;
    bool moved = local;
    for (int h = 0; !local && h <= options.max_halvings; ++h, t *= 0.5) {
      const double ll = evaluate(x, design.response, w, b + t * step, false).ll;
      if (std::isfinite(ll) && ll >= ev.ll) {
        moved = true;
        break;
      }
    }
    if (!moved) break;
    b += t * step;
    ev = evaluate(x, design.response, w, b, true);
  }

  fit.coefficients = b.cwiseQuotient(scale);
  fit.log_likelihood = ev.ll;
  fit.iterations = it;
  fit.gradient_norm = gradient_norm();
  fit.converged = fit.gradient_norm < options.tolerance;
  if (!fit.converged)
    throw numerical_error("NotConverged", "probit stopped after " + std::to_string(it) +
                                              " iterations with gradient norm " + std::to_string(fit.gradient_norm));
  const Eigen::MatrixXd cov = scale.cwiseInverse().asDiagonal() * ev.information.inverse() * scale.cwiseInverse().asDiagonal();
  fit.covariance = 0.5 * (cov + cov.transpose());
  return fit;
}

double inverse_mills(double z, MillsBranch branch) {
  return branch == MillsBranch::yes ? normal::mills(z) : -normal::mills(-z);
}

Eigen::VectorXd inverse_mills(const ProbitFit& fit, const DesignMatrix& design, MillsBranch branch) {
  if (!fit.converged) throw numerical_error("NotConverged", "probit fit did not converge");
  if (design.column_names != fit.names) throw config_error("ColumnMismatch", "design columns differ from the probit");
  const Eigen::VectorXd z = design.columns * fit.coefficients;
  return z.unaryExpr([branch](double v) { return inverse_mills(v, branch); });
}

double NetworkIndex::at(const std::string& district) const {
  auto it = network.find(district);
  return it == network.end() ? 0.0 : it->second;
}

NetworkIndex migrant_network(const Dataset& ds) {
  NetworkIndex idx;
  for (const auto& r : ds.rows()) {
    if (!r.migrant) {
      idx.network.try_emplace(r.district_id, 0.0);
      continue;
    }
    if (!r.years_since_migration)
      throw data_error("MissingField", "migrant " + r.person_id + " has no years_since_migration");
    idx.network[r.district_id] += *r.years_since_migration;
  }
  return idx;
}

Dataset attach_network(const Dataset& ds, const NetworkIndex& index) {
  std::vector<std::optional<double>> net(ds.size()), sq(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    net[i] = index.at(ds[i].district_id);
    sq[i] = *net[i] * *net[i];
  }
  return ds.with_numeric_column("network", net).with_numeric_column("network_sq", sq);
}

LambdaMode parse_lambda_mode(std::string_view s) {
  if (s == "yes_branch") return LambdaMode::yes_branch;
  if (s == "by_outcome") return LambdaMode::by_outcome;
  throw config_error("BadLambdaMode", "lambda mode must be yes_branch or by_outcome, got '" + std::string(s) + "'");
}

namespace {

ModelSpec selection_formula(const SelectionSpec& spec) {
  ModelSpec m = spec.regressors;
  m.response = spec.outcome;
  m.cluster.clear();
  return m;
}

void check_exclusions(const SelectionSpec& spec, const std::set<std::string>& wage_fields) {
  if (spec.exclusions.empty())
    throw config_error("NoExclusionVariable", "selection '" + spec.name + "' declares no exclusion variable");
  const auto sel = spec.regressors.referenced_fields();
  for (const auto& e : spec.exclusions) {
    if (wage_fields.count(e))
      throw config_error("ExclusionVariableInWageEquation", "'" + e + "' (selection '" + spec.name + "')");
    if (std::find(sel.begin(), sel.end(), e) == sel.end())
      throw config_error("ExclusionNotInSelection", "'" + e + "' is not a regressor of selection '" + spec.name + "'");
  }
}

}  // namespace

ProbitFit fit_selection(const Dataset& full, const SelectionSpec& spec) {
  const Dataset sample = filter_analysis_sample(full, spec.sample);
  ProbitFit fit = fit_probit(encode_design(sample, selection_formula(spec)));
  fit.outcome = spec.outcome;
  return fit;
}

HeckmanResult heckman_wage_fit(const Dataset& full, const FilterSpec& wage_sample, const ModelSpec& wage_formula,
                               const std::vector<SelectionSpec>& selections, CovarianceKind covariance) {
  const auto wf = wage_formula.referenced_fields();
  const std::set<std::string> wage_fields(wf.begin(), wf.end());
  for (const auto& s : selections) check_exclusions(s, wage_fields);

  HeckmanResult out;
  Dataset wage_rows = filter_analysis_sample(full, wage_sample);
  ModelSpec formula = wage_formula;

  for (const auto& spec : selections) {
    const Dataset sample = filter_analysis_sample(full, spec.sample);
    const ModelSpec sel = selection_formula(spec);
    const DesignMatrix probit_design = encode_design(sample, sel);
    ProbitFit fit;
    try {
      fit = fit_probit(probit_design);
    } catch (const Error& e) {
      if (e.code() != "DegenerateResponse") throw;
      out.notes.push_back("Selection '" + spec.name + "' skipped: " + spec.outcome + " does not vary.");
      continue;
    }
    fit.outcome = spec.outcome;

    // Mills ratios for the wage rows that belong to the probit's sample.
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < wage_rows.size(); ++i)
      if (matches(wage_rows, wage_rows[i], spec.sample)) eligible.push_back(i);
    const Dataset eligible_rows = wage_rows.subset(eligible, "select", "selection sample " + spec.name);
    std::vector<std::optional<double>> lambda(wage_rows.size());
    bool any_selected = false, any_unselected = false;
    if (!eligible_rows.empty()) {
      const DesignMatrix d = encode_design(eligible_rows, sel, &probit_design);
      const Eigen::VectorXd z = d.columns * fit.coefficients;
      for (Eigen::Index r = 0; r < d.n(); ++r) {
        const bool selected = d.response(r) == 1.0;
        (selected ? any_selected : any_unselected) = true;
        const MillsBranch branch =
            spec.mode == LambdaMode::by_outcome && !selected ? MillsBranch::no : MillsBranch::yes;
        lambda[eligible[d.source_rows[static_cast<std::size_t>(r)]]] = inverse_mills(z(r), branch);
      }
    }
    out.probits.emplace_back(spec.name, fit);
    if (spec.mode == LambdaMode::yes_branch) {
      if (!any_selected) {
        out.notes.push_back("Inverse Mills ratio for '" + spec.name + "' omitted: no wage row has " + spec.outcome +
                            " = 1.");
        continue;
      }
      if (any_unselected)
        throw config_error("MixedSelectionOutcome", "wage rows mix both outcomes of '" + spec.outcome +
                                                        "'; use by_outcome mode");
    }
    wage_rows = wage_rows.with_numeric_column(spec.lambda_name(), lambda);
    formula.numeric.push_back(spec.lambda_name());
    out.lambda_columns.push_back(spec.lambda_name());
  }

  out.design = encode_design(wage_rows, formula);
  out.data = wage_rows;
  out.formula = formula;
  out.wage = fit_wls(out.design);
  if (covariance != CovarianceKind::classical) out.wage = with_covariance(out.wage, out.design, covariance);
  return out;
}

}  // namespace eom
