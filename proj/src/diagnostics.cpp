#include "eom/diagnostics.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "eom/error.hpp"

namespace eom {

std::string TestResult::decision() const {
  if (!defined) return "undefined";
  return reject_at_05() ? "reject" : "fail_to_reject";
}

double f_upper_p(double statistic, double df1, double df2) {
  if (!(statistic > 0.0)) return 1.0;
  if (std::isinf(statistic)) return 0.0;
  return boost::math::cdf(boost::math::complement(boost::math::fisher_f(df1, df2), statistic));
}

double chi2_upper_p(double statistic, double df) {
  if (!(statistic > 0.0)) return 1.0;
  if (std::isinf(statistic)) return 0.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(df), statistic));
}

namespace {

TestResult f_result(std::string name, double stat, double df1, double df2) {
  TestResult t;
  t.name = std::move(name);
  t.statistic = std::max(stat, 0.0);
  t.distribution = "F";
  t.df1 = df1;
  t.df2 = df2;
  t.p_value = f_upper_p(t.statistic, df1, df2);
  return t;
}

TestResult chi2_result(std::string name, double stat, double df) {
  TestResult t;
  t.name = std::move(name);
  t.statistic = std::max(stat, 0.0);
  t.distribution = "chi2";
  t.df1 = df;
  t.p_value = chi2_upper_p(t.statistic, df);
  return t;
}

Eigen::MatrixXd hcat(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

// Residual of each column of `a` after projecting on the span of `basis`.
Eigen::MatrixXd residualize(const Eigen::MatrixXd& a, const Eigen::MatrixXd& basis) {
  if (basis.cols() == 0) return a;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(basis);
  return a - basis * qr.solve(a);
}

// Orthonormal basis of the column span of `a` (assumed full rank).
Eigen::MatrixXd orthonormal(const Eigen::MatrixXd& a) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  return qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
}

}  // namespace

TestResult durbin_wu_hausman(const TwoSLSFit& fit) {
  const Eigen::MatrixXd x = hcat(fit.exogenous, fit.endogenous);
  Eigen::MatrixXd v(x.rows(), fit.endogenous.cols());
  for (Eigen::Index j = 0; j < v.cols(); ++j) v.col(j) = fit.first_stages[static_cast<std::size_t>(j)].residuals;
  const double ssr_r = detail::least_squares(x, fit.y, fit.weights).ssr;
  const double ssr_u = detail::least_squares(hcat(x, v), fit.y, fit.weights).ssr;
  const auto m = static_cast<double>(v.cols());
  const double dfd = static_cast<double>(x.rows() - x.cols()) - m;
  return f_result("Durbin-Wu-Hausman", ((ssr_r - ssr_u) / m) / (ssr_u / dfd), m, dfd);
}

TestResult durbin_wu_hausman(const DesignMatrix& design, const std::vector<std::string>& endogenous,
                             const InstrumentSet& instruments) {
  return durbin_wu_hausman(fit_2sls(design, endogenous, instruments, CovarianceKind::classical));
}

TestResult breusch_pagan(const FitResult& fit, const DesignMatrix& design) {
  const Eigen::VectorXd& w = design.weights;
  if (fit.residuals.size() != design.n()) throw config_error("ColumnMismatch", "fit residuals do not match design");
  const Eigen::VectorXd e2 = fit.residuals.array().square();
  const double sigma2 = w.dot(e2) / w.sum();
  if (!(sigma2 > 0.0)) return chi2_result("Breusch-Pagan", 0.0, 1.0);
  const Eigen::VectorXd u = e2 / sigma2;
  Eigen::MatrixXd aux(design.n(), 2);
  aux.col(0).setOnes();
  aux.col(1) = fit.fitted;
  double r2 = 0.0;
  if (fit.fitted.maxCoeff() > fit.fitted.minCoeff()) {
    const auto ls = detail::least_squares(aux, u, w);
    r2 = detail::weighted_r_squared(u, ls.residuals, w);
  }
  return chi2_result("Breusch-Pagan", static_cast<double>(design.n()) * r2, 1.0);
}

ChowResult chow_test(const Dataset& ds, const ModelSpec& formula, const std::string& group_field,
                     const std::string& target) {
  if (!ds.has_field(group_field)) throw config_error("UnknownField", group_field);
  std::map<std::string, std::vector<std::size_t>> by_group;
  for (std::size_t i = 0; i < ds.size(); ++i) by_group[group_label(ds, ds[i], {group_field})].push_back(i);

  ModelSpec spec = formula;
  spec.cluster.clear();
  std::vector<DesignMatrix> blocks;
  ChowResult out;
  for (const auto& [g, rows] : by_group) {
    DesignMatrix d = encode_design(ds.subset(rows, "select", group_field + " = " + g), spec);
    if (d.n() == 0) continue;
    if (!d.column_index(target)) throw config_error("UnknownColumn", "target '" + target + "' not in the formula");
    if (d.n() <= d.k())
      throw data_error("GroupTooSmall", "group '" + g + "' has n = " + std::to_string(d.n()) + ", k = " +
                                            std::to_string(d.k()));
    out.groups.push_back(g);
    blocks.push_back(std::move(d));
  }
  if (blocks.size() < 2)
    throw data_error("TooFewGroups", "Chow test on '" + group_field + "' needs at least two non-empty groups");

  Eigen::Index n = 0, k = 0;
  for (const auto& b : blocks) {
    n += b.n();
    k += b.k();
  }
  Eigen::MatrixXd xu = Eigen::MatrixXd::Zero(n, k);
  Eigen::MatrixXd xr = Eigen::MatrixXd::Zero(n, k - static_cast<Eigen::Index>(blocks.size()) + 1);
  Eigen::VectorXd y(n), w(n);
  std::vector<std::string> names;
  std::vector<std::size_t> source;
  Eigen::Index r0 = 0, cu = 0, cr = 0;
  for (std::size_t g = 0; g < blocks.size(); ++g) {
    const auto& b = blocks[g];
    const Eigen::Index t = *b.column_index(target);
    xu.block(r0, cu, b.n(), b.k()) = b.columns;
    for (Eigen::Index j = 0; j < b.k(); ++j) {
      names.push_back("[" + out.groups[g] + "] " + b.column_names[static_cast<std::size_t>(j)]);
      if (j == t) xr.block(r0, xr.cols() - 1, b.n(), 1) = b.columns.col(j);
      else xr.block(r0, cr++, b.n(), 1) = b.columns.col(j);
    }
    y.segment(r0, b.n()) = b.response;
    w.segment(r0, b.n()) = b.weights;
    for (auto s : b.source_rows) source.push_back(by_group[out.groups[g]][s]);
    r0 += b.n();
    cu += b.k();
  }
  DesignMatrix du = make_design(y, xu, w, names);
  du.source_rows = source;
  out.stacked = fit_wls(du);
  const double ssr_r = detail::least_squares(xr, y, w).ssr;
  const double ssr_u = out.stacked.ssr;
  const auto groups = static_cast<double>(blocks.size());
  const double dfd = static_cast<double>(n - k);
  out.test = f_result("Chow (" + target + " by " + group_field + ")", ((ssr_r - ssr_u) / (groups - 1.0)) / (ssr_u / dfd),
                      groups - 1.0, dfd);
  return out;
}

TestResult chow_coefficient_equality(const Dataset& ds, const ModelSpec& formula, const std::string& group_field,
                                     const std::string& target) {
  return chow_test(ds, formula, group_field, target).test;
}

std::vector<TestResult> weak_instrument_stats(const TwoSLSFit& fit) {
  const Eigen::VectorXd sw = fit.weights.cwiseSqrt();
  const Eigen::MatrixXd xs = fit.exogenous.array().colwise() * sw.array();
  const Eigen::MatrixXd ds = residualize(fit.endogenous.array().colwise() * sw.array(), xs);
  const Eigen::MatrixXd zs = residualize(fit.instruments.array().colwise() * sw.array(), xs);
  const Eigen::Index n = ds.rows(), m = ds.cols(), l = zs.cols();
  const double dfd = static_cast<double>(n - xs.cols() - l);
  const auto lf = static_cast<double>(l);

  const Eigen::MatrixXd q = orthonormal(zs);
  const Eigen::MatrixXd qd = q.transpose() * ds;
  const Eigen::MatrixXd dpd = qd.transpose() * qd;          // D' P D
  const Eigen::MatrixXd ddd = ds.transpose() * ds;          // D' D
  const Eigen::MatrixXd dmd = ddd - dpd;                    // D' M D

  std::vector<TestResult> out;
  for (Eigen::Index j = 0; j < m; ++j) {
    const std::string& name = fit.endogenous_names[static_cast<std::size_t>(j)];
    out.push_back(f_result("First-stage partial F (" + name + ")", (dpd(j, j) / lf) / (dmd(j, j) / dfd), lf, dfd));

    // Sanderson-Windmeijer: partial out the other endogenous regressors by
    // 2SLS before measuring the instruments' strength for column j.
    Eigen::VectorXd e = ds.col(j);
    if (m > 1) {
      std::vector<Eigen::Index> others;
      for (Eigen::Index o = 0; o < m; ++o)
        if (o != j) others.push_back(o);
      const Eigen::MatrixXd d_o = ds(Eigen::all, others);
      const Eigen::MatrixXd pd_o = q * (q.transpose() * d_o);
      const Eigen::VectorXd c = (pd_o.transpose() * d_o).ldlt().solve(pd_o.transpose() * ds.col(j));
      e = ds.col(j) - d_o * c;
    }
    const Eigen::VectorXd qe = q.transpose() * e;
    const double epe = qe.squaredNorm();
    const double eme = e.squaredNorm() - epe;
    const double df1 = static_cast<double>(l - m + 1);
    out.push_back(f_result("Sanderson-Windmeijer F (" + name + ")", (epe / df1) / (eme / dfd), df1, dfd));
  }

  const Eigen::MatrixXd sigma = dmd / dfd;
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> cd(dpd / lf, sigma);
  TestResult cdf = f_result("Cragg-Donald Wald F", cd.eigenvalues().minCoeff(), lf, dfd);
  cdf.note = "p-value from F(L, n-k-L); compare with Stock-Yogo critical values";
  out.push_back(cdf);

  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> cc(dpd, ddd);
  out.push_back(chi2_result("Anderson canonical correlation LM", static_cast<double>(n) * cc.eigenvalues().minCoeff(),
                            static_cast<double>(l - m + 1)));
  return out;
}

TestResult hansen_j(const TwoSLSFit& fit) {
  const Eigen::Index m = fit.endogenous.cols(), l = fit.instruments.cols();
  if (l <= m) {
    TestResult t;
    t.name = "Hansen J";
    t.distribution = "chi2";
    t.df1 = 0.0;
    t.p_value = 1.0;
    t.defined = false;
    t.note = "JustIdentified";
    return t;
  }
  const auto n = static_cast<double>(fit.y.size());
  const Eigen::VectorXd w = fit.weights * (n / fit.weights.sum());
  const Eigen::MatrixXd z = hcat(fit.exogenous, fit.instruments);
  const Eigen::MatrixXd x = hcat(fit.exogenous, fit.endogenous);
  const Eigen::MatrixXd zw = z.array().colwise() * w.array();

  const Eigen::MatrixXd g1 = z.array().colwise() * (w.array() * fit.second_stage.residuals.array());
  const Eigen::MatrixXd s = g1.transpose() * g1 / n;
  const Eigen::LDLT<Eigen::MatrixXd> s_inv(s);
  const Eigen::MatrixXd a = zw.transpose() * x / n;
  const Eigen::VectorXd c = zw.transpose() * fit.y / n;
  const Eigen::MatrixXd sa = s_inv.solve(a);
  const Eigen::VectorXd b = (a.transpose() * sa).ldlt().solve(sa.transpose() * c);
  const Eigen::VectorXd gbar = zw.transpose() * (fit.y - x * b) / n;
  const double j = n * gbar.dot(s_inv.solve(gbar));
  return chi2_result("Hansen J", j, static_cast<double>(l - m));
}

double vif_from_r(double r) {
  const double r2 = r * r;
  if (r2 >= 1.0) return std::numeric_limits<double>::infinity();
  return 1.0 / (1.0 - r2);
}

ReportTable pairwise_corr_vif(const Eigen::MatrixXd& columns, const std::vector<std::string>& names,
                              const Eigen::VectorXd& weights) {
  if (columns.cols() < 2) throw config_error("TooFewColumns", "correlation table needs at least two columns");
  if (static_cast<Eigen::Index>(names.size()) != columns.cols())
    throw config_error("ColumnMismatch", "one name per column required");
  const Eigen::VectorXd w = weights.size() ? weights : Eigen::VectorXd::Ones(columns.rows());
  const double sw = w.sum();
  Eigen::MatrixXd centered = columns;
  std::vector<double> sd(static_cast<std::size_t>(columns.cols()));
  for (Eigen::Index j = 0; j < columns.cols(); ++j) {
    centered.col(j).array() -= w.dot(columns.col(j)) / sw;
    sd[static_cast<std::size_t>(j)] = std::sqrt(w.dot(centered.col(j).cwiseAbs2()) / sw);
    if (!(sd[static_cast<std::size_t>(j)] > 0.0) || columns.col(j).maxCoeff() == columns.col(j).minCoeff())
      throw data_error("ZeroVariance", "column '" + names[static_cast<std::size_t>(j)] + "' is constant");
  }
  ReportTable t;
  t.title = "Pairwise correlation and variance inflation factor";
  t.column_labels = {"Correlation", "VIF"};
  for (Eigen::Index a = 0; a < columns.cols(); ++a)
    for (Eigen::Index b = a + 1; b < columns.cols(); ++b) {
      const double cov = w.dot(centered.col(a).cwiseProduct(centered.col(b))) / sw;
      double r = cov / (sd[static_cast<std::size_t>(a)] * sd[static_cast<std::size_t>(b)]);
      if (std::abs(r) > 1.0 - 1e-12) r = r > 0 ? 1.0 : -1.0;
      const double vif = vif_from_r(r);
      t.add_row(names[static_cast<std::size_t>(a)] + " ~ " + names[static_cast<std::size_t>(b)],
                {Cell::number(r), std::isinf(vif) ? Cell::label("inf") : Cell::number(vif)});
    }
  return t;
}

ReportTable tests_table(const std::string& title, const std::vector<std::pair<std::string, TestResult>>& rows) {
  ReportTable t;
  t.title = title;
  t.column_labels = {"Statistic", "df", "p-value"};
  for (const auto& [label, r] : rows) {
    if (!r.defined) {
      t.add_row(label, {Cell::label(r.note.empty() ? "n/a" : r.note), Cell{}, Cell{}});
      continue;
    }
    char df[64];
    if (r.df2) std::snprintf(df, sizeof df, "%g, %g", r.df1, *r.df2);
    else std::snprintf(df, sizeof df, "%g", r.df1);
    t.add_row(label, {Cell::statistic(r.statistic, r.p_value), Cell::label(df), Cell::number(r.p_value)});
  }
  return t;
}

}  // namespace eom
