#include "eom/regression.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "eom/error.hpp"

namespace eom {

std::string to_string(CovarianceKind k) {
  switch (k) {
    case CovarianceKind::classical: return "classical";
    case CovarianceKind::hc1: return "HC1";
    case CovarianceKind::cluster: return "cluster";
  }
  return {};
}

CovarianceKind parse_covariance(std::string_view s) {
  if (s == "classical") return CovarianceKind::classical;
  if (s == "HC1" || s == "hc1" || s == "robust") return CovarianceKind::hc1;
  if (s == "cluster") return CovarianceKind::cluster;
  throw config_error("BadCovariance", "unknown covariance kind '" + std::string(s) + "'");
}

Eigen::VectorXd FitResult::standard_errors() const { return covariance.diagonal().cwiseMax(0.0).cwiseSqrt(); }

std::optional<Eigen::Index> FitResult::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<Eigen::Index>(i);
  return std::nullopt;
}

double FitResult::coef(std::string_view name) const {
  auto i = index_of(name);
  if (!i) throw config_error("UnknownColumn", std::string(name));
  return coefficients(*i);
}

double FitResult::se(std::string_view name) const {
  auto i = index_of(name);
  if (!i) throw config_error("UnknownColumn", std::string(name));
  return std::sqrt(std::max(covariance(*i, *i), 0.0));
}

namespace detail {

double weighted_r_squared(const Eigen::VectorXd& y, const Eigen::VectorXd& residuals, const Eigen::VectorXd& w) {
  const double sw = w.sum();
  const double ybar = w.dot(y) / sw;
  const double sst = (w.array() * (y.array() - ybar).square()).sum();
  if (!(sst > 0.0)) return 0.0;
  const double ssr = (w.array() * residuals.array().square()).sum();
  return 1.0 - ssr / sst;
}

LeastSquares least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  const Eigen::VectorXd sw = w.cwiseSqrt();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x.array().colwise() * sw.array());
  qr.setThreshold(1e-10);
  if (qr.rank() < x.cols()) throw numerical_error("RankDeficient", "auxiliary regression is rank deficient");
  LeastSquares ls;
  ls.coefficients = qr.solve((y.array() * sw.array()).matrix());
  ls.residuals = y - x * ls.coefficients;
  ls.ssr = (w.array() * ls.residuals.array().square()).sum();
  return ls;
}

Eigen::MatrixXd sandwich(const Eigen::MatrixXd& x, const Eigen::VectorXd& w, const Eigen::VectorXd& e,
                         const Eigen::MatrixXd& bread, CovarianceKind kind,
                         const std::optional<Eigen::VectorXi>& clusters) {
  const auto n = static_cast<double>(x.rows());
  const auto k = static_cast<double>(x.cols());
  const Eigen::MatrixXd scores = x.array().colwise() * (w.array() * e.array());
  Eigen::MatrixXd meat;
  double factor = 1.0;
  switch (kind) {
    case CovarianceKind::classical:
      throw config_error("BadCovariance", "classical covariance is not a sandwich");
    case CovarianceKind::hc1:
      meat = scores.transpose() * scores;
      factor = n / (n - k);
      break;
    case CovarianceKind::cluster: {
      if (!clusters) throw config_error("NoClusterColumn", "cluster covariance needs cluster ids");
      std::map<int, Eigen::Index> slot;
      for (Eigen::Index i = 0; i < clusters->size(); ++i) slot.emplace((*clusters)(i), 0);
      const auto groups = static_cast<Eigen::Index>(slot.size());
      if (groups < 2) throw numerical_error("TooFewClusters", std::to_string(groups) + " cluster(s)");
      Eigen::Index next = 0;
      for (auto& [id, s] : slot) s = next++;
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(groups, x.cols());
      for (Eigen::Index i = 0; i < x.rows(); ++i) sums.row(slot.at((*clusters)(i))) += scores.row(i);
      meat = sums.transpose() * sums;
      const auto g = static_cast<double>(groups);
      factor = g / (g - 1.0) * (n - 1.0) / (n - k);
      break;
    }
  }
  Eigen::MatrixXd v = factor * bread * meat * bread;
  return 0.5 * (v + v.transpose());
}

}  // namespace detail

FitResult fit_wls(const DesignMatrix& design) {
  design.check();
  const Eigen::Index n = design.n();
  const Eigen::Index k = design.k();
  if (k == 0) throw config_error("EmptyDesign", "design has no columns");
  if (n <= k)
    throw numerical_error("InsufficientObservations",
                          std::to_string(n) + " observations for " + std::to_string(k) + " columns");

  const Eigen::VectorXd sw = design.weights.cwiseSqrt();
  const Eigen::MatrixXd xw = design.columns.array().colwise() * sw.array();
  const Eigen::VectorXd yw = design.response.cwiseProduct(sw);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xw);
  qr.setThreshold(1e-10);

  const Eigen::Index rank = qr.rank();
  if (rank < k) {
    const auto& perm = qr.colsPermutation().indices();
    std::vector<Eigen::Index> independent(perm.data(), perm.data() + rank);
    Eigen::MatrixXd basis(n, rank);
    for (Eigen::Index j = 0; j < rank; ++j) basis.col(j) = xw.col(independent[static_cast<std::size_t>(j)]);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> basis_qr(basis);
    std::set<Eigen::Index> implicated;
    for (Eigen::Index p = rank; p < k; ++p) {
      const Eigen::Index j = perm(p);
      implicated.insert(j);
      const Eigen::VectorXd c = basis_qr.solve(xw.col(j));
      const double scale = std::max(xw.col(j).norm(), 1e-300);
      for (Eigen::Index i = 0; i < rank; ++i)
        if (std::abs(c(i)) * basis.col(i).norm() > 1e-6 * scale) implicated.insert(independent[static_cast<std::size_t>(i)]);
    }
    std::string names;
    for (Eigen::Index j : implicated) names += (names.empty() ? "" : ", ") + design.column_names[static_cast<std::size_t>(j)];
    throw numerical_error("RankDeficient", "collinear columns: " + names);
  }

  FitResult fit;
  fit.names = design.column_names;
  fit.coefficients = qr.solve(yw);
  fit.fitted = design.columns * fit.coefficients;
  fit.residuals = design.response - fit.fitted;
  fit.weights = design.weights;
  fit.ssr = (design.weights.array() * fit.residuals.array().square()).sum();
  fit.n = n;
  fit.k = k;
  fit.r_squared = detail::weighted_r_squared(design.response, fit.residuals, design.weights);
  fit.source_rows = design.source_rows;

  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  const Eigen::MatrixXd permuted = r_inv * r_inv.transpose();
  Eigen::MatrixXd bread = qr.colsPermutation() * permuted * qr.colsPermutation().transpose();
  fit.bread = 0.5 * (bread + bread.transpose());

  const double sigma2 = fit.ssr / static_cast<double>(n - k);
  fit.covariance = sigma2 * fit.bread;
  fit.estimator = CovarianceKind::classical;
  return fit;
}

Eigen::MatrixXd sandwich_cov(const FitResult& fit, const DesignMatrix& design, CovarianceKind kind) {
  if (design.n() != fit.n || design.k() != fit.k) throw config_error("ColumnMismatch", "design does not match fit");
  if (kind == CovarianceKind::classical) return (fit.ssr / static_cast<double>(fit.n - fit.k)) * fit.bread;
  return detail::sandwich(design.columns, design.weights, fit.residuals, fit.bread, kind, design.cluster_ids);
}

FitResult with_covariance(FitResult fit, const DesignMatrix& design, CovarianceKind kind) {
  fit.covariance = sandwich_cov(fit, design, kind);
  fit.estimator = kind;
  return fit;
}

Eigen::VectorXd predict(const FitResult& fit, const Eigen::MatrixXd& x, const std::vector<std::string>& names) {
  if (names != fit.names || x.cols() != fit.coefficients.size())
    throw config_error("ColumnMismatch", "prediction columns differ from the fitted columns");
  return x * fit.coefficients;
}

Eigen::VectorXd predict(const FitResult& fit, const DesignMatrix& new_design) {
  return predict(fit, new_design.columns, new_design.column_names);
}

namespace {

nlohmann::json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vec_from(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::json to_json(const FitResult& fit, bool vectors) {
  nlohmann::json j;
  j["names"] = fit.names;
  j["coefficients"] = vec_json(fit.coefficients);
  j["standard_errors"] = vec_json(fit.standard_errors());
  nlohmann::json cov = nlohmann::json::array();
  for (Eigen::Index i = 0; i < fit.covariance.rows(); ++i) cov.push_back(vec_json(fit.covariance.row(i).transpose()));
  j["covariance"] = cov;
  j["estimator"] = to_string(fit.estimator);
  j["n"] = fit.n;
  j["k"] = fit.k;
  j["r_squared"] = fit.r_squared;
  j["ssr"] = fit.ssr;
  if (vectors) {
    j["residuals"] = vec_json(fit.residuals);
    j["fitted"] = vec_json(fit.fitted);
    j["weights"] = vec_json(fit.weights);
  }
  return j;
}

FitResult fit_from_json(const nlohmann::json& j) {
  FitResult f;
  try {
    f.names = j.at("names").get<std::vector<std::string>>();
    f.coefficients = vec_from(j.at("coefficients"));
    const auto& cov = j.at("covariance");
    const auto k = static_cast<Eigen::Index>(cov.size());
    f.covariance.resize(k, k);
    for (Eigen::Index i = 0; i < k; ++i) f.covariance.row(i) = vec_from(cov.at(static_cast<std::size_t>(i))).transpose();
    f.estimator = parse_covariance(j.at("estimator").get<std::string>());
    f.n = j.at("n").get<Eigen::Index>();
    f.k = j.at("k").get<Eigen::Index>();
    f.r_squared = j.at("r_squared").get<double>();
    f.ssr = j.at("ssr").get<double>();
    if (j.contains("residuals")) f.residuals = vec_from(j["residuals"]);
    if (j.contains("fitted")) f.fitted = vec_from(j["fitted"]);
    if (j.contains("weights")) f.weights = vec_from(j["weights"]);
  } catch (const nlohmann::json::exception& e) {
    throw config_error("ConfigParse", std::string("saved fit: ") + e.what());
  }
  return f;
}

}  // namespace eom
