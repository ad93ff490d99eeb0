#include <doctest.h>

#include <nlohmann/json.hpp>
#include <random>

#include "eom/regression.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace eom;

namespace {

DesignMatrix random_design(std::mt19937_64& rng, int n, int k, bool clusters = false) {
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0.2, 4.0);
  Eigen::MatrixXd x(n, k);
  Eigen::VectorXd y(n), w(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (int j = 1; j < k; ++j) x(i, j) = z(rng) * (j + 1);
    y(i) = 0.5 + x.row(i).tail(k - 1).sum() * 0.3 + z(rng) * (1 + std::abs(x(i, std::min(1, k - 1))));
    w(i) = u(rng);
  }
  DesignMatrix d = make_design(y, x, w);
  if (clusters) {
    Eigen::VectorXi g(n);
    for (int i = 0; i < n; ++i) g(i) = i % 7;
    d.cluster_ids = g;
  }
  return d;
}

}  // namespace

TEST_SUITE("regression") {

TEST_CASE("WLS matches the normal-equations oracle") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 30; ++rep) {
    const int k = 1 + rep % 8, n = 20 + 5 * rep;
    const DesignMatrix d = random_design(rng, n, std::max(k, 1));
    const FitResult f = fit_wls(d);
    const Eigen::VectorXd b = oracle::normal_equations(d.columns, d.response, d.weights);
    CHECK(test::max_rel_diff(f.coefficients, b) < 1e-10);
    const Eigen::VectorXd e = d.response - d.columns * b;
    CHECK(f.ssr == doctest::Approx(d.weights.dot(e.cwiseProduct(e))).epsilon(1e-10));
    const Eigen::MatrixXd classical = f.ssr / (n - d.k()) * (d.columns.transpose() * d.weights.asDiagonal() * d.columns).inverse();
    CHECK(test::max_rel_diff(f.covariance, classical) < 1e-8);
  }
}

TEST_CASE("HC1 and cluster sandwiches match direct sums") {
  std::mt19937_64 rng(4);
  const DesignMatrix d = random_design(rng, 60, 3, true);
  const FitResult f = fit_wls(d);
  const Eigen::Index n = d.n(), k = d.k();
  const Eigen::MatrixXd bread = (d.columns.transpose() * d.weights.asDiagonal() * d.columns).inverse();
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd xi = d.columns.row(i).transpose();
    meat += std::pow(d.weights(i) * f.residuals(i), 2) * xi * xi.transpose();
  }
  const Eigen::MatrixXd hc1 = double(n) / double(n - k) * bread * meat * bread;
  CHECK(test::max_rel_diff(sandwich_cov(f, d, CovarianceKind::hc1), hc1) < 1e-9);

  std::map<int, Eigen::VectorXd> score;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto [it, fresh] = score.try_emplace((*d.cluster_ids)(i), Eigen::VectorXd::Zero(k));
    it->second += d.weights(i) * f.residuals(i) * d.columns.row(i).transpose();
  }
  Eigen::MatrixXd cmeat = Eigen::MatrixXd::Zero(k, k);
  for (const auto& [g, s] : score) cmeat += s * s.transpose();
  const double G = double(score.size());
  const Eigen::MatrixXd cl = G / (G - 1) * double(n - 1) / double(n - k) * bread * cmeat * bread;
  CHECK(test::max_rel_diff(sandwich_cov(f, d, CovarianceKind::cluster), cl) < 1e-9);
}

TEST_CASE("scaling the weights changes nothing") {
  std::mt19937_64 rng(5);
  DesignMatrix d = random_design(rng, 80, 4);
  const FitResult a = with_covariance(fit_wls(d), d, CovarianceKind::hc1);
  d.weights *= 37.5;
  const FitResult b = with_covariance(fit_wls(d), d, CovarianceKind::hc1);
  CHECK(test::max_rel_diff(a.coefficients, b.coefficients) < 1e-10);
  CHECK(test::max_rel_diff(a.covariance, b.covariance) < 1e-9);
  CHECK(a.r_squared == doctest::Approx(b.r_squared));
}

TEST_CASE("rank deficiency names the collinear column") {
  std::mt19937_64 rng(6);
  DesignMatrix d = random_design(rng, 40, 3);
  d.columns.conservativeResize(Eigen::NoChange, 4);
  d.columns.col(3) = 2.0 * d.columns.col(1) - d.columns.col(2);
  d.column_names.push_back("dup");
  try {
    fit_wls(d);
    FAIL("expected RankDeficient");
  } catch (const Error& e) {
    CHECK(e.code() == "RankDeficient");
    CHECK(e.kind() == ErrorKind::numerical);
    CHECK(std::string(e.what()).find("dup") != std::string::npos);
  }
  DesignMatrix tiny = make_design(Eigen::VectorXd::Ones(2), Eigen::MatrixXd::Random(2, 3), Eigen::VectorXd::Ones(2));
  CHECK(test::error_code([&] { fit_wls(tiny); }) == "InsufficientObservations");
}

TEST_CASE("perfect fit has zero SSR and unit R-squared") {
  Eigen::MatrixXd x(5, 2);
  x << 1, 1, 1, 2, 1, 3, 1, 4, 1, 5;
  const Eigen::VectorXd y = 2.0 + 3.0 * x.col(1).array();
  const FitResult f = fit_wls(make_design(y, x, Eigen::VectorXd::Ones(5)));
  CHECK(f.coefficients(1) == doctest::Approx(3.0));
  CHECK(f.ssr == doctest::Approx(0.0).epsilon(1e-20));
  CHECK(f.r_squared == doctest::Approx(1.0));
}

TEST_CASE("JSON round trip and prediction") {
  std::mt19937_64 rng(8);
  const DesignMatrix d = random_design(rng, 30, 3);
  const FitResult f = with_covariance(fit_wls(d), d, CovarianceKind::hc1);
  const FitResult back = fit_from_json(nlohmann::json::parse(to_json(f, true).dump()));
  CHECK(back.names == f.names);
  CHECK(back.coefficients == f.coefficients);
  CHECK(back.covariance == f.covariance);
  CHECK(back.residuals == f.residuals);
  CHECK(back.estimator == CovarianceKind::hc1);
  CHECK(test::max_rel_diff(predict(f, d), f.fitted) < 1e-12);
  CHECK(test::error_code([&] { predict(f, d.columns.leftCols(2), {"x0", "x1"}); }) == "ColumnMismatch");
}

TEST_CASE("covariance names") {
  CHECK(parse_covariance("robust") == CovarianceKind::hc1);
  CHECK(parse_covariance("cluster") == CovarianceKind::cluster);
  CHECK(test::error_kind([] { parse_covariance("hc3"); }) == ErrorKind::config);
}

}
