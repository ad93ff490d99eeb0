#include <doctest.h>

#include <boost/math/special_functions/erf.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <random>

#include "eom/normal.hpp"
#include "eom/selection.hpp"
#include "eom/simulation.hpp"
#include "support.hpp"

using namespace eom;
using eom::test::worker;

namespace {

using big = boost::multiprecision::cpp_bin_float_50;

// phi(z) / Phi(z) in 50-digit arithmetic.
double mills_reference(double z) {
  const big x = z;
  const big pdf = exp(-x * x / 2) / sqrt(2 * boost::math::constants::pi<big>());
  const big cdf = boost::math::erfc(-x / sqrt(big(2))) / 2;
  return static_cast<double>(pdf / cdf);
}

SelectionSpec dgp_spec() {
  SelectionSpec s;
  s.name = "sel";
  s.outcome = "is_wage_salary";
  s.regressors.numeric = {"years_edu", "excl"};
  s.exclusions = {"excl"};
  return s;
}

DesignMatrix probit_design(const Dataset& ds) {
  ModelSpec m = dgp_spec().regressors;
  m.response = "is_wage_salary";
  return encode_design(ds, m);
}

FilterSpec wage_rows() { return FilterSpec{{{"employment_status", {"wage_salary"}, {}, {}}}}; }

}  // namespace

TEST_SUITE("selection") {

TEST_CASE("inverse Mills ratio against high-precision references") {
  CHECK(inverse_mills(0.0, MillsBranch::yes) == doctest::Approx(0.7978845608028654).epsilon(1e-12));
  CHECK(std::abs(inverse_mills(0.0, MillsBranch::yes) - 0.7978846) < 1e-7);
  for (double z : {-40.0, -10.0, -8.5, -8.0, -3.0, -0.5, 1.0, 4.0, 9.0}) {
    const double ref = mills_reference(z);
    CHECK(inverse_mills(z, MillsBranch::yes) == doctest::Approx(ref).epsilon(1e-10));
    CHECK(inverse_mills(-z, MillsBranch::no) == doctest::Approx(-ref).epsilon(1e-10));
  }
  CHECK(mills_reference(-10.0) == doctest::Approx(10.0980).epsilon(1e-5));
}

TEST_CASE("analytic score agrees with finite differences") {
  DGPConfig c = DGPConfig::selection_default();
  c.n = 2000;
  const DesignMatrix d = probit_design(simulate_selection_dgp(c).data);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z(0.0, 0.2);
  for (int rep = 0; rep < 5; ++rep) {
    Eigen::VectorXd b(3);
    b << -1.0 + z(rng), 0.1 + 0.1 * z(rng), 1.0 + z(rng);
    const Eigen::VectorXd g = probit_score(d, b);
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(b(j)));
      Eigen::VectorXd up = b, dn = b;
      up(j) += h;
      dn(j) -= h;
      const double fd = (probit_log_likelihood(d, up) - probit_log_likelihood(d, dn)) / (2 * h);
      CHECK(std::abs(fd - g(j)) <= 1e-4 * std::max(1.0, std::abs(g(j))));
    }
  }
}

TEST_CASE("probit recovers the selection index") {
  DGPConfig c = DGPConfig::selection_default();
  c.n = 10000;
  c.seed = 5;
  const Simulated sim = simulate_selection_dgp(c);
  const ProbitFit f = fit_selection(sim.data, dgp_spec());
  CHECK(f.converged);
  CHECK(f.gradient_norm < 1e-8);
  REQUIRE(f.names.size() == 3);
  for (Eigen::Index j = 0; j < 3; ++j)
    CHECK(std::abs(f.coefficients(j) - sim.truth.theta[static_cast<std::size_t>(j)]) < 4 * std::sqrt(f.covariance(j, j)));
}

TEST_CASE("covariance is the inverse of the observed information") {
  DGPConfig c = DGPConfig::selection_default();
  c.n = 3000;
  const DesignMatrix d = probit_design(simulate_selection_dgp(c).data);
  const ProbitFit f = fit_probit(d);
  const Eigen::Index k = f.coefficients.size();
  Eigen::MatrixXd hess(k, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double h = 1e-5;
    Eigen::VectorXd up = f.coefficients, dn = f.coefficients;
    up(j) += h;
    dn(j) -= h;
    hess.col(j) = (probit_score(d, up) - probit_score(d, dn)) / (2 * h);
  }
  const Eigen::MatrixXd cov = (-hess).inverse();
  CHECK(test::max_rel_diff(f.covariance, cov) < 1e-4);
}

TEST_CASE("probit refuses degenerate input") {
  Eigen::MatrixXd x(6, 2);
  x << 1, 1, 1, 2, 1, 3, 1, 4, 1, 5, 1, 6;
  Eigen::VectorXd w = Eigen::VectorXd::Ones(6);
  Eigen::VectorXd y(6);
  y << 0, 0, 0, 1, 1, 1;
  CHECK(test::error_code([&] { fit_probit(make_design(y, x, w)); }) == "PerfectSeparation");
  y << 1, 1, 1, 1, 1, 1;
  CHECK(test::error_code([&] { fit_probit(make_design(y, x, w)); }) == "DegenerateResponse");
  y << 0, 1, 2, 0, 1, 0;
  CHECK(test::error_code([&] { fit_probit(make_design(y, x, w)); }) == "NonBinaryResponse");
}

TEST_CASE("migrant network index") {
  std::vector<WorkerRecord> rows;
  auto add = [&](std::string district, bool migrant, std::optional<double> years) {
    WorkerRecord r = worker("411", 10);
    r.district_id = std::move(district);
    r.migrant = migrant;
    r.years_since_migration = years;
    rows.push_back(r);
  };
  add("D1", true, 2.0);
  add("D1", true, 3.0);
  add("D1", false, std::nullopt);
  add("D2", false, std::nullopt);
  const Dataset ds(rows, "mem");
  const NetworkIndex idx = migrant_network(ds);
  CHECK(idx.at("D1") == 5.0);
  CHECK(idx.squared("D1") == 25.0);
  CHECK(idx.at("D2") == 0.0);
  const Dataset with = attach_network(ds, idx);
  CHECK(numeric_field(with[2], "network") == 5.0);
  CHECK(numeric_field(with[3], "network_sq") == 0.0);
  add("D3", true, std::nullopt);
  CHECK(test::error_code([&] { migrant_network(Dataset(rows, "mem")); }) == "MissingField");
}

TEST_CASE("Heckman wage fit adds the correction term") {
  DGPConfig c = DGPConfig::selection_default();
  c.seed = 9;
  const Simulated sim = simulate_selection_dgp(c);
  ModelSpec f;
  f.numeric = {"years_edu", "age"};
  const HeckmanResult h = heckman_wage_fit(sim.data, wage_rows(), f, {dgp_spec()});
  CHECK(h.lambda_columns == std::vector<std::string>{"lambda_sel"});
  CHECK(h.wage.index_of("lambda_sel").has_value());
  CHECK(std::abs(h.wage.coef("lambda_sel") - sim.truth.coefficients.at("lambda_sel")) < 4 * h.wage.se("lambda_sel"));
  CHECK(std::abs(h.wage.coef("years_edu") - 0.08) < 4 * h.wage.se("years_edu"));
  CHECK(h.data.size() == static_cast<std::size_t>(h.wage.n));
}

TEST_CASE("Heckman configuration errors and lambda modes") {
  DGPConfig c = DGPConfig::selection_default();
  c.n = 2000;
  const Dataset ds = simulate_selection_dgp(c).data;
  ModelSpec f;
  f.numeric = {"years_edu", "excl"};
  CHECK(test::error_code([&] { heckman_wage_fit(ds, wage_rows(), f, {dgp_spec()}); }) ==
        "ExclusionVariableInWageEquation");
  f.numeric = {"years_edu"};
  SelectionSpec s = dgp_spec();
  s.exclusions = {};
  CHECK(test::error_code([&] { heckman_wage_fit(ds, wage_rows(), f, {s}); }) == "NoExclusionVariable");
  s.exclusions = {"age"};
  CHECK(test::error_code([&] { heckman_wage_fit(ds, wage_rows(), f, {s}); }) == "ExclusionNotInSelection");

  // Rows from both outcomes: refused in yes_branch mode, accepted by_outcome.
  const FilterSpec everyone{{{"age", {}, 0.0, 100.0}}};
  ModelSpec lin = f;
  lin.response = "age";
  s = dgp_spec();
  CHECK(test::error_code([&] { heckman_wage_fit(ds, everyone, lin, {s}); }) == "MixedSelectionOutcome");
  s.mode = LambdaMode::by_outcome;
  const HeckmanResult h = heckman_wage_fit(ds, everyone, lin, {s});
  const Eigen::VectorXd lam = h.design.column("lambda_sel");
  CHECK(lam.maxCoeff() > 0.0);
  CHECK(lam.minCoeff() < 0.0);

  // A probit whose outcome never varies is skipped with a note.
  SelectionSpec constant = dgp_spec();
  constant.name = "const";
  constant.sample = wage_rows();
  const HeckmanResult skipped = heckman_wage_fit(ds, wage_rows(), f, {constant});
  CHECK(skipped.lambda_columns.empty());
  CHECK(skipped.notes.size() == 1);
  CHECK(test::error_code([] { parse_lambda_mode("both"); }) == "BadLambdaMode");
}

}
