#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <map>

#include "eom/diagnostics.hpp"
#include "eom/simulation.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace eom;

namespace {

struct Setup {
  Simulated sim;
  DesignMatrix design;
  TwoSLSFit fit;
};

Setup iv_setup(std::size_t instruments, double rho = 0.5, std::uint64_t seed = 1) {
  DGPConfig c = DGPConfig::lewbel_default();
  c.n = 2000;
  c.seed = seed;
  c.endogeneity->pi.assign(instruments, 0.3);
  c.endogeneity->rho = rho;
  Setup s{simulate_lewbel_dgp(c), {}, {}};
  ModelSpec f;
  f.numeric = {"years_edu", "nightlight", "mpce"};
  s.design = encode_design(s.sim.data, f);
  s.fit = fit_2sls(s.design, {"years_edu"}, external_instruments(s.sim.data, s.design, lewbel_instrument_names(instruments)));
  return s;
}

double ssr(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  const Eigen::VectorXd e = y - x * oracle::normal_equations(x, y, w);
  return w.dot(e.cwiseProduct(e));
}

Eigen::MatrixXd hcat(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

const TestResult& named(const std::vector<TestResult>& tests, const std::string& prefix) {
  for (const auto& t : tests)
    if (t.name.rfind(prefix, 0) == 0) return t;
  throw std::logic_error(prefix);
}

}  // namespace

TEST_SUITE("diagnostics") {

TEST_CASE("p-values match the reference distributions") {
  CHECK(chi2_upper_p(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-10));
  CHECK(f_upper_p(3.0, 2, 50) == doctest::Approx(cdf(complement(boost::math::fisher_f(2, 50), 3.0))));
  CHECK(f_upper_p(0.0, 2, 50) == 1.0);
  CHECK(chi2_upper_p(-1.0, 3) == 1.0);
}

TEST_CASE("first-stage partial F and Cragg-Donald agree when just identified") {
  const Setup s = iv_setup(1);
  const auto weak = weak_instrument_stats(s.fit);
  const double partial = named(weak, "First-stage partial F").statistic;
  const double cd = named(weak, "Cragg-Donald").statistic;
  CHECK(std::abs(cd - partial) <= 1e-8 * partial);
  CHECK(named(weak, "Sanderson-Windmeijer").statistic == doctest::Approx(partial).epsilon(1e-10));

  const Eigen::VectorXd& w = s.fit.weights;
  const double r = ssr(s.fit.exogenous, s.fit.endogenous.col(0), w);
  const double u = ssr(hcat(s.fit.exogenous, s.fit.instruments), s.fit.endogenous.col(0), w);
  const double n = double(w.size()), k = double(s.fit.exogenous.cols());
  CHECK(partial == doctest::Approx(((r - u) / 1.0) / (u / (n - k - 1.0))).epsilon(1e-9));
  const TestResult& lm = named(weak, "Anderson");
  CHECK(lm.statistic == doctest::Approx(n * (r - u) / r).epsilon(1e-9));
  CHECK(lm.df1 == 1.0);
}

TEST_CASE("Hansen J: undefined when just identified, oracle otherwise") {
  CHECK_FALSE(hansen_j(iv_setup(1).fit).defined);
  CHECK(hansen_j(iv_setup(1).fit).note == "JustIdentified");

  const Setup s = iv_setup(3);
  const TestResult j = hansen_j(s.fit);
  CHECK(j.defined);
  CHECK(j.df1 == 2.0);
  // Two-step GMM written out directly.
  const Eigen::VectorXd w = s.fit.weights / s.fit.weights.mean();
  const Eigen::MatrixXd z = hcat(s.fit.exogenous, s.fit.instruments);
  const Eigen::MatrixXd x = hcat(s.fit.exogenous, s.fit.endogenous);
  const Eigen::VectorXd& y = s.fit.y;
  const double n = double(y.size());
  Eigen::MatrixXd sm = Eigen::MatrixXd::Zero(z.cols(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const Eigen::VectorXd gi = w(i) * s.fit.second_stage.residuals(i) * z.row(i).transpose();
    sm += gi * gi.transpose() / n;
  }
  const Eigen::MatrixXd si = sm.inverse();
  const Eigen::MatrixXd a = z.transpose() * w.asDiagonal() * x / n;
  const Eigen::VectorXd c = z.transpose() * w.asDiagonal() * y / n;
  const Eigen::VectorXd b = (a.transpose() * si * a).inverse() * a.transpose() * si * c;
  const Eigen::VectorXd g = z.transpose() * w.asDiagonal() * (y - x * b) / n;
  CHECK(j.statistic == doctest::Approx(n * g.dot(si * g)).epsilon(1e-7));
}

TEST_CASE("Durbin-Wu-Hausman is the control-function F") {
  const Setup s = iv_setup(1, 0.5);
  const TestResult t = durbin_wu_hausman(s.fit);
  const Eigen::VectorXd& w = s.fit.weights;
  const Eigen::MatrixXd z = hcat(s.fit.exogenous, s.fit.instruments);
  const Eigen::VectorXd v = s.fit.endogenous.col(0) - z * oracle::normal_equations(z, s.fit.endogenous.col(0), w);
  const Eigen::MatrixXd x = hcat(s.fit.exogenous, s.fit.endogenous);
  const double r = ssr(x, s.fit.y, w), u = ssr(hcat(x, v), s.fit.y, w);
  const double dfd = double(x.rows() - x.cols() - 1);
  CHECK(t.statistic == doctest::Approx((r - u) / (u / dfd)).epsilon(1e-8));
  CHECK(t.df2 == dfd);
  CHECK(t.reject_at_05());
  CHECK(durbin_wu_hausman(s.design, {"years_edu"},
                          external_instruments(s.sim.data, s.design, lewbel_instrument_names(1)))
            .statistic == doctest::Approx(t.statistic));
}

TEST_CASE("Breusch-Pagan is n R^2 of the auxiliary regression") {
  DGPConfig c;
  c.n = 500;
  c.beta = {1.0, 0.5, 0.5};
  const Simulated sim = simulate_regression_dgp(c, 1.0);
  ModelSpec f;
  f.numeric = {"x1", "x2"};
  const DesignMatrix d = encode_design(sim.data, f);
  const FitResult fit = fit_wls(d);
  const TestResult t = breusch_pagan(fit, d);
  const Eigen::VectorXd& w = d.weights;
  const Eigen::VectorXd e2 = fit.residuals.array().square();
  const Eigen::VectorXd u = e2 / (w.dot(e2) / w.sum());
  Eigen::MatrixXd aux(d.n(), 2);
  aux << Eigen::VectorXd::Ones(d.n()), fit.fitted;
  const double mean = w.dot(u) / w.sum();
  const double tss = w.dot((u.array() - mean).square().matrix());
  CHECK(t.statistic == doctest::Approx(double(d.n()) * (1.0 - ssr(aux, u, w) / tss)).epsilon(1e-9));
  CHECK(t.df1 == 1.0);
  CHECK(t.p_value == doctest::Approx(chi2_upper_p(t.statistic, 1.0)));
}

TEST_CASE("Chow: unrestricted SSR is the sum of group SSRs") {
  DGPConfig c;
  c.n = 600;
  c.beta = {1.0, 0.0, 0.3};
  c.sigma = 0.2;
  const Simulated sim = simulate_group_dgp(c, {0.1, 0.1, 0.5});
  ModelSpec f;
  f.numeric = {"x1", "x2"};
  const ChowResult r = chow_test(sim.data, f, "group", "x1");
  CHECK(r.groups == std::vector<std::string>{"g0", "g1", "g2"});
  double sum = 0.0;
  for (const auto& g : r.groups) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < sim.data.size(); ++i)
      if (label_field(sim.data[i], "group") == g) rows.push_back(i);
    const DesignMatrix d = encode_design(sim.data.subset(rows, "select", g), f);
    sum += ssr(d.columns, d.response, d.weights);
  }
  CHECK(r.stacked.ssr == doctest::Approx(sum).epsilon(1e-10));
  CHECK(r.test.df1 == 2.0);
  CHECK(r.test.df2 == double(sim.data.size()) - 9.0);
  CHECK(r.test.reject_at_05());
  CHECK(r.stacked.index_of("[g2] x1").has_value());
}

TEST_CASE("Chow errors") {
  DGPConfig c;
  c.n = 50;
  c.beta = {1.0, 0.0, 0.3};
  const Simulated sim = simulate_group_dgp(c, std::vector<double>(20, 0.1));
  ModelSpec f;
  f.numeric = {"x1", "x2"};
  CHECK(test::error_code([&] { chow_test(sim.data, f, "group", "x1"); }) == "GroupTooSmall");
  const Simulated one = simulate_group_dgp(c, {0.1});
  CHECK(test::error_code([&] { chow_test(one.data, f, "group", "x1"); }) == "TooFewGroups");
  CHECK(test::error_kind([&] { chow_test(one.data, f, "group", "x1"); }) == ErrorKind::data);
}

TEST_CASE("variance inflation factor") {
  CHECK(vif_from_r(0.5) == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
  CHECK(vif_from_r(0.0) == 1.0);
  CHECK(std::isinf(vif_from_r(1.0)));
  Eigen::MatrixXd cols(4, 2);
  cols << 1, 2, 2, 4, 3, 6, 4, 8;
  const ReportTable t = pairwise_corr_vif(cols, {"a", "b"});
  CHECK(t.at(0, 1).text == "inf");
  cols.col(1).setConstant(1.0);
  CHECK(test::error_code([&] { pairwise_corr_vif(cols, {"a", "b"}); }) == "ZeroVariance");
}

}
