#include <doctest.h>

#include "eom/iv.hpp"
#include "eom/simulation.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace eom;

namespace {

struct IVData {
  Simulated sim;
  DesignMatrix design;
  DesignMatrix exog;
};

IVData lewbel_data(std::size_t n_external = 1, std::uint64_t seed = 1, int n = 3000) {
  DGPConfig c = DGPConfig::lewbel_default();
  c.n = n;
  c.seed = seed;
  c.endogeneity->pi.assign(n_external, 1.0);
  IVData d{simulate_lewbel_dgp(c), {}, {}};
  ModelSpec f;
  f.numeric = {"years_edu", "nightlight", "mpce"};
  d.design = encode_design(d.sim.data, f);
  d.exog = select_columns(d.design, {"(Intercept)", "nightlight", "mpce"});
  return d;
}

// Weighted 2SLS by explicit projection: b = (X'P X)^{-1} X'P y with
// P = W Z (Z'WZ)^{-1} Z'W.
Eigen::VectorXd tsls_oracle(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& w) {
  const Eigen::MatrixXd zwx = z.transpose() * w.asDiagonal() * x;
  const Eigen::MatrixXd zwz = z.transpose() * w.asDiagonal() * z;
  const Eigen::VectorXd zwy = z.transpose() * w.asDiagonal() * y;
  const Eigen::MatrixXd a = zwx.transpose() * zwz.ldlt().solve(zwx);
  return a.ldlt().solve(zwx.transpose() * zwz.ldlt().solve(zwy));
}

}  // namespace

TEST_SUITE("iv") {

TEST_CASE("Lewbel instruments are centered driver times first-stage residual") {
  const IVData d = lewbel_data();
  const Eigen::VectorXd endog = d.design.column("years_edu");
  const GeneratedInstruments g = generate_lewbel_instruments(d.exog, endog, {"nightlight", "mpce"});
  CHECK(g.names == std::vector<std::string>{"lewbel_nightlight", "lewbel_mpce"});
  const Eigen::VectorXd& w = d.exog.weights;
  const Eigen::VectorXd b = oracle::normal_equations(d.exog.columns, endog, w);
  const Eigen::VectorXd e = endog - d.exog.columns * b;
  for (int j = 0; j < 2; ++j) {
    const Eigen::VectorXd z = d.exog.column(j == 0 ? "nightlight" : "mpce");
    Eigen::VectorXd ref = (z.array() - w.dot(z) / w.sum()).matrix().cwiseProduct(e);
    ref.array() -= w.dot(ref) / w.sum();
    CHECK(test::max_rel_diff(g.columns.col(j), ref) < 1e-9);
    CHECK(std::abs(w.dot(g.columns.col(j))) / w.sum() < 1e-12);
  }
}

TEST_CASE("constant drivers are dropped with a warning") {
  const IVData d = lewbel_data();
  Eigen::MatrixXd z(d.exog.n(), 2);
  z.col(0) = d.exog.column("nightlight");
  z.col(1).setConstant(3.0);
  const auto g = generate_lewbel_instruments(d.exog, d.design.column("years_edu"), z, {"nightlight", "flat"});
  CHECK(g.columns.cols() == 1);
  CHECK(g.warnings.size() == 1);
  CHECK(test::error_code([&] { generate_lewbel_instruments(d.exog, d.design.column("years_edu"), {"colleges"}); }) ==
        "UnknownColumn");
}

TEST_CASE("2SLS matches the projection oracle") {
  for (std::size_t m : {1u, 3u}) {
    const IVData d = lewbel_data(m, 2);
    const InstrumentSet set = external_instruments(d.sim.data, d.design, lewbel_instrument_names(m));
    const TwoSLSFit fit = fit_2sls(d.design, {"years_edu"}, set);
    Eigen::MatrixXd z(d.design.n(), d.exog.k() + set.count());
    z << d.exog.columns, set.excluded();
    const Eigen::VectorXd b = tsls_oracle(d.design.columns, z, d.design.response, d.design.weights);
    CHECK(test::max_rel_diff(fit.second_stage.coefficients, b) < 1e-8);

    // Structural residuals are orthogonal to the projected regressors.
    const Eigen::VectorXd m0 = fit.projected.transpose() * d.design.weights.asDiagonal() * fit.second_stage.residuals;
    CHECK(m0.cwiseAbs().maxCoeff() < 1e-7 * d.design.n());
    CHECK(test::max_rel_diff(fit.second_stage.residuals, d.design.response - d.design.columns * b) < 1e-8);
  }
}

TEST_CASE("2SLS HC1 covariance uses projected regressors and structural residuals") {
  const IVData d = lewbel_data(1, 3, 500);
  const InstrumentSet set = external_instruments(d.sim.data, d.design, lewbel_instrument_names(1));
  const TwoSLSFit fit = fit_2sls(d.design, {"years_edu"}, set, CovarianceKind::hc1);
  const Eigen::MatrixXd& xh = fit.projected;
  const Eigen::VectorXd& w = d.design.weights;
  const Eigen::VectorXd& e = fit.second_stage.residuals;
  const Eigen::MatrixXd bread = (xh.transpose() * w.asDiagonal() * xh).inverse();
  const Eigen::MatrixXd meat = xh.transpose() * (w.array() * e.array()).square().matrix().asDiagonal() * xh;
  const double n = double(xh.rows()), k = double(xh.cols());
  CHECK(test::max_rel_diff(fit.second_stage.covariance, n / (n - k) * bread * meat * bread) < 1e-8);
}

TEST_CASE("identification errors") {
  const IVData d = lewbel_data();
  InstrumentSet none;
  none.external.resize(d.design.n(), 0);
  CHECK(test::error_code([&] { fit_2sls(d.design, {"years_edu"}, none); }) == "UnderIdentified");
  InstrumentSet clash;
  clash.external = d.design.column("mpce");
  clash.external_names = {"mpce"};
  CHECK(test::error_code([&] { fit_2sls(d.design, {"years_edu"}, clash); }) == "InstrumentNameCollision");
  CHECK(test::error_kind([&] { fit_2sls(d.design, {"years_edu"}, clash); }) == ErrorKind::config);
}

}
