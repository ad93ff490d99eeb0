#include <doctest.h>

#include <nlohmann/json.hpp>

#include "eom/simulation.hpp"
#include "eom/suites.hpp"
#include "support.hpp"

using namespace eom;

TEST_SUITE("simulation") {

TEST_CASE("splitmix64 reference values") {
  // First output of the reference generator seeded with 0.
  CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
  auto a = make_engine(7), b = make_engine(7), c = make_engine(8);
  CHECK(a() == b());
  CHECK(a() != c());
}

TEST_CASE("same seed, same data") {
  DGPConfig c = DGPConfig::lewbel_default();
  c.n = 300;
  const auto x = simulate_lewbel_dgp(c), y = simulate_lewbel_dgp(c);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    CHECK(x.data[i].years_edu == y.data[i].years_edu);
    CHECK(x.data[i].daily_wage == y.data[i].daily_wage);
  }
  c.seed = 2;
  CHECK(simulate_lewbel_dgp(c).data[0].years_edu != x.data[0].years_edu);

  FixtureConfig f = FixtureConfig::standard();
  f.n = 500;
  const Dataset p = synth_fixture(f), q = synth_fixture(f);
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i].years_edu == q[i].years_edu);
}

TEST_CASE("monte carlo summary does not depend on the thread count") {
  DGPConfig c = DGPConfig::selection_default();
  c.n = 1500;
  const auto one = monte_carlo(heckman_estimator(), c, 12, 1).to_json();
  const auto four = monte_carlo(heckman_estimator(), c, 12, 4).to_json();
  CHECK(one.dump() == four.dump());
  CHECK(one.at("replications") == 12);
}

TEST_CASE("failing replications are counted") {
  Estimator flaky{"flaky", [](const DGPConfig& cfg) -> Replication {
                    if (cfg.seed % 2) throw std::runtime_error("odd seed");
                    return {{{"b", 1.0, 0.1, 1.0}}, {}};
                  }};
  DGPConfig c;
  c.seed = 10;
  const auto s = monte_carlo(flaky, c, 6, 2);
  CHECK(s.failures == 3);
  CHECK(s.coefficients.at("b").mean_bias == 0.0);
  Estimator broken{"broken", [](const DGPConfig&) -> Replication { throw std::runtime_error("no"); }};
  CHECK(test::error_code([&] { monte_carlo(broken, c, 3, 1); }) == "AllReplicationsFailed");
}

TEST_CASE("configuration parsing and validation") {
  const auto c = dgp_from_json(nlohmann::json::parse(R"({"n": 50, "beta": [1, 0.1, 0.02], "seed": 4,
      "selection": {"theta": [0.2, 0.8], "rho": 0.3}})"));
  CHECK(c.n == 50);
  CHECK(c.seed == 4);
  REQUIRE(c.selection.has_value());
  CHECK(c.selection->rho == 0.3);
  CHECK(test::error_kind([] { dgp_from_json(nlohmann::json::parse(R"({"n": -1})")).validate(); }) == ErrorKind::config);
  CHECK(test::error_kind([] { dgp_from_json(nlohmann::json::parse(R"({"sigma": "x"})")); }) == ErrorKind::config);

  FixtureConfig f = FixtureConfig::standard();
  f.gap = 1.0;
  CHECK(test::error_code([&] { f.validate(); }) == "BadFixture");
  f = FixtureConfig::standard();
  f.under_share = 0.7;
  f.over_share = 0.5;
  CHECK(test::error_code([&] { f.validate(); }) == "BadFixture");
  CHECK(fixture_from_json(nlohmann::json::parse(R"({"n": 100, "jitter": 0})")).jitter == 0);
}

TEST_CASE("suites are named and labelled") {
  CHECK(suite_names() == std::vector<std::string>{"probit", "heckman", "lewbel", "calibration"});
  CHECK(suite_runs("calibration", 1).size() == 8);
  CHECK(test::error_kind([] { suite_runs("nope", 1); }) == ErrorKind::config);
}

}
