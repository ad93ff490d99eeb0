#include <doctest.h>

#include <random>

#include "eom/classifier.hpp"
#include "eom/simulation.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace eom;
using eom::test::worker;

namespace {

Dataset occupation_of(const std::vector<double>& edu, const std::vector<double>& w = {}) {
  std::vector<WorkerRecord> rows;
  for (std::size_t i = 0; i < edu.size(); ++i) rows.push_back(worker("411", edu[i], w.empty() ? 2.0 : w[i]));
  return Dataset(rows, "mem");
}

double adequate_share(const ReportTable& t, const std::string& prefix) {
  return *t.at(*t.row_index(prefix + kAdequateLabel), t.cols() - 1).value;
}

}  // namespace

TEST_SUITE("classifier") {

TEST_CASE("mean +/- k sd band with inclusive bounds") {
  const auto stats = compute_occupation_stats(occupation_of({8, 10, 12}));
  const auto& s = stats.at("411");
  CHECK(s.mean_edu == doctest::Approx(10.0));
  CHECK(s.sd_edu == doctest::Approx(std::sqrt(8.0 / 3.0)));
  CHECK(classify(12, s) == MatchStatus::overeducated);
  CHECK(classify(8, s) == MatchStatus::undereducated);
  CHECK(classify(10, s) == MatchStatus::adequate);

  const auto tight = compute_occupation_stats(occupation_of({9, 11, 9, 11})).at("411");
  CHECK(tight.sd_edu == 1.0);
  CHECK(classify(11, tight) == MatchStatus::adequate);
  CHECK(classify(9, tight) == MatchStatus::adequate);
  CHECK(classify(11.0000001, tight) == MatchStatus::overeducated);
}

TEST_CASE("weighted median center") {
  const auto s = compute_occupation_stats(occupation_of({5, 10, 20}, {1, 1, 5})).at("411");
  CHECK(s.median_edu == 20.0);
  CHECK(s.mean_edu == doctest::Approx(115.0 / 7.0));
  const auto even = compute_occupation_stats(occupation_of({4, 6, 8, 10}, {2, 2, 2, 2})).at("411");
  CHECK(even.median_edu == 7.0);
  ThresholdPolicy p{1.0, Center::median};
  const auto d = decompose(20, s, classify(20, s, p), p);
  CHECK(d.required == 20.0);
}

TEST_CASE("minimum support") {
  CHECK_FALSE(compute_occupation_stats(occupation_of({10}, {10})).at("411").classifiable);
  CHECK_FALSE(compute_occupation_stats(occupation_of({10, 12}, {1, 1})).at("411").classifiable);
  const auto ok = compute_occupation_stats(occupation_of({10, 12}, {2.5, 2.5})).at("411");
  CHECK(ok.classifiable);
  auto thin = compute_occupation_stats(occupation_of({10}, {10})).at("411");
  CHECK(classify(10, thin) == MatchStatus::unclassifiable);
  CHECK(test::error_code([&] { decompose(10, thin, MatchStatus::unclassifiable); }) == "InvalidStatus");
}

TEST_CASE("decomposition components and identity") {
  const auto s = compute_occupation_stats(occupation_of({8, 10, 12})).at("411");
  const auto over = decompose(12, s, MatchStatus::overeducated);
  CHECK(over.required == doctest::Approx(10.0));
  CHECK(over.surplus == doctest::Approx(2.0));
  CHECK(over.deficit == 0.0);
  const auto under = decompose(8, s, MatchStatus::undereducated);
  CHECK(under.deficit == doctest::Approx(2.0));
  const auto ad = decompose(10.5, s, MatchStatus::adequate);
  CHECK(ad.required == 10.5);
  for (const auto& d : {over, under, ad}) CHECK(d.identity_residual() == 0.0);
}

TEST_CASE("brute-force oracle on random datasets") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> kdist(0.5, 1.5);
  int compared = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const Dataset ds = oracle::random_eom_dataset(rng);
    const ThresholdPolicy policy{kdist(rng), rep % 2 ? Center::median : Center::mean};
    const auto stats = compute_occupation_stats(ds);
    std::map<std::string, std::vector<std::pair<double, double>>> by_occ;
    for (const auto& r : ds.rows()) by_occ[r.occ_code].emplace_back(r.years_edu, r.weight);
    for (const auto& r : ds.rows()) {
      const auto o = oracle::occupation(by_occ[r.occ_code]);
      const auto& s = stats.at(r.occ_code);
      CHECK(s.mean_edu == doctest::Approx(static_cast<double>(o.mean)).epsilon(1e-12));
      CHECK(s.median_edu == static_cast<double>(o.median));
      const bool supported = o.wsum >= 5 && o.n >= 2;
      const MatchStatus got = classify(r.years_edu, s, policy);
      if (!supported) {
        CHECK(got == MatchStatus::unclassifiable);
        continue;
      }
      const long double center = policy.center == Center::mean ? o.mean : o.median;
      const std::string want = oracle::classify(r.years_edu, center, o.sd, policy.k);
      if (want == "tie") continue;
      CHECK(got == (want == "over" ? MatchStatus::overeducated
                    : want == "under" ? MatchStatus::undereducated
                                      : MatchStatus::adequate));
      const auto d = decompose(r.years_edu, s, got, policy);
      CHECK(d.identity_residual() == 0.0);
      ++compared;
    }
  }
  CHECK(compared > 500);
}

TEST_CASE("attached columns leave unclassifiable rows missing") {
  std::vector<WorkerRecord> rows{worker("411", 8, 2), worker("411", 10, 2), worker("411", 12, 2), worker("999", 5, 1)};
  const Dataset ds(rows, "mem");
  const Dataset out = attach_eom_columns(ds, compute_occupation_stats(ds));
  CHECK(label_field(out[0], "match_status") == to_string(MatchStatus::undereducated));
  CHECK(numeric_field(out[0], "deficit_edu") == doctest::Approx(2.0));
  CHECK(label_field(out[3], "match_status") == to_string(MatchStatus::unclassifiable));
  CHECK_FALSE(numeric_field(out[3], "required_edu").has_value());
}

TEST_CASE("adequate share is nondecreasing in k") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    FixtureConfig fc = FixtureConfig::standard();
    fc.n = 2000;
    fc.seed = seed;
    const Dataset ds = filter_analysis_sample(synth_fixture(fc), FilterSpec{{{"employment_status", {"wage_salary", "self_employed"}, {}, {}}}});
    for (Center c : {Center::mean, Center::median}) {
      const ReportTable t = sensitivity_sweep(ds, {0.9, 1.0, 1.1}, {c});
      const std::string cn = to_string(c);
      const double a = adequate_share(t, "k=0.9, " + cn + ": ");
      const double b = adequate_share(t, "k=1, " + cn + ": ");
      const double d = adequate_share(t, "k=1.1, " + cn + ": ");
      CHECK(a <= b);
      CHECK(b <= d);
    }
  }
}

TEST_CASE("threshold policy validation") {
  CHECK(test::error_code([] { ThresholdPolicy{0.0, Center::mean}.validate(); }) == "BadThreshold");
  CHECK(test::error_code([] { parse_center("mode"); }) == "BadCenter");
}

}
