#include <doctest.h>

#include <fstream>

#include "eom/simulation.hpp"
#include "eom/survey_data.hpp"
#include "support.hpp"

using namespace eom;
using eom::test::worker;

TEST_SUITE("survey_data") {

TEST_CASE("CSV round trip keeps every field") {
  FixtureConfig fc = FixtureConfig::standard();
  fc.n = 300;
  fc.seed = 11;
  const Dataset ds = synth_fixture(fc);
  test::TempDir tmp("csv");
  const auto path = tmp.path / "fixture.csv";
  write_csv(ds, path);
  const Dataset back = load_csv(path);
  REQUIRE(back.size() == ds.size());
  CHECK(back.numeric_extras() == ds.numeric_extras());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& a = ds[i];
    const auto& b = back[i];
    CHECK(a.person_id == b.person_id);
    CHECK(a.years_edu == b.years_edu);
    CHECK(a.weight == b.weight);
    CHECK(a.daily_wage == b.daily_wage);
    CHECK(a.occ_code == b.occ_code);
    CHECK(a.migrant == b.migrant);
    CHECK(a.migration_reason == b.migration_reason);
    CHECK(a.years_since_migration == b.years_since_migration);
    CHECK(a.household.mpce == b.household.mpce);
    CHECK(a.numeric_extra == b.numeric_extra);
    CHECK(label_field(a, "district_id") == label_field(b, "district_id"));
  }
}

TEST_CASE("education labels map through the codebook") {
  test::TempDir tmp("codebook");
  const auto path = tmp.path / "d.csv";
  std::ofstream(path) << "person_id,years_edu,occ_code,weight,employment_status\n"
                         "a,secondary,411,1.5,wage_salary\n"
                         "b,Graduate,411,2,wage_salary\n"
                         "c,7,0,1,self_employed\n";
  const Dataset ds = load_csv(path);
  CHECK(ds[0].years_edu == 10.0);
  CHECK(ds[1].years_edu == 15.0);
  CHECK(ds[2].occ_code == "000");

  Schema s;
  s.codebook.years = {{"secondary", 11.0}};
  CHECK(test::error_code([&] { load_csv(path, s); }) == "ParseError");
}

TEST_CASE("ingestion errors are data errors") {
  test::TempDir tmp("bad");
  const auto path = tmp.path / "d.csv";
  std::ofstream(path) << "person_id,years_edu,weight\na,10,1\n";
  CHECK(test::error_code([&] { load_csv(path); }) == "MissingColumn");
  CHECK(test::error_kind([&] { load_csv(path); }) == ErrorKind::data);

  std::ofstream(path) << "person_id,years_edu,occ_code,weight\na,10,411,-1\n";
  CHECK(test::error_code([&] { load_csv(path); }) == "ParseError");
  std::ofstream(path) << "person_id,years_edu,occ_code,weight\na,30,411,1\n";
  CHECK(test::error_code([&] { load_csv(path); }) == "ParseError");
  std::ofstream(path) << "person_id,years_edu,occ_code,weight,migrant,distance\na,3,411,1,0,inter_state\n";
  CHECK(test::error_code([&] { load_csv(path); }) == "ParseError");
  CHECK(test::error_code([&] { load_csv(tmp.path / "absent.csv"); }) == "IoError");
}

TEST_CASE("analysis filter and wage trimming") {
  std::vector<WorkerRecord> rows;
  for (int i = 0; i < 400; ++i) {
    WorkerRecord r = worker("411", 10.0);
    r.age = 10.0 + (i % 60);
    r.daily_wage = 1.0 + i;
    r.employment_status = i % 4 == 0 ? EmploymentStatus::self_employed : EmploymentStatus::wage_salary;
    rows.push_back(r);
  }
  const Dataset ds(rows, "mem");
  const Dataset sample = filter_analysis_sample(ds);
  std::size_t expect = 0;
  for (const auto& r : rows)
    if (*r.age >= 15 && *r.age <= 59 && r.employment_status == EmploymentStatus::wage_salary) ++expect;
  CHECK(sample.size() == expect);

  const Dataset trimmed = trim_wage_tails(ds, 0.01);
  CHECK(trimmed.size() == 400 - 2 * 4);
  double lo = 1e9, hi = -1e9;
  for (const auto& r : trimmed.rows()) {
    lo = std::min(lo, *r.daily_wage);
    hi = std::max(hi, *r.daily_wage);
  }
  CHECK(lo == 5.0);
  CHECK(hi == 396.0);
  CHECK(trimmed.provenance().size() == 2);
}

TEST_CASE("design encoding drops the categorical base and names dummies") {
  std::vector<WorkerRecord> rows;
  for (int i = 0; i < 6; ++i) {
    WorkerRecord r = worker("411", 8.0 + i);
    r.gender = i % 2 ? Gender::female : Gender::male;
    r.daily_wage = 50.0 + 10 * i;
    rows.push_back(r);
  }
  ModelSpec m;
  m.numeric = {"years_edu", "years_edu^2"};
  m.categorical = {{"gender", "male"}};
  const DesignMatrix d = encode_design(Dataset(rows, "mem"), m);
  CHECK(d.column_names == std::vector<std::string>{"(Intercept)", "years_edu", "years_edu^2", "gender[female]"});
  CHECK(d.column("years_edu^2")(3) == doctest::Approx(121.0));
  CHECK(d.column("gender[female]")(1) == 1.0);
  CHECK(d.response(0) == doctest::Approx(std::log(50.0)));

  m.numeric = {"no_such_field"};
  CHECK(test::error_kind([&] { encode_design(Dataset(rows, "mem"), m); }) == ErrorKind::config);
}

TEST_CASE("weighted shares add to 100") {
  std::vector<WorkerRecord> rows;
  const double w[] = {1.0, 2.0, 3.0, 4.0};
  for (int i = 0; i < 4; ++i) {
    WorkerRecord r = worker("411", 10.0, w[i]);
    r.gender = i < 1 ? Gender::female : Gender::male;
    rows.push_back(r);
  }
  const ReportTable t = weighted_tabulate(Dataset(rows, "mem"), {"gender"}, Statistic::share());
  double total = 0.0;
  for (std::size_t r = 0; r < t.rows(); ++r)
    if (t.row_labels[r] != "Total") total += *t.at(r, 0).value;
  CHECK(total == doctest::Approx(100.0));
  CHECK(*t.at(*t.row_index("female"), 0).value == doctest::Approx(10.0));
}

}
