#include <doctest.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "eom/report_table.hpp"
#include "support.hpp"

using namespace eom;

namespace {

ReportTable sample_table() {
  ReportTable t;
  t.title = "Returns to education";
  t.add_column("Migrants");
  t.add_column("Non-migrants");
  t.add_row("Attained education", {Cell::coefficient(0.0298, 0.00182), Cell::coefficient(0.1 / 3.0, 0.05)});
  t.add_row("Observations", {Cell::number(13887), Cell::number(1e-17 + 2.0 / 7.0)});
  t.add_row("VIF", {Cell::label("inf"), Cell{}});
  t.footnotes.push_back("Robust standard errors are given in parenthesis.");
  return t;
}

}  // namespace

TEST_SUITE("report_table") {

TEST_CASE("paper layout: coefficient with stars over a parenthesized SE") {
  CHECK(format_cell(Cell::coefficient(0.0298, 0.00182)) == "0.0298***\n(0.00182)");
  const std::string md = to_markdown(sample_table());
  CHECK(md.find("| Attained education | 0.0298*** |") != std::string::npos);
  CHECK(md.find("|  | (0.00182) |") != std::string::npos);
}

TEST_CASE("stars follow the 1/5/10 percent convention") {
  CHECK(stars_for_p(0.009) == 3);
  CHECK(stars_for_p(0.01) == 2);
  CHECK(stars_for_p(0.049) == 2);
  CHECK(stars_for_p(0.05) == 1);
  CHECK(stars_for_p(0.099) == 1);
  CHECK(stars_for_p(0.1) == 0);
  // z = 1.96 sits just under the 5% line.
  CHECK(Cell::coefficient(1.96, 1.0).stars == 2);
  CHECK(Cell::coefficient(1.0, 0.0).stars == 0);
}

TEST_CASE("JSON round trip is exact") {
  const ReportTable t = sample_table();
  CHECK(table_from_json(nlohmann::json::parse(to_json(t).dump())) == t);
}

TEST_CASE("CSV round trip is numerically exact") {
  const ReportTable t = sample_table();
  const ReportTable back = table_from_csv(to_csv(t));
  REQUIRE(back.rows() == t.rows());
  REQUIRE(back.cols() == t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) {
      CHECK(back.at(r, c).value == t.at(r, c).value);
      CHECK(back.at(r, c).se == t.at(r, c).se);
      CHECK(back.at(r, c).text == t.at(r, c).text);
    }
}

TEST_CASE("emit writes files and an empty table keeps its header") {
  test::TempDir tmp("emit");
  ReportTable empty;
  empty.title = "Empty";
  empty.add_column("A");
  for (Format f : {Format::csv, Format::json, Format::markdown}) {
    const auto p = tmp.path / ("empty" + extension(f));
    emit(empty, f, p);
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(!ss.str().empty());
  }
  CHECK(table_from_json(nlohmann::json::parse(std::ifstream(tmp.path / "empty.json"))) == empty);
  CHECK(test::error_code([&] { emit(empty, Format::csv, tmp.path / "missing_dir" / "x.csv"); }) == "IoError");
}

TEST_CASE("format names") {
  CHECK(parse_format("csv") == Format::csv);
  CHECK(parse_format("markdown") == Format::markdown);
  CHECK(test::error_kind([] { parse_format("xlsx"); }) == ErrorKind::config);
}

}
