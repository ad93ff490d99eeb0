#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace eom {

/// A table cell: a number with an optional standard error and significance
/// stars, or free text (markers such as "inf" or "n/a").
struct Cell {
  std::optional<double> value;
  std::optional<double> se;
  int stars = 0;
  std::string text;

  bool empty() const { return !value && text.empty(); }
  bool operator==(const Cell&) const = default;

  static Cell number(double v) { return Cell{v, std::nullopt, 0, {}}; }
  static Cell label(std::string t) { return Cell{std::nullopt, std::nullopt, 0, std::move(t)}; }
  /// Coefficient with SE; stars from a two-sided normal test of b / se.
  static Cell coefficient(double b, double se);
  /// Test statistic with stars from its p-value.
  static Cell statistic(double stat, double p_value);
};

/// *** below 1%, ** below 5%, * below 10%.
int stars_for_p(double p);

struct ReportTable {
  std::string title;
  std::vector<std::string> row_labels;
  std::vector<std::string> column_labels;
  std::vector<std::vector<Cell>> cells;  // [row][column]
  std::vector<std::string> footnotes;

  std::size_t rows() const { return row_labels.size(); }
  std::size_t cols() const { return column_labels.size(); }
  void add_row(std::string label, std::vector<Cell> row);
  /// Adds an empty column to every row.
  std::size_t add_column(std::string label);
  const Cell& at(std::size_t r, std::size_t c) const { return cells.at(r).at(c); }
  Cell& at(std::size_t r, std::size_t c) { return cells.at(r).at(c); }
  std::optional<std::size_t> row_index(std::string_view label) const;
  std::optional<std::size_t> column_index(std::string_view label) const;

  bool operator==(const ReportTable&) const = default;
};

enum class Format { csv, json, markdown };

Format parse_format(std::string_view s);
std::string extension(Format f);

/// Number text used by markdown: integers verbatim, otherwise `digits`
/// significant digits.
std::string format_number(double v, int digits = 3);
/// "0.0298***\n(0.00182)" style rendering of one cell.
std::string format_cell(const Cell& cell, int digits = 3);

nlohmann::json to_json(const ReportTable& t);
ReportTable table_from_json(const nlohmann::json& j);

std::string to_csv(const ReportTable& t);
ReportTable table_from_csv(std::string_view text);

std::string to_markdown(const ReportTable& t, int digits = 3);

std::string render(const ReportTable& t, Format f);
/// Writes `t` to `path`. The parent directory must exist.
void emit(const ReportTable& t, Format f, const std::filesystem::path& path);

}  // namespace eom
