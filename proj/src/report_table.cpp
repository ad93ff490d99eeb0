#include "eom/report_table.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "csv.hpp"
#include "eom/error.hpp"
#include "eom/normal.hpp"

namespace eom {

int stars_for_p(double p) {
  if (!(p >= 0.0)) return 0;
  if (p < 0.01) return 3;
  if (p < 0.05) return 2;
  if (p < 0.10) return 1;
  return 0;
}

Cell Cell::coefficient(double b, double se) {
  Cell c{b, se, 0, {}};
  if (se > 0.0 && std::isfinite(se)) c.stars = stars_for_p(normal::two_sided_p(b / se));
  return c;
}

Cell Cell::statistic(double stat, double p_value) { return Cell{stat, std::nullopt, stars_for_p(p_value), {}}; }

void ReportTable::add_row(std::string label, std::vector<Cell> row) {
  row.resize(column_labels.size());
  row_labels.push_back(std::move(label));
  cells.push_back(std::move(row));
}

std::size_t ReportTable::add_column(std::string label) {
  column_labels.push_back(std::move(label));
  for (auto& row : cells) row.resize(column_labels.size());
  return column_labels.size() - 1;
}

std::optional<std::size_t> ReportTable::row_index(std::string_view label) const {
  for (std::size_t i = 0; i < row_labels.size(); ++i)
    if (row_labels[i] == label) return i;
  return std::nullopt;
}

std::optional<std::size_t> ReportTable::column_index(std::string_view label) const {
  for (std::size_t i = 0; i < column_labels.size(); ++i)
    if (column_labels[i] == label) return i;
  return std::nullopt;
}

Format parse_format(std::string_view s) {
  if (s == "csv") return Format::csv;
  if (s == "json") return Format::json;
  if (s == "markdown" || s == "md") return Format::markdown;
  throw config_error("UnknownFormat", std::string(s));
}

std::string extension(Format f) {
  switch (f) {
    case Format::csv:
      return ".csv";
    case Format::json:
      return ".json";
    case Format::markdown:
      return ".md";
  }
  return {};
}

std::string format_number(double v, int digits) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  if (v == std::round(v) && std::abs(v) < 1e15) {
    std::snprintf(buf, sizeof buf, "%.0f", v);
  } else {
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  }
  return buf;
}

std::string format_cell(const Cell& cell, int digits) {
  if (!cell.value) return cell.text;
  std::string out = format_number(*cell.value, digits) + std::string(static_cast<std::size_t>(cell.stars), '*');
  if (cell.se) out += "\n(" + format_number(*cell.se, digits) + ")";
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json cell_json(const Cell& c) {
  nlohmann::json j;
  j["value"] = c.value ? nlohmann::json(*c.value) : nlohmann::json(nullptr);
  j["se"] = c.se ? nlohmann::json(*c.se) : nlohmann::json(nullptr);
  j["stars"] = c.stars;
  j["text"] = c.text;
  return j;
}

Cell cell_from_json(const nlohmann::json& j) {
  Cell c;
  if (!j.at("value").is_null()) c.value = j.at("value").get<double>();
  if (!j.at("se").is_null()) c.se = j.at("se").get<double>();
  c.stars = j.at("stars").get<int>();
  c.text = j.at("text").get<std::string>();
  return c;
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

nlohmann::json to_json(const ReportTable& t) {
  nlohmann::json j;
  j["title"] = t.title;
  j["row_labels"] = t.row_labels;
  j["column_labels"] = t.column_labels;
  j["cells"] = nlohmann::json::array();
  for (const auto& row : t.cells) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& c : row) r.push_back(cell_json(c));
    j["cells"].push_back(std::move(r));
  }
  j["footnotes"] = t.footnotes;
  return j;
}

ReportTable table_from_json(const nlohmann::json& j) {
  ReportTable t;
  t.title = j.at("title").get<std::string>();
  t.row_labels = j.at("row_labels").get<std::vector<std::string>>();
  t.column_labels = j.at("column_labels").get<std::vector<std::string>>();
  for (const auto& r : j.at("cells")) {
    std::vector<Cell> row;
    for (const auto& c : r) row.push_back(cell_from_json(c));
    t.cells.push_back(std::move(row));
  }
  t.footnotes = j.at("footnotes").get<std::vector<std::string>>();
  return t;
}

// ---------------------------------------------------------------------------
// CSV: one line per cell so that SEs and markers survive a round trip.

std::string to_csv(const ReportTable& t) {
  std::string out = "row,column,value,se,stars,text\n";
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) {
      const Cell& cell = t.at(r, c);
      out += csv::join({t.row_labels[r], t.column_labels[c], cell.value ? fmt17(*cell.value) : "",
                        cell.se ? fmt17(*cell.se) : "", std::to_string(cell.stars), cell.text});
      out.push_back('\n');
    }
  }
  return out;
}

ReportTable table_from_csv(std::string_view text) {
  auto records = csv::parse(text);
  if (records.empty() || records.front().size() != 6 || records.front()[0] != "row")
    throw data_error("ParseError", "not a report table CSV");
  ReportTable t;
  std::map<std::string, std::size_t> row_pos, col_pos;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& rec = records[i];
    if (rec.size() != 6) throw data_error("ParseError", "report CSV line " + std::to_string(i + 1));
    if (!row_pos.contains(rec[0])) {
      row_pos[rec[0]] = t.row_labels.size();
      t.add_row(rec[0], {});
    }
    if (!col_pos.contains(rec[1])) col_pos[rec[1]] = t.add_column(rec[1]);
    Cell& cell = t.at(row_pos[rec[0]], col_pos[rec[1]]);
    if (!rec[2].empty()) cell.value = std::stod(rec[2]);
    if (!rec[3].empty()) cell.se = std::stod(rec[3]);
    cell.stars = std::stoi(rec[4]);
    cell.text = rec[5];
  }
  return t;
}

// ---------------------------------------------------------------------------
// Markdown: SEs go on a second line beneath their coefficients.

namespace {

std::string md_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += "\\|";
    else if (c == '\n') out += ' ';
    else out.push_back(c);
  }
  return out;
}

std::string md_line(const std::vector<std::string>& fields) {
  std::string line = "|";
  for (const auto& f : fields) line += " " + f + " |";
  return line + "\n";
}

}  // namespace

std::string to_markdown(const ReportTable& t, int digits) {
  std::ostringstream out;
  if (!t.title.empty()) out << "### " << md_escape(t.title) << "\n\n";
  std::vector<std::string> header{""};
  for (const auto& c : t.column_labels) header.push_back(md_escape(c));
  out << md_line(header);
  out << md_line(std::vector<std::string>(header.size(), "---"));
  for (std::size_t r = 0; r < t.rows(); ++r) {
    std::vector<std::string> first{md_escape(t.row_labels[r])}, second{""};
    bool has_second = false;
    for (std::size_t c = 0; c < t.cols(); ++c) {
      const std::string text = format_cell(t.at(r, c), digits);
      const auto nl = text.find('\n');
      first.push_back(md_escape(text.substr(0, nl)));
      if (nl != std::string::npos) {
        second.push_back(md_escape(text.substr(nl + 1)));
        has_second = true;
      } else {
        second.emplace_back();
      }
    }
    out << md_line(first);
    if (has_second) out << md_line(second);
  }
  if (!t.footnotes.empty()) {
    out << "\n";
    for (const auto& f : t.footnotes) out << "- " << md_escape(f) << "\n";
  }
  return out.str();
}

std::string render(const ReportTable& t, Format f) {
  switch (f) {
    case Format::csv:
      return to_csv(t);
    case Format::json:
      return to_json(t).dump(2) + "\n";
    case Format::markdown:
      return to_markdown(t);
  }
  return {};
}

void emit(const ReportTable& t, Format f, const std::filesystem::path& path) {
  const auto parent = path.parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent))
    throw data_error("IoError", "directory does not exist: " + parent.string());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("IoError", "cannot write " + path.string());
  out << render(t, f);
  if (!out) throw data_error("IoError", "write failed for " + path.string());
}

}  // namespace eom
