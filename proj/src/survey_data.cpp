#include "eom/survey_data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>

#include "csv.hpp"
#include "eom/error.hpp"

namespace eom {

// ---------------------------------------------------------------------------
// Enum text

std::string to_string(Gender v) {
  switch (v) {
    case Gender::male: return "male";
    case Gender::female: return "female";
    case Gender::missing: break;
  }
  return std::string(kMissingLevel);
}

std::string to_string(Marital v) {
  switch (v) {
    case Marital::unmarried: return "unmarried";
    case Marital::married: return "married";
    case Marital::other: return "other";
    case Marital::missing: break;
  }
  return std::string(kMissingLevel);
}

std::string to_string(Sector v) {
  switch (v) {
    case Sector::rural: return "rural";
    case Sector::urban: return "urban";
    case Sector::missing: break;
  }
  return std::string(kMissingLevel);
}

std::string to_string(EmploymentStatus v) {
  switch (v) {
    case EmploymentStatus::wage_salary: return "wage_salary";
    case EmploymentStatus::self_employed: return "self_employed";
    case EmploymentStatus::other: return "other";
    case EmploymentStatus::missing: break;
  }
  return std::string(kMissingLevel);
}

std::string to_string(MigrationReason v) {
  switch (v) {
    case MigrationReason::job_search: return "job_search";
    case MigrationReason::confirm_job: return "confirm_job";
    case MigrationReason::other_work: return "other_work";
    case MigrationReason::education: return "education";
    case MigrationReason::forced: return "forced";
    case MigrationReason::marriage: return "marriage";
    case MigrationReason::tied: return "tied";
    case MigrationReason::other: return "other";
    case MigrationReason::none: break;
  }
  return "none";
}

std::string to_string(Stream v) {
  switch (v) {
    case Stream::RR: return "RR";
    case Stream::RU: return "RU";
    case Stream::UR: return "UR";
    case Stream::UU: return "UU";
    case Stream::none: break;
  }
  return "none";
}

std::string to_string(Distance v) {
  switch (v) {
    case Distance::intra_district: return "intra_district";
    case Distance::inter_district: return "inter_district";
    case Distance::inter_state: return "inter_state";
    case Distance::none: break;
  }
  return "none";
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool is_missing_token(const std::string& s) { return s.empty() || s == "NA" || s == "na" || s == "." || s == "NaN"; }

std::optional<double> parse_number(std::string_view text) {
  const std::string s = trim(text);
  if (is_missing_token(s)) return std::nullopt;
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

template <class E>
std::optional<E> parse_enum(const std::string& raw, std::initializer_list<std::pair<const char*, E>> table) {
  const std::string s = lower(trim(raw));
  for (const auto& [name, value] : table)
    if (s == name) return value;
  return std::nullopt;
}

Gender parse_gender(const std::string& s) {
  return parse_enum<Gender>(s, {{"male", Gender::male}, {"m", Gender::male}, {"female", Gender::female}, {"f", Gender::female}})
      .value_or(Gender::missing);
}

Marital parse_marital(const std::string& s) {
  return parse_enum<Marital>(s, {{"unmarried", Marital::unmarried},
                                 {"never_married", Marital::unmarried},
                                 {"married", Marital::married},
                                 {"other", Marital::other},
                                 {"widowed", Marital::other},
                                 {"divorced", Marital::other},
                                 {"separated", Marital::other}})
      .value_or(Marital::missing);
}

Sector parse_sector(const std::string& s) {
  return parse_enum<Sector>(s, {{"rural", Sector::rural}, {"urban", Sector::urban}}).value_or(Sector::missing);
}

EmploymentStatus parse_status(const std::string& s) {
  return parse_enum<EmploymentStatus>(s, {{"wage_salary", EmploymentStatus::wage_salary},
                                          {"wage/salary", EmploymentStatus::wage_salary},
                                          {"self_employed", EmploymentStatus::self_employed},
                                          {"other", EmploymentStatus::other}})
      .value_or(EmploymentStatus::missing);
}

std::optional<MigrationReason> parse_reason(const std::string& s) {
  if (is_missing_token(trim(s))) return MigrationReason::none;
  return parse_enum<MigrationReason>(s, {{"job_search", MigrationReason::job_search},
                                         {"confirm_job", MigrationReason::confirm_job},
                                         {"other_work", MigrationReason::other_work},
                                         {"education", MigrationReason::education},
                                         {"forced", MigrationReason::forced},
                                         {"marriage", MigrationReason::marriage},
                                         {"tied", MigrationReason::tied},
                                         {"other", MigrationReason::other},
                                         {"none", MigrationReason::none}});
}

std::optional<Stream> parse_stream(const std::string& s) {
  if (is_missing_token(trim(s))) return Stream::none;
  return parse_enum<Stream>(
      s, {{"rr", Stream::RR}, {"ru", Stream::RU}, {"ur", Stream::UR}, {"uu", Stream::UU}, {"none", Stream::none}});
}

std::optional<Distance> parse_distance(const std::string& s) {
  if (is_missing_token(trim(s))) return Distance::none;
  return parse_enum<Distance>(s, {{"intra_district", Distance::intra_district},
                                  {"inter_district", Distance::inter_district},
                                  {"inter_state", Distance::inter_state},
                                  {"none", Distance::none}});
}

std::optional<bool> parse_bool(const std::string& raw) {
  const std::string s = lower(trim(raw));
  if (s == "1" || s == "true" || s == "yes" || s == "y") return true;
  if (s == "0" || s == "false" || s == "no" || s == "n") return false;
  return std::nullopt;
}

std::string label_or_missing(const std::string& raw) {
  std::string s = trim(raw);
  return is_missing_token(s) ? std::string(kMissingLevel) : s;
}

const std::set<std::string, std::less<>>& numeric_builtins() {
  static const std::set<std::string, std::less<>> s{
      "daily_wage", "log_wage", "years_edu", "age", "years_since_migration", "dependents_count",
      "household_size", "mpce", "weight", "migrant", "is_employed", "is_wage_salary"};
  return s;
}

const std::set<std::string, std::less<>>& label_builtins() {
  static const std::set<std::string, std::less<>> s{
      "person_id",    "occ_code",        "occ_division",   "industry", "gender",         "marital",
      "social_group", "religion",        "sector",         "state_id", "district_id",    "migrant_status",
      "migration_reason", "stream",      "distance",       "prior_employment", "household_type",
      "land_category", "employment_status"};
  return s;
}

std::string format_plain(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string validate_record(const WorkerRecord& r) {
  if (!(r.weight > 0.0) || !std::isfinite(r.weight)) return "weight must be positive";
  if (!(r.years_edu >= 0.0 && r.years_edu <= 25.0)) return "years_edu outside [0, 25]";
  if (r.age && *r.age < 0.0) return "negative age";
  if (r.daily_wage && !(*r.daily_wage > 0.0)) return "daily_wage must be positive";
  if (!r.migrant && (r.migration_reason != MigrationReason::none || r.stream != Stream::none ||
                     r.distance != Distance::none || r.years_since_migration))
    return "non-migrant with migration fields";
  return {};
}

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(std::vector<WorkerRecord> rows, std::string source, std::vector<std::string> numeric_extras,
                 std::vector<std::string> label_extras)
    : rows_(std::move(rows)),
      source_(std::move(source)),
      numeric_extras_(std::move(numeric_extras)),
      label_extras_(std::move(label_extras)) {
  log_.push_back({"load", source_ + " (" + std::to_string(rows_.size()) + " rows)"});
}

FieldKind Dataset::kind(std::string_view field) const {
  if (numeric_builtins().contains(field)) return FieldKind::numeric;
  if (label_builtins().contains(field)) return FieldKind::categorical;
  if (std::find(numeric_extras_.begin(), numeric_extras_.end(), field) != numeric_extras_.end())
    return FieldKind::numeric;
  if (std::find(label_extras_.begin(), label_extras_.end(), field) != label_extras_.end())
    return FieldKind::categorical;
  return FieldKind::unknown;
}

Dataset Dataset::derive(std::vector<WorkerRecord> rows, std::string operation, std::string detail) const {
  Dataset out = *this;
  out.rows_ = std::move(rows);
  out.log_.push_back({std::move(operation), std::move(detail)});
  return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices, std::string operation, std::string detail) const {
  std::vector<WorkerRecord> rows;
  rows.reserve(indices.size());
  for (std::size_t i : indices) rows.push_back(rows_.at(i));
  return derive(std::move(rows), std::move(operation), std::move(detail));
}

Dataset Dataset::with_numeric_column(const std::string& name, const std::vector<std::optional<double>>& values) const {
  if (values.size() != rows_.size()) throw config_error("ColumnLength", name);
  if (kind(name) != FieldKind::unknown &&
      std::find(numeric_extras_.begin(), numeric_extras_.end(), name) == numeric_extras_.end())
    throw config_error("FieldCollision", name);
  Dataset out = *this;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i]) out.rows_[i].numeric_extra[name] = *values[i];
    else out.rows_[i].numeric_extra.erase(name);
  }
  if (std::find(out.numeric_extras_.begin(), out.numeric_extras_.end(), name) == out.numeric_extras_.end())
    out.numeric_extras_.push_back(name);
  out.log_.push_back({"derive_column", name});
  return out;
}

Dataset Dataset::with_label_column(const std::string& name, const std::vector<std::string>& values) const {
  if (values.size() != rows_.size()) throw config_error("ColumnLength", name);
  if (kind(name) != FieldKind::unknown &&
      std::find(label_extras_.begin(), label_extras_.end(), name) == label_extras_.end())
    throw config_error("FieldCollision", name);
  Dataset out = *this;
  for (std::size_t i = 0; i < values.size(); ++i) out.rows_[i].label_extra[name] = values[i];
  if (std::find(out.label_extras_.begin(), out.label_extras_.end(), name) == out.label_extras_.end())
    out.label_extras_.push_back(name);
  out.log_.push_back({"derive_column", name});
  return out;
}

std::optional<double> numeric_field(const WorkerRecord& r, std::string_view f) {
  if (f == "daily_wage") return r.daily_wage;
  if (f == "log_wage") {
    if (r.daily_wage && *r.daily_wage > 0.0) return std::log(*r.daily_wage);
    return std::nullopt;
  }
  if (f == "years_edu") return r.years_edu;
  if (f == "age") return r.age;
  if (f == "years_since_migration") return r.years_since_migration;
  if (f == "dependents_count") return r.household.dependents_count;
  if (f == "household_size") return r.household.household_size;
  if (f == "mpce") return r.household.mpce;
  if (f == "weight") return r.weight;
  if (f == "migrant") return r.migrant ? 1.0 : 0.0;
  if (f == "is_employed" || f == "is_wage_salary") {
    if (r.employment_status == EmploymentStatus::missing) return std::nullopt;
    if (f == "is_wage_salary") return r.employment_status == EmploymentStatus::wage_salary ? 1.0 : 0.0;
    return r.employment_status == EmploymentStatus::other ? 0.0 : 1.0;
  }
  if (auto it = r.numeric_extra.find(f); it != r.numeric_extra.end()) return it->second;
  return std::nullopt;
}

std::string label_field(const WorkerRecord& r, std::string_view f) {
  auto or_missing = [](const std::string& s) { return s.empty() ? std::string(kMissingLevel) : s; };
  if (f == "person_id") return or_missing(r.person_id);
  if (f == "occ_code") return or_missing(r.occ_code);
  if (f == "occ_division") return r.occ_code.empty() ? std::string(kMissingLevel) : r.occ_code.substr(0, 1);
  if (f == "industry") return r.industry;
  if (f == "gender") return to_string(r.gender);
  if (f == "marital") return to_string(r.marital);
  if (f == "social_group") return r.social_group;
  if (f == "religion") return r.religion;
  if (f == "sector") return to_string(r.sector);
  if (f == "state_id") return r.state_id;
  if (f == "district_id") return r.district_id;
  if (f == "migrant_status") return r.migrant ? "migrant" : "non_migrant";
  if (f == "migration_reason") return to_string(r.migration_reason);
  if (f == "stream") return to_string(r.stream);
  if (f == "distance") return to_string(r.distance);
  if (f == "prior_employment") return r.prior_employment;
  if (f == "household_type") return r.household.household_type;
  if (f == "land_category") return r.household.land_category;
  if (f == "employment_status") return to_string(r.employment_status);
  if (auto it = r.label_extra.find(f); it != r.label_extra.end()) return or_missing(it->second);
  return std::string(kMissingLevel);
}

FieldValue field_value(const Dataset& ds, const WorkerRecord& r, std::string_view field) {
  switch (ds.kind(field)) {
    case FieldKind::numeric:
      if (auto v = numeric_field(r, field)) return *v;
      return std::monostate{};
    case FieldKind::categorical:
      return label_field(r, field);
    case FieldKind::unknown:
      break;
  }
  throw config_error("UnknownField", std::string(field));
}

std::string group_label(const Dataset& ds, const WorkerRecord& r, const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t g = 0; g < fields.size(); ++g) {
    if (g) out += " / ";
    FieldValue v = field_value(ds, r, fields[g]);
    if (auto* s = std::get_if<std::string>(&v)) out += *s;
    else if (auto* d = std::get_if<double>(&v)) out += format_plain(*d);
    else out += kMissingLevel;
  }
  return out;
}

std::string provenance_json(const Dataset& ds) {
  nlohmann::json j;
  j["source"] = ds.source();
  j["rows"] = ds.size();
  j["log"] = nlohmann::json::array();
  for (const auto& e : ds.provenance()) j["log"].push_back({{"operation", e.operation}, {"detail", e.detail}});
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Codebook and schema

Codebook Codebook::indian_default() {
  Codebook c;
  c.years = {{"no schooling", 0},   {"below primary", 2}, {"primary", 5},  {"middle", 8},
             {"secondary", 10},     {"higher secondary", 12}, {"graduate", 15}, {"postgraduate", 17}};
  return c;
}

Codebook Codebook::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("IoError", "cannot open codebook " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("ConfigParse", path.string() + ": " + e.what());
  }
  Codebook c;
  for (auto& [label, years] : j.items()) {
    if (!years.is_number()) throw config_error("ConfigParse", "codebook entry " + label + " is not a number");
    c.years[lower(label)] = years.get<double>();
  }
  return c;
}

std::optional<double> Codebook::lookup(std::string_view label) const {
  const std::string key = lower(trim(label));
  if (auto it = years.find(key); it != years.end()) return it->second;
  return std::nullopt;
}

const std::vector<std::string>& builtin_columns() {
  static const std::vector<std::string> cols{
      "person_id", "daily_wage",       "years_edu",        "occ_code",         "industry",       "age",
      "gender",    "marital",          "social_group",     "religion",         "sector",         "state_id",
      "district_id", "migrant",        "migration_reason", "stream",           "distance",       "years_since_migration",
      "prior_employment", "dependents_count", "household_type", "household_size", "land_category", "mpce",
      "weight",    "employment_status"};
  return cols;
}

Schema Schema::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("IoError", "cannot open schema " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("ConfigParse", path.string() + ": " + e.what());
  }
  Schema s;
  if (j.contains("columns")) s.columns = j["columns"].get<std::map<std::string, std::string>>();
  if (j.contains("numeric_extras")) s.numeric_extras = j["numeric_extras"].get<std::map<std::string, std::string>>();
  if (j.contains("label_extras")) s.label_extras = j["label_extras"].get<std::map<std::string, std::string>>();
  if (j.contains("codebook")) {
    std::filesystem::path cb = j["codebook"].get<std::string>();
    if (cb.is_relative()) cb = path.parent_path() / cb;
    s.codebook = Codebook::from_json_file(cb);
  }
  return s;
}

std::string Schema::header_for(const std::string& field) const {
  if (auto it = columns.find(field); it != columns.end()) return it->second;
  return field;
}

// ---------------------------------------------------------------------------
// CSV ingestion

namespace {

constexpr std::string_view kLabelPrefix = "label:";

[[noreturn]] void parse_fail(std::size_t row, const std::string& column, const std::string& why) {
  throw data_error("ParseError", "row " + std::to_string(row) + ", column " + column + ": " + why);
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const Schema& schema) {
  if (!std::filesystem::exists(path)) throw data_error("IoError", "no such file " + path.string());
  const auto records = csv::parse(csv::read_file(path.string()));
  std::vector<const std::vector<std::string>*> lines;
  for (const auto& r : records)
    if (!(r.size() == 1 && trim(r[0]).empty())) lines.push_back(&r);
  if (lines.empty()) throw data_error("EmptyFile", path.string());

  std::map<std::string, std::size_t> header;
  for (std::size_t i = 0; i < lines[0]->size(); ++i) header[trim((*lines[0])[i])] = i;
  if (lines.size() == 1) throw data_error("EmptyFile", path.string() + " has a header but no rows");

  // field -> column index (absent optional columns are skipped)
  std::map<std::string, std::size_t> col;
  static const std::set<std::string> required{"weight", "occ_code", "years_edu"};
  for (const auto& field : builtin_columns()) {
    const std::string h = schema.header_for(field);
    const bool mapped = schema.columns.contains(field);
    if (auto it = header.find(h); it != header.end()) {
      col[field] = it->second;
    } else if (mapped || required.contains(field)) {
      throw data_error("MissingColumn", h);
    }
  }
  for (const auto& [field, h] : schema.columns)
    if (std::find(builtin_columns().begin(), builtin_columns().end(), field) == builtin_columns().end())
      throw config_error("UnknownField", field);

  std::vector<std::pair<std::string, std::size_t>> num_extra, lbl_extra;
  for (const auto& [field, h] : schema.numeric_extras) {
    auto it = header.find(h);
    if (it == header.end()) throw data_error("MissingColumn", h);
    num_extra.emplace_back(field, it->second);
  }
  for (const auto& [field, h] : schema.label_extras) {
    auto it = header.find(h);
    if (it == header.end()) throw data_error("MissingColumn", h);
    lbl_extra.emplace_back(field, it->second);
  }
  if (schema.numeric_extras.empty() && schema.label_extras.empty()) {
    // No declared extras: every unclaimed header becomes one. A "label:"
    // prefix forces a categorical column; otherwise numeric-looking columns
    // are numeric.
    std::set<std::size_t> claimed;
    for (const auto& [f, i] : col) claimed.insert(i);
    for (const auto& [h, i] : header) {
      if (claimed.contains(i) || h.empty()) continue;
      if (h.starts_with(kLabelPrefix)) {
        lbl_extra.emplace_back(h.substr(kLabelPrefix.size()), i);
        continue;
      }
      bool numeric = true;
      for (std::size_t r = 1; r < lines.size() && numeric; ++r) {
        const auto& line = *lines[r];
        if (i < line.size() && !is_missing_token(trim(line[i])) && !parse_number(line[i])) numeric = false;
      }
      (numeric ? num_extra : lbl_extra).emplace_back(h, i);
    }
  }

  std::vector<WorkerRecord> rows;
  rows.reserve(lines.size() - 1);
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto& line = *lines[li];
    const std::size_t rowno = li;
    auto cell = [&](const std::string& field) -> std::string {
      auto it = col.find(field);
      if (it == col.end() || it->second >= line.size()) return {};
      return line[it->second];
    };
    auto number = [&](const std::string& field) { return parse_number(cell(field)); };

    WorkerRecord r;
    r.person_id = trim(cell("person_id"));

    const auto w = number("weight");
    if (!w || !(*w > 0.0)) parse_fail(rowno, schema.header_for("weight"), "weight must be a positive number");
    r.weight = *w;

    const std::string edu_text = trim(cell("years_edu"));
    if (auto e = parse_number(edu_text)) {
      r.years_edu = *e;
    } else if (auto y = schema.codebook.lookup(edu_text)) {
      r.years_edu = *y;
    } else {
      parse_fail(rowno, schema.header_for("years_edu"), "not a number or codebook level: '" + edu_text + "'");
    }
    if (!(r.years_edu >= 0.0 && r.years_edu <= 25.0))
      parse_fail(rowno, schema.header_for("years_edu"), "outside [0, 25]");

    r.employment_status = parse_status(cell("employment_status"));
    const std::string occ = trim(cell("occ_code"));
    if (occ.empty() || is_missing_token(occ)) {
      if (r.employment_status != EmploymentStatus::other)
        parse_fail(rowno, schema.header_for("occ_code"), "required for workers");
    } else {
      if (occ.size() > 3 || !std::all_of(occ.begin(), occ.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
        parse_fail(rowno, schema.header_for("occ_code"), "not a 3-digit code: '" + occ + "'");
      r.occ_code = std::string(3 - occ.size(), '0') + occ;
    }

    r.daily_wage = number("daily_wage");
    r.industry = label_or_missing(cell("industry"));
    r.age = number("age");
    if (r.age && *r.age < 0.0) r.age.reset();
    r.gender = parse_gender(cell("gender"));
    r.marital = parse_marital(cell("marital"));
    r.social_group = label_or_missing(cell("social_group"));
    r.religion = label_or_missing(cell("religion"));
    r.sector = parse_sector(cell("sector"));
    r.state_id = label_or_missing(cell("state_id"));
    r.district_id = label_or_missing(cell("district_id"));
    r.migrant = parse_bool(cell("migrant")).value_or(false);
    r.migration_reason = parse_reason(cell("migration_reason")).value_or(MigrationReason::other);
    r.stream = parse_stream(cell("stream")).value_or(Stream::none);
    r.distance = parse_distance(cell("distance")).value_or(Distance::none);
    r.years_since_migration = number("years_since_migration");
    r.prior_employment = label_or_missing(cell("prior_employment"));
    r.household.dependents_count = number("dependents_count");
    r.household.household_type = label_or_missing(cell("household_type"));
    r.household.household_size = number("household_size");
    r.household.land_category = label_or_missing(cell("land_category"));
    r.household.mpce = number("mpce");
    if (!r.migrant && (r.migration_reason != MigrationReason::none || r.stream != Stream::none ||
                       r.distance != Distance::none || r.years_since_migration))
      parse_fail(rowno, schema.header_for("migrant"), "non-migrant row carries migration fields");

    for (const auto& [field, i] : num_extra)
      if (i < line.size())
        if (auto v = parse_number(line[i])) r.numeric_extra[field] = *v;
    for (const auto& [field, i] : lbl_extra)
      r.label_extra[field] = i < line.size() ? label_or_missing(line[i]) : std::string(kMissingLevel);
    rows.push_back(std::move(r));
  }

  std::vector<std::string> num_names, lbl_names;
  for (const auto& [f, i] : num_extra) num_names.push_back(f);
  for (const auto& [f, i] : lbl_extra) lbl_names.push_back(f);
  return Dataset(std::move(rows), path.string(), std::move(num_names), std::move(lbl_names));
}

void write_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("IoError", "cannot write " + path.string());
  std::vector<std::string> header = builtin_columns();
  for (const auto& n : ds.numeric_extras()) header.push_back(n);
  for (const auto& n : ds.label_extras()) header.push_back(std::string(kLabelPrefix) + n);
  out << csv::join(header) << '\n';

  auto opt = [](const std::optional<double>& v) { return v ? format_plain(*v) : std::string(); };
  auto lbl = [](const std::string& s) { return s == kMissingLevel ? std::string() : s; };
  for (const auto& r : ds.rows()) {
    std::vector<std::string> f{r.person_id,
                               opt(r.daily_wage),
                               format_plain(r.years_edu),
                               r.occ_code,
                               lbl(r.industry),
                               opt(r.age),
                               lbl(to_string(r.gender)),
                               lbl(to_string(r.marital)),
                               lbl(r.social_group),
                               lbl(r.religion),
                               lbl(to_string(r.sector)),
                               lbl(r.state_id),
                               lbl(r.district_id),
                               r.migrant ? "1" : "0",
                               to_string(r.migration_reason),
                               to_string(r.stream),
                               to_string(r.distance),
                               opt(r.years_since_migration),
                               lbl(r.prior_employment),
                               opt(r.household.dependents_count),
                               lbl(r.household.household_type),
                               opt(r.household.household_size),
                               lbl(r.household.land_category),
                               opt(r.household.mpce),
                               format_plain(r.weight),
                               lbl(to_string(r.employment_status))};
    for (const auto& n : ds.numeric_extras()) {
      auto it = r.numeric_extra.find(n);
      f.push_back(it == r.numeric_extra.end() ? std::string() : format_plain(it->second));
    }
    for (const auto& n : ds.label_extras()) {
      auto it = r.label_extra.find(n);
      f.push_back(it == r.label_extra.end() ? std::string() : lbl(it->second));
    }
    out << csv::join(f) << '\n';
  }
  if (!out) throw data_error("IoError", "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Filtering and trimming

FilterSpec FilterSpec::analysis_default() {
  FilterSpec s;
  s.conditions.push_back({"age", {}, 15.0, 59.0});
  s.conditions.push_back({"employment_status", {"wage_salary"}, std::nullopt, std::nullopt});
  return s;
}

std::string FilterSpec::describe() const {
  std::string out;
  for (const auto& c : conditions) {
    if (!out.empty()) out += " & ";
    out += c.field;
    if (!c.levels.empty()) {
      out += " in {";
      for (std::size_t i = 0; i < c.levels.size(); ++i) out += (i ? "," : "") + c.levels[i];
      out += "}";
    }
    if (c.min || c.max) {
      out += " in [" + (c.min ? format_plain(*c.min) : std::string("-inf")) + ", " +
             (c.max ? format_plain(*c.max) : std::string("inf")) + "]";
    }
  }
  return out.empty() ? "all rows" : out;
}

bool matches(const Dataset& ds, const WorkerRecord& r, const FilterSpec& spec) {
  for (const auto& c : spec.conditions) {
    const FieldKind k = ds.kind(c.field);
    if (k == FieldKind::unknown) throw config_error("UnknownField", c.field);
    if (!c.levels.empty()) {
      std::string label;
      if (k == FieldKind::categorical) {
        label = label_field(r, c.field);
      } else {
        auto v = numeric_field(r, c.field);
        if (!v) return false;
        label = format_plain(*v);
      }
      if (std::find(c.levels.begin(), c.levels.end(), label) == c.levels.end()) return false;
    }
    if (c.min || c.max) {
      if (k != FieldKind::numeric) throw config_error("NotNumeric", c.field);
      auto v = numeric_field(r, c.field);
      if (!v) return false;
      if (c.min && *v < *c.min) return false;
      if (c.max && *v > *c.max) return false;
    }
  }
  return true;
}

Dataset filter_analysis_sample(const Dataset& ds, const FilterSpec& criteria) {
  for (const auto& c : criteria.conditions)
    if (!ds.has_field(c.field)) throw config_error("UnknownField", c.field);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (matches(ds, ds[i], criteria)) keep.push_back(i);
  return ds.subset(keep, "filter", criteria.describe() + " -> " + std::to_string(keep.size()) + " rows");
}

Dataset trim_wage_tails(const Dataset& ds, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 0.1)) throw config_error("InvalidFraction", "trim fraction must lie in [0, 0.1]");
  std::vector<std::size_t> wage_rows;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds[i].daily_wage) wage_rows.push_back(i);
  if (wage_rows.empty()) throw data_error("NoWageColumn", "no row carries a daily wage");

  std::stable_sort(wage_rows.begin(), wage_rows.end(),
                   [&](std::size_t a, std::size_t b) { return *ds[a].daily_wage < *ds[b].daily_wage; });
  const auto per_tail =
      static_cast<std::size_t>(std::floor(fraction * static_cast<double>(wage_rows.size()) + 1e-9));
  std::vector<bool> drop(ds.size(), false);
  for (std::size_t j = 0; j < per_tail; ++j) {
    drop[wage_rows[j]] = true;
    drop[wage_rows[wage_rows.size() - 1 - j]] = true;
  }
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (!drop[i]) keep.push_back(i);
  return ds.subset(keep, "trim_wage_tails",
                   "fraction " + format_plain(fraction) + ", " + std::to_string(per_tail) + " rows per tail");
}

// ---------------------------------------------------------------------------
// Design matrices

std::vector<std::string> ModelSpec::referenced_fields() const {
  std::vector<std::string> out;
  auto add = [&](std::string f) {
    if (auto eq = f.find('='); eq != std::string::npos) f = f.substr(0, eq);
    if (auto caret = f.find('^'); caret != std::string::npos) f = f.substr(0, caret);
    if (std::find(out.begin(), out.end(), f) == out.end()) out.push_back(f);
  };
  add(response);
  for (const auto& n : numeric) add(n);
  for (const auto& c : categorical) add(c.field);
  for (const auto& inter : interactions)
    for (const auto& op : inter) add(op);
  if (!cluster.empty()) add(cluster);
  return out;
}

std::optional<Eigen::Index> DesignMatrix::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < column_names.size(); ++i)
    if (column_names[i] == name) return static_cast<Eigen::Index>(i);
  return std::nullopt;
}

Eigen::VectorXd DesignMatrix::column(std::string_view name) const {
  auto idx = column_index(name);
  if (!idx) throw config_error("UnknownColumn", std::string(name));
  return columns.col(*idx);
}

void DesignMatrix::check() const {
  if (response.size() != columns.rows() || weights.size() != columns.rows())
    throw config_error("ShapeMismatch", "response, columns and weights disagree in length");
  if (static_cast<Eigen::Index>(column_names.size()) != columns.cols())
    throw config_error("ShapeMismatch", "column names do not match column count");
  if (cluster_ids && cluster_ids->size() != columns.rows())
    throw config_error("ShapeMismatch", "cluster ids length");
  if (!source_rows.empty() && static_cast<Eigen::Index>(source_rows.size()) != columns.rows())
    throw config_error("ShapeMismatch", "source rows length");
  if ((weights.array() <= 0.0).any()) throw config_error("NonPositiveWeight", "weights must be positive");
}

DesignMatrix make_design(Eigen::VectorXd response, Eigen::MatrixXd columns, Eigen::VectorXd weights,
                         std::vector<std::string> names) {
  DesignMatrix d;
  if (names.empty())
    for (Eigen::Index j = 0; j < columns.cols(); ++j) names.push_back("x" + std::to_string(j));
  d.response = std::move(response);
  d.columns = std::move(columns);
  d.weights = std::move(weights);
  d.column_names = std::move(names);
  d.source_rows.resize(static_cast<std::size_t>(d.columns.rows()));
  std::iota(d.source_rows.begin(), d.source_rows.end(), std::size_t{0});
  d.check();
  return d;
}

DesignMatrix select_rows(const DesignMatrix& d, const std::vector<Eigen::Index>& rows) {
  DesignMatrix out;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.response.resize(n);
  out.columns.resize(n, d.k());
  out.weights.resize(n);
  if (d.cluster_ids) out.cluster_ids = Eigen::VectorXi(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index r = rows[static_cast<std::size_t>(i)];
    out.response(i) = d.response(r);
    out.columns.row(i) = d.columns.row(r);
    out.weights(i) = d.weights(r);
    if (d.cluster_ids) (*out.cluster_ids)(i) = (*d.cluster_ids)(r);
    if (!d.source_rows.empty()) out.source_rows.push_back(d.source_rows[static_cast<std::size_t>(r)]);
  }
  out.column_names = d.column_names;
  out.levels = d.levels;
  return out;
}

DesignMatrix select_columns(const DesignMatrix& d, const std::vector<std::string>& names) {
  DesignMatrix out = d;
  out.columns.resize(d.n(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) out.columns.col(static_cast<Eigen::Index>(j)) = d.column(names[j]);
  out.column_names = names;
  return out;
}

DesignMatrix append_columns(const DesignMatrix& d, const Eigen::MatrixXd& cols, const std::vector<std::string>& names) {
  if (cols.rows() != d.n() || static_cast<Eigen::Index>(names.size()) != cols.cols())
    throw config_error("ShapeMismatch", "appended columns do not fit the design");
  for (const auto& n : names)
    if (d.column_index(n)) throw config_error("DuplicateColumn", n);
  DesignMatrix out = d;
  out.columns.conservativeResize(Eigen::NoChange, d.k() + cols.cols());
  out.columns.rightCols(cols.cols()) = cols;
  out.column_names.insert(out.column_names.end(), names.begin(), names.end());
  return out;
}

namespace {

struct NumericTerm {
  std::string field;
  int power = 1;
};

NumericTerm parse_numeric_term(const std::string& term) {
  NumericTerm t{term, 1};
  if (auto caret = term.find('^'); caret != std::string::npos) {
    t.field = term.substr(0, caret);
    const std::string p = term.substr(caret + 1);
    int power = 0;
    auto [ptr, ec] = std::from_chars(p.data(), p.data() + p.size(), power);
    if (ec != std::errc() || ptr != p.data() + p.size() || power < 1)
      throw config_error("BadTerm", "cannot parse power in '" + term + "'");
    t.power = power;
  }
  return t;
}

std::string power_name(const NumericTerm& t) {
  return t.power == 1 ? t.field : t.field + "^" + std::to_string(t.power);
}

// A block of adjacent design columns evaluated together for one record.
struct Block {
  std::vector<std::string> names;
  std::function<void(const WorkerRecord&, double*)> eval;
};

std::string dummy_name(const std::string& field, const std::string& level) { return field + "[" + level + "]"; }

}  // namespace

DesignMatrix encode_design(const Dataset& ds, const ModelSpec& spec, const DesignMatrix* level_template) {
  auto require = [&](const std::string& field, FieldKind want) {
    const FieldKind k = ds.kind(field);
    if (k == FieldKind::unknown) throw config_error("UnknownField", field);
    if (want == FieldKind::numeric && k != FieldKind::numeric) throw config_error("NotNumeric", field);
    if (want == FieldKind::categorical && k != FieldKind::categorical) throw config_error("NotCategorical", field);
  };
  const bool log_response = spec.response == "log_wage";
  require(spec.response, FieldKind::numeric);

  std::vector<NumericTerm> numeric_terms;
  for (const auto& t : spec.numeric) {
    numeric_terms.push_back(parse_numeric_term(t));
    require(numeric_terms.back().field, FieldKind::numeric);
  }
  for (const auto& c : spec.categorical) require(c.field, FieldKind::categorical);
  if (!spec.cluster.empty()) require(spec.cluster, FieldKind::categorical);

  // Interaction operands: numeric fields that must be present on the row.
  std::vector<NumericTerm> interaction_numeric;
  for (const auto& inter : spec.interactions) {
    if (inter.size() < 2) throw config_error("BadTerm", "interaction needs at least two operands");
    for (const auto& op : inter) {
      if (auto eq = op.find('='); eq != std::string::npos) {
        require(op.substr(0, eq), FieldKind::categorical);
        continue;
      }
      const NumericTerm t = parse_numeric_term(op);
      if (ds.kind(t.field) == FieldKind::categorical) {
        const bool declared = std::any_of(spec.categorical.begin(), spec.categorical.end(),
                                          [&](const CategoricalTerm& c) { return c.field == t.field; });
        if (!declared) throw config_error("UndeclaredCategorical", t.field + " needs a base level");
      } else {
        require(t.field, FieldKind::numeric);
        interaction_numeric.push_back(t);
      }
    }
  }

  // Listwise deletion over numeric inputs.
  std::vector<std::size_t> used;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const WorkerRecord& r = ds[i];
    if (log_response) {
      if (!r.daily_wage) continue;
      if (!(*r.daily_wage > 0.0))
        throw data_error("NonPositiveWage", "row " + std::to_string(i) + " has wage " + format_plain(*r.daily_wage));
    } else if (!numeric_field(r, spec.response)) {
      continue;
    }
    bool ok = true;
    for (const auto& t : numeric_terms) ok = ok && numeric_field(r, t.field).has_value();
    for (const auto& t : interaction_numeric) ok = ok && numeric_field(r, t.field).has_value();
    if (ok) used.push_back(i);
  }

  // Categorical levels.
  std::map<std::string, std::vector<std::string>> levels;
  for (const auto& c : spec.categorical) {
    if (level_template) {
      auto it = level_template->levels.find(c.field);
      levels[c.field] = it == level_template->levels.end() ? std::vector<std::string>{} : it->second;
      continue;
    }
    std::set<std::string> seen;
    for (std::size_t i : used) seen.insert(label_field(ds[i], c.field));
    if (!seen.empty() && !seen.contains(c.base))
      throw data_error("BaseLevelAbsent", c.field + " has no rows at base level '" + c.base + "'");
    seen.erase(c.base);
    levels[c.field] = {seen.begin(), seen.end()};
  }

  auto numeric_block = [](const NumericTerm& t) {
    return Block{{power_name(t)}, [t](const WorkerRecord& r, double* out) {
                   const double v = *numeric_field(r, t.field);
                   *out = t.power == 1 ? v : std::pow(v, t.power);
                 }};
  };
  auto categorical_block = [&](const std::string& field) {
    const auto& lv = levels.at(field);
    Block b;
    std::map<std::string, std::size_t> pos;
    for (std::size_t j = 0; j < lv.size(); ++j) {
      b.names.push_back(dummy_name(field, lv[j]));
      pos[lv[j]] = j;
    }
    const std::size_t width = lv.size();
    b.eval = [field, pos, width](const WorkerRecord& r, double* out) {
      std::fill(out, out + width, 0.0);
      if (auto it = pos.find(label_field(r, field)); it != pos.end()) out[it->second] = 1.0;
    };
    return b;
  };
  auto dummy_block = [](const std::string& field, const std::string& level) {
    return Block{{dummy_name(field, level)},
                 [field, level](const WorkerRecord& r, double* out) { *out = label_field(r, field) == level ? 1.0 : 0.0; }};
  };

  std::vector<Block> blocks;
  if (spec.intercept)
    blocks.push_back(Block{{std::string(kInterceptName)}, [](const WorkerRecord&, double* out) { *out = 1.0; }});
  for (const auto& t : numeric_terms) blocks.push_back(numeric_block(t));
  for (const auto& c : spec.categorical) blocks.push_back(categorical_block(c.field));
  for (const auto& inter : spec.interactions) {
    std::vector<Block> ops;
    for (const auto& op : inter) {
      if (auto eq = op.find('='); eq != std::string::npos) {
        ops.push_back(dummy_block(op.substr(0, eq), op.substr(eq + 1)));
      } else {
        const NumericTerm t = parse_numeric_term(op);
        ops.push_back(ds.kind(t.field) == FieldKind::categorical ? categorical_block(t.field) : numeric_block(t));
      }
    }
    Block b;
    b.names = {""};
    for (const auto& op : ops) {
      std::vector<std::string> next;
      for (const auto& prefix : b.names)
        for (const auto& n : op.names) next.push_back(prefix.empty() ? n : prefix + ":" + n);
      b.names = std::move(next);
    }
    if (b.names.size() == 1 && b.names[0].empty()) b.names.clear();
    b.eval = [ops](const WorkerRecord& r, double* out) {
      std::vector<double> acc{1.0};
      for (const auto& op : ops) {
        std::vector<double> vals(op.names.size());
        op.eval(r, vals.data());
        std::vector<double> next;
        next.reserve(acc.size() * vals.size());
        for (double a : acc)
          for (double v : vals) next.push_back(a * v);
        acc = std::move(next);
      }
      std::copy(acc.begin(), acc.end(), out);
    };
    blocks.push_back(std::move(b));
  }

  DesignMatrix d;
  for (const auto& b : blocks) d.column_names.insert(d.column_names.end(), b.names.begin(), b.names.end());
  {
    std::set<std::string> uniq(d.column_names.begin(), d.column_names.end());
    if (uniq.size() != d.column_names.size()) throw config_error("DuplicateColumn", "formula repeats a column");
  }
  const auto n = static_cast<Eigen::Index>(used.size());
  const auto k = static_cast<Eigen::Index>(d.column_names.size());
  d.response.resize(n);
  d.columns.resize(n, k);
  d.weights.resize(n);
  std::vector<double> row(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    const WorkerRecord& r = ds[used[static_cast<std::size_t>(i)]];
    d.response(i) = *numeric_field(r, spec.response);
    d.weights(i) = r.weight;
    std::size_t off = 0;
    for (const auto& b : blocks) {
      if (!b.names.empty()) b.eval(r, row.data() + off);
      off += b.names.size();
    }
    for (Eigen::Index j = 0; j < k; ++j) d.columns(i, j) = row[static_cast<std::size_t>(j)];
  }
  if (!spec.cluster.empty()) {
    std::map<std::string, int> ids;
    for (std::size_t i : used) ids.emplace(label_field(ds[i], spec.cluster), 0);
    int next = 0;
    for (auto& [label, id] : ids) id = next++;
    Eigen::VectorXi cl(n);
    for (Eigen::Index i = 0; i < n; ++i) cl(i) = ids.at(label_field(ds[used[static_cast<std::size_t>(i)]], spec.cluster));
    d.cluster_ids = std::move(cl);
  }
  d.source_rows = std::move(used);
  d.levels = std::move(levels);
  d.check();
  return d;
}

// ---------------------------------------------------------------------------
// Tabulation

ReportTable weighted_tabulate(const Dataset& ds, const std::vector<std::string>& group_fields, const Statistic& stat) {
  if (group_fields.empty()) throw config_error("BadTabulation", "at least one group field is required");
  for (const auto& g : group_fields)
    if (!ds.has_field(g)) throw config_error("UnknownField", g);
  if (stat.kind == Statistic::Kind::mean && ds.kind(stat.field) != FieldKind::numeric)
    throw config_error(ds.has_field(stat.field) ? "NotNumeric" : "UnknownField", stat.field);

  const bool single = group_fields.size() == 1;
  const std::vector<std::string> row_fields(group_fields.begin(), group_fields.end() - (single ? 0 : 1));
  // row key -> column key -> (sum w, sum w x)
  std::map<std::string, std::map<std::string, std::pair<double, double>>> acc;
  std::set<std::string> col_keys;
  for (const auto& r : ds.rows()) {
    const std::string row_key = group_label(ds, r, row_fields);
    const std::string col_key = single ? std::string() : group_label(ds, r, {group_fields.back()});
    double x = 0.0;
    if (stat.kind == Statistic::Kind::mean) {
      auto v = numeric_field(r, stat.field);
      if (!v) continue;
      x = *v;
    }
    auto& cell = acc[row_key][col_key];
    cell.first += r.weight;
    cell.second += r.weight * x;
    col_keys.insert(col_key);
  }

  ReportTable t;
  std::string group_desc;
  for (std::size_t g = 0; g < group_fields.size(); ++g) group_desc += (g ? " x " : "") + group_fields[g];
  t.title = (stat.kind == Statistic::Kind::share ? "Weighted share (%) by " : "Weighted mean of " + stat.field + " by ") +
            group_desc;
  t.footnotes.push_back("Sampling weights have been used.");

  if (single) {
    t.add_column(stat.kind == Statistic::Kind::share ? "share" : "mean");
    double total = 0.0;
    for (const auto& [rk, cols] : acc) total += cols.begin()->second.first;
    for (const auto& [rk, cols] : acc) {
      const auto [w, wx] = cols.begin()->second;
      t.add_row(rk, {Cell::number(stat.kind == Statistic::Kind::share ? 100.0 * w / total : wx / w)});
    }
    return t;
  }
  for (const auto& ck : col_keys) t.add_column(ck);
  for (const auto& [rk, cols] : acc) {
    double row_total = 0.0;
    for (const auto& [ck, c] : cols) row_total += c.first;
    std::vector<Cell> row;
    for (const auto& ck : col_keys) {
      auto it = cols.find(ck);
      if (stat.kind == Statistic::Kind::share) {
        row.push_back(Cell::number(it == cols.end() ? 0.0 : 100.0 * it->second.first / row_total));
      } else {
        row.push_back(it == cols.end() ? Cell{} : Cell::number(it->second.second / it->second.first));
      }
    }
    t.add_row(rk, std::move(row));
  }
  return t;
}

}  // namespace eom
