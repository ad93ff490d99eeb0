#include "eom/classifier.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <set>

#include "eom/error.hpp"

namespace eom {

std::string to_string(MatchStatus s) {
  switch (s) {
    case MatchStatus::undereducated: return kUnderLabel;
    case MatchStatus::adequate: return kAdequateLabel;
    case MatchStatus::overeducated: return kOverLabel;
    case MatchStatus::unclassifiable: break;
  }
  return "Unclassifiable";
}

std::string to_string(Center c) { return c == Center::mean ? "mean" : "median"; }

Center parse_center(std::string_view s) {
  if (s == "mean") return Center::mean;
  if (s == "median") return Center::median;
  throw config_error("BadCenter", "center must be mean or median, got '" + std::string(s) + "'");
}

void ThresholdPolicy::validate() const {
  if (!(k > 0.0) || !std::isfinite(k)) throw config_error("BadThreshold", "k must be positive");
}

namespace {

// Weighted median: the smallest value whose cumulative weight reaches half
// the total; an exact half-way split averages with the next value.
double weighted_median(std::vector<std::pair<double, double>> values) {
  std::sort(values.begin(), values.end());
  double total = 0.0;
  for (const auto& [e, w] : values) total += w;
  const double half = 0.5 * total;
  double cum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    cum += values[i].second;
    if (cum == half && i + 1 < values.size()) return 0.5 * (values[i].first + values[i + 1].first);
    if (cum >= half) return values[i].first;
  }
  return values.back().first;
}

}  // namespace

OccupationStatsMap compute_occupation_stats(const Dataset& ds, const SupportRule& rule) {
  std::map<std::string, std::vector<std::pair<double, double>>> by_occ;
  for (const auto& r : ds.rows())
    if (!r.occ_code.empty()) by_occ[r.occ_code].emplace_back(r.years_edu, r.weight);

  OccupationStatsMap out;
  for (auto& [occ, values] : by_occ) {
    OccupationEduStats s;
    s.occ_code = occ;
    s.raw_count = values.size();
    double sw = 0.0, swe = 0.0;
    for (const auto& [e, w] : values) {
      sw += w;
      swe += w * e;
    }
    s.weighted_count = sw;
    s.mean_edu = swe / sw;
    double ss = 0.0;
    for (const auto& [e, w] : values) ss += w * (e - s.mean_edu) * (e - s.mean_edu);
    s.sd_edu = std::sqrt(ss / sw);
    s.median_edu = weighted_median(values);
    s.classifiable = s.weighted_count >= rule.min_weighted_count && s.raw_count >= rule.min_raw_count;
    out.emplace(occ, s);
  }
  return out;
}

MatchStatus classify(double years_edu, const OccupationEduStats& stats, const ThresholdPolicy& policy) {
  policy.validate();
  if (!stats.classifiable) return MatchStatus::unclassifiable;
  const double center = policy.center_of(stats);
  const double half_width = policy.k * stats.sd_edu;
  if (years_edu > center + half_width) return MatchStatus::overeducated;
  if (years_edu < center - half_width) return MatchStatus::undereducated;
  return MatchStatus::adequate;
}

EduDecomposition decompose(double years_edu, const OccupationEduStats& stats, MatchStatus status,
                           const ThresholdPolicy& policy) {
  EduDecomposition d;
  d.attained = years_edu;
  switch (status) {
    case MatchStatus::adequate:
      d.required = years_edu;
      break;
    case MatchStatus::overeducated:
      d.required = policy.center_of(stats);
      d.surplus = years_edu - d.required;
      break;
    case MatchStatus::undereducated:
      d.required = policy.center_of(stats);
      d.deficit = d.required - years_edu;
      break;
    case MatchStatus::unclassifiable:
      throw data_error("InvalidStatus", "occupation " + stats.occ_code + " is below minimum support");
  }
  return d;
}

Dataset attach_eom_columns(const Dataset& ds, const OccupationStatsMap& stats, const ThresholdPolicy& policy) {
  std::vector<std::optional<double>> required(ds.size()), surplus(ds.size()), deficit(ds.size());
  std::vector<std::string> status(ds.size(), "Unclassifiable");
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& r = ds[i];
    auto it = stats.find(r.occ_code);
    if (it == stats.end()) continue;
    const MatchStatus s = classify(r.years_edu, it->second, policy);
    status[i] = to_string(s);
    if (s == MatchStatus::unclassifiable) continue;
    const EduDecomposition d = decompose(r.years_edu, it->second, s, policy);
    required[i] = d.required;
    surplus[i] = d.surplus;
    deficit[i] = d.deficit;
  }
  return ds.with_label_column("match_status", status)
      .with_numeric_column("required_edu", required)
      .with_numeric_column("surplus_edu", surplus)
      .with_numeric_column("deficit_edu", deficit);
}

namespace {

struct IncidenceBlock {
  std::vector<std::string> groups;
  // group -> {under, adequate, over} weights
  std::map<std::string, std::array<double, 3>> weights;
  std::size_t unclassifiable = 0;
};

IncidenceBlock tally(const Dataset& ds, const std::vector<std::string>& group_fields, const ThresholdPolicy& policy,
                     const OccupationStatsMap& stats) {
  IncidenceBlock b;
  std::set<std::string> groups;
  for (const auto& r : ds.rows()) {
    if (r.occ_code.empty()) continue;
    auto it = stats.find(r.occ_code);
    const MatchStatus s = it == stats.end() ? MatchStatus::unclassifiable : classify(r.years_edu, it->second, policy);
    if (s == MatchStatus::unclassifiable) {
      ++b.unclassifiable;
      continue;
    }
    const std::size_t slot = s == MatchStatus::undereducated ? 0 : (s == MatchStatus::adequate ? 1 : 2);
    const std::string g = group_fields.empty() ? std::string() : group_label(ds, r, group_fields);
    if (!group_fields.empty()) {
      groups.insert(g);
      b.weights[g][slot] += r.weight;
    }
    b.weights["\x01total"][slot] += r.weight;
  }
  b.groups.assign(groups.begin(), groups.end());
  return b;
}

std::array<std::optional<double>, 3> percentages(const std::array<double, 3>& w) {
  const double total = w[0] + w[1] + w[2];
  if (!(total > 0.0)) return {};
  return {100.0 * w[0] / total, 100.0 * w[1] / total, 100.0 * w[2] / total};
}

void append_block(ReportTable& t, const IncidenceBlock& b, const std::string& prefix) {
  const char* labels[3] = {kUnderLabel, kAdequateLabel, kOverLabel};
  std::vector<std::array<std::optional<double>, 3>> cols;
  for (const auto& g : b.groups) cols.push_back(percentages(b.weights.at(g)));
  auto total_it = b.weights.find("\x01total");
  cols.push_back(total_it == b.weights.end() ? std::array<std::optional<double>, 3>{} : percentages(total_it->second));

  for (std::size_t s = 0; s < 3; ++s) {
    std::vector<Cell> row;
    for (const auto& c : cols) row.push_back(c[s] ? Cell::number(*c[s]) : Cell{});
    t.add_row(prefix + labels[s], std::move(row));
  }
  std::vector<Cell> total_row;
  for (const auto& c : cols) total_row.push_back(c[0] ? Cell::number(*c[0] + *c[1] + *c[2]) : Cell{});
  t.add_row(prefix + kTotalLabel, std::move(total_row));
}

std::string k_text(double k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", k);
  return buf;
}

}  // namespace

ReportTable incidence_table(const Dataset& ds, const std::vector<std::string>& group_fields,
                            const ThresholdPolicy& policy, const OccupationStatsMap* stats) {
  policy.validate();
  for (const auto& g : group_fields)
    if (!ds.has_field(g)) throw config_error("UnknownField", g);
  OccupationStatsMap own;
  if (!stats) {
    own = compute_occupation_stats(ds);
    stats = &own;
  }
  const IncidenceBlock b = tally(ds, group_fields, policy, *stats);
  ReportTable t;
  t.title = "Incidence of EOM (" + k_text(policy.k) + " SD from " + to_string(policy.center) + ")";
  for (const auto& g : b.groups) t.add_column(g);
  t.add_column(kTotalLabel);
  append_block(t, b, "");
  t.footnotes.push_back("Sampling weights have been used.");
  if (b.unclassifiable)
    t.footnotes.push_back(std::to_string(b.unclassifiable) + " workers in occupations below minimum support excluded.");
  return t;
}

ReportTable sensitivity_sweep(const Dataset& ds, const std::vector<double>& ks, const std::vector<Center>& centers,
                              const std::vector<std::string>& group_fields, const OccupationStatsMap* stats) {
  if (ks.empty()) throw config_error("BadThreshold", "sensitivity sweep needs at least one k");
  if (centers.empty()) throw config_error("BadCenter", "sensitivity sweep needs at least one center");
  OccupationStatsMap own;
  if (!stats) {
    own = compute_occupation_stats(ds);
    stats = &own;
  }
  ReportTable t;
  t.title = "Sensitivity check of incidence of EOM";
  bool columns_set = false;
  for (Center c : centers) {
    for (double k : ks) {
      const ThresholdPolicy policy{k, c};
      policy.validate();
      const IncidenceBlock b = tally(ds, group_fields, policy, *stats);
      if (!columns_set) {
        for (const auto& g : b.groups) t.add_column(g);
        t.add_column(kTotalLabel);
        columns_set = true;
      }
      append_block(t, b, "k=" + k_text(k) + ", " + to_string(c) + ": ");
    }
  }
  t.footnotes.push_back("Sampling weights have been used.");
  return t;
}

}  // namespace eom
