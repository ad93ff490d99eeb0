#include "eom/simulation.hpp"

#include <boost/random/bernoulli_distribution.hpp>
#include <boost/random/discrete_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <thread>

#include "eom/error.hpp"
#include "eom/normal.hpp"

namespace eom {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 make_engine(std::uint64_t seed) { return std::mt19937_64(splitmix64(seed)); }

void DGPConfig::validate() const {
  if (n < 50) throw config_error("BadDGP", "n must be at least 50");
  if (!(sigma > 0.0)) throw config_error("BadDGP", "sigma must be positive");
  if (selection) {
    if (!(std::abs(selection->rho) < 1.0)) throw config_error("BadDGP", "|rho| must be below 1");
    if (selection->theta.size() != 2) throw config_error("BadDGP", "selection theta needs 2 slopes");
    if (!(selection->target_share > 0.0 && selection->target_share < 1.0))
      throw config_error("BadDGP", "target selection share must be in (0, 1)");
  }
  if (endogeneity) {
    if (!(std::abs(endogeneity->rho) < 1.0)) throw config_error("BadDGP", "|rho| must be below 1");
  }
}

DGPConfig DGPConfig::selection_default() {
  DGPConfig c;
  c.n = 5000;
  c.beta = {1.0, 0.08, 0.01};
  c.selection = SelectionBlock{};
  return c;
}

DGPConfig DGPConfig::lewbel_default() {
  DGPConfig c;
  c.n = 5000;
  c.beta = {1.0, 0.08, 0.1, 0.1};
  c.endogeneity = EndogeneityBlock{};
  return c;
}

DGPConfig dgp_from_json(const nlohmann::json& j) {
  DGPConfig c;
  try {
    const std::string kind = j.value("kind", "selection");
    if (kind == "selection") c = DGPConfig::selection_default();
    else if (kind == "lewbel") c = DGPConfig::lewbel_default();
    else if (kind != "regression" && kind != "groups") throw config_error("BadDGP", "unknown DGP kind '" + kind + "'");
    c.n = j.value("n", c.n);
    c.sigma = j.value("sigma", c.sigma);
    c.seed = j.value("seed", c.seed);
    if (j.contains("beta")) c.beta = j["beta"].get<std::vector<double>>();
    if (j.contains("selection")) {
      const auto& s = j["selection"];
      SelectionBlock b;
      b.theta = s.value("theta", b.theta);
      b.rho = s.value("rho", b.rho);
      b.target_share = s.value("target_share", b.target_share);
      c.selection = b;
    }
    if (j.contains("endogeneity")) {
      const auto& e = j["endogeneity"];
      EndogeneityBlock b;
      b.pi = e.value("pi", b.pi);
      b.rho = e.value("rho", b.rho);
      b.delta = e.value("delta", b.delta);
      b.invalid_gamma = e.value("invalid_gamma", b.invalid_gamma);
      c.endogeneity = b;
    }
  } catch (const nlohmann::json::exception& e) {
    throw config_error("ConfigParse", std::string("DGP config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

using Normal = boost::random::normal_distribution<double>;
using Uniform = boost::random::uniform_real_distribution<double>;

// Intercept t such that the mean of Phi(t + index) equals `share`.
double solve_intercept(const std::vector<double>& index, double share) {
  double lo = -50.0, hi = 50.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    double mean = 0.0;
    for (double v : index) mean += normal::cdf(mid + v);
    mean /= static_cast<double>(index.size());
    (mean < share ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::string row_id(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "R%07d", i + 1);
  return buf;
}

void need_beta(const DGPConfig& cfg, std::size_t k, const char* what) {
  if (cfg.beta.size() != k)
    throw config_error("BadDGP", std::string(what) + " DGP needs " + std::to_string(k) + " beta values");
}

}  // namespace

Simulated simulate_selection_dgp(const DGPConfig& cfg) {
  cfg.validate();
  if (!cfg.selection) throw config_error("BadDGP", "selection block missing");
  need_beta(cfg, 3, "selection");
  const auto& sel = *cfg.selection;
  auto rng = make_engine(cfg.seed);
  Normal std_normal(0.0, 1.0);
  Uniform age_dist(15.0, 59.0);

  const auto n = static_cast<std::size_t>(cfg.n);
  std::vector<double> edu(n), age(n), excl(n), v(n), eps(n), index(n);
  const double tail = std::sqrt(1.0 - sel.rho * sel.rho);
  for (std::size_t i = 0; i < n; ++i) {
    edu[i] = std::clamp(10.0 + 3.0 * std_normal(rng), 0.0, 25.0);
    age[i] = age_dist(rng);
    excl[i] = std_normal(rng);
    v[i] = std_normal(rng);
    eps[i] = cfg.sigma * (sel.rho * v[i] + tail * std_normal(rng));
    index[i] = sel.theta[0] * edu[i] + sel.theta[1] * excl[i];
  }
  const double theta0 = solve_intercept(index, sel.target_share);

  std::vector<WorkerRecord> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = rows[i];
    r.person_id = row_id(static_cast<int>(i));
    r.years_edu = edu[i];
    r.age = age[i];
    r.numeric_extra["excl"] = excl[i];
    const bool selected = theta0 + index[i] + v[i] > 0.0;
    if (selected) {
      r.employment_status = EmploymentStatus::wage_salary;
      r.occ_code = "111";
      r.daily_wage = std::exp(cfg.beta[0] + cfg.beta[1] * edu[i] + cfg.beta[2] * age[i] + eps[i]);
    } else {
      r.employment_status = EmploymentStatus::other;
    }
  }
  Simulated out{Dataset(std::move(rows), "selection DGP seed " + std::to_string(cfg.seed), {"excl"}), {}};
  out.truth.coefficients = {{std::string(kInterceptName), cfg.beta[0]},
                            {"years_edu", cfg.beta[1]},
                            {"age", cfg.beta[2]},
                            {"lambda_sel", sel.rho * cfg.sigma}};
  out.truth.rho = sel.rho;
  out.truth.theta = {theta0, sel.theta[0], sel.theta[1]};
  return out;
}

std::vector<std::string> lewbel_instrument_names(std::size_t count) {
  static const char* base[] = {"colleges", "nightlight_sd", "colleges_x_mpce"};
  std::vector<std::string> out;
  for (std::size_t j = 0; j < count; ++j) out.push_back(j < 3 ? base[j] : "z" + std::to_string(j + 1));
  return out;
}

Simulated simulate_lewbel_dgp(const DGPConfig& cfg) {
  cfg.validate();
  if (!cfg.endogeneity) throw config_error("BadDGP", "endogeneity block missing");
  need_beta(cfg, 4, "Lewbel");
  const auto& en = *cfg.endogeneity;
  auto rng = make_engine(cfg.seed);
  Normal std_normal(0.0, 1.0);
  const double root3 = std::sqrt(3.0);
  Uniform driver(-root3, root3);
  const auto names = lewbel_instrument_names(en.pi.size());
  const double tail = std::sqrt(1.0 - en.rho * en.rho);

  std::vector<WorkerRecord> rows(static_cast<std::size_t>(cfg.n));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& r = rows[i];
    const double z1 = driver(rng), z2 = driver(rng);
    double edu = 12.0 + 0.5 * z1 + 0.5 * z2;
    double ext0 = 0.0;
    for (std::size_t j = 0; j < names.size(); ++j) {
      const double z = std_normal(rng);
      if (j == 0) ext0 = z;
      r.numeric_extra[names[j]] = z;
      edu += en.pi[j] * z;
    }
    const double common = std_normal(rng), e1 = std_normal(rng), e2 = std_normal(rng);
    edu += common + std::exp(0.5 * en.delta * (z1 + 0.5 * z2)) * e2;
    const double eps = cfg.sigma * (en.rho * common + tail * e1) + en.invalid_gamma * ext0;
    r.person_id = row_id(static_cast<int>(i));
    r.years_edu = edu;
    r.household.mpce = z2;
    r.numeric_extra["nightlight"] = z1;
    r.employment_status = EmploymentStatus::wage_salary;
    r.occ_code = "111";
    r.daily_wage = std::exp(cfg.beta[0] + cfg.beta[1] * edu + cfg.beta[2] * z1 + cfg.beta[3] * z2 + eps);
  }
  auto extras = names;
  extras.push_back("nightlight");
  Simulated out{Dataset(std::move(rows), "Lewbel DGP seed " + std::to_string(cfg.seed), extras), {}};
  out.truth.coefficients = {{std::string(kInterceptName), cfg.beta[0]},
                            {"years_edu", cfg.beta[1]},
                            {"nightlight", cfg.beta[2]},
                            {"mpce", cfg.beta[3]}};
  out.truth.rho = en.rho;
  return out;
}

Simulated simulate_regression_dgp(const DGPConfig& cfg, double gamma) {
  cfg.validate();
  need_beta(cfg, 3, "regression");
  auto rng = make_engine(cfg.seed);
  Normal std_normal(0.0, 1.0);
  std::vector<WorkerRecord> rows(static_cast<std::size_t>(cfg.n));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& r = rows[i];
    const double x1 = std_normal(rng), x2 = std_normal(rng);
    const double index = cfg.beta[1] * x1 + cfg.beta[2] * x2;
    const double s = cfg.sigma * std::exp(0.5 * gamma * index);
    r.person_id = row_id(static_cast<int>(i));
    r.numeric_extra["x1"] = x1;
    r.numeric_extra["x2"] = x2;
    r.employment_status = EmploymentStatus::wage_salary;
    r.occ_code = "111";
    r.daily_wage = std::exp(cfg.beta[0] + index + s * std_normal(rng));
  }
  Simulated out{Dataset(std::move(rows), "regression DGP seed " + std::to_string(cfg.seed), {"x1", "x2"}), {}};
  out.truth.coefficients = {{std::string(kInterceptName), cfg.beta[0]}, {"x1", cfg.beta[1]}, {"x2", cfg.beta[2]}};
  return out;
}

Simulated simulate_group_dgp(const DGPConfig& cfg, const std::vector<double>& slopes) {
  cfg.validate();
  need_beta(cfg, 3, "group");
  if (slopes.empty()) throw config_error("BadDGP", "group DGP needs at least one slope");
  auto rng = make_engine(cfg.seed);
  Normal std_normal(0.0, 1.0);
  std::vector<WorkerRecord> rows(static_cast<std::size_t>(cfg.n));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& r = rows[i];
    const std::size_t g = i % slopes.size();
    const double x1 = std_normal(rng), x2 = std_normal(rng);
    r.person_id = row_id(static_cast<int>(i));
    r.numeric_extra["x1"] = x1;
    r.numeric_extra["x2"] = x2;
    r.label_extra["group"] = "g" + std::to_string(g);
    r.employment_status = EmploymentStatus::wage_salary;
    r.occ_code = "111";
    r.daily_wage = std::exp(cfg.beta[0] + slopes[g] * x1 + cfg.beta[2] * x2 + cfg.sigma * std_normal(rng));
  }
  Simulated out{Dataset(std::move(rows), "group DGP seed " + std::to_string(cfg.seed), {"x1", "x2"}, {"group"}), {}};
  out.truth.coefficients = {{std::string(kInterceptName), cfg.beta[0]}, {"x2", cfg.beta[2]}};
  for (std::size_t g = 0; g < slopes.size(); ++g) out.truth.coefficients["x1 [g" + std::to_string(g) + "]"] = slopes[g];
  return out;
}

// ---------------------------------------------------------------------------
// Survey-shaped fixture

FixtureConfig FixtureConfig::standard() {
  FixtureConfig c;
  c.occupations = {{"112", 15, 0.08}, {"213", 16, 0.07}, {"314", 12, 0.10}, {"411", 12, 0.12}, {"512", 8, 0.15},
                   {"611", 5, 0.15}, {"712", 8, 0.13}, {"821", 10, 0.10}, {"915", 4, 0.10}};
  return c;
}

void FixtureConfig::validate() const {
  if (n < 50) throw config_error("BadFixture", "n must be at least 50");
  if (occupations.size() < 5) throw config_error("BadFixture", "at least 5 occupations are required");
  if (!(under_share >= 0.0 && over_share >= 0.0 && under_share + over_share < 1.0))
    throw config_error("BadFixture", "mismatch shares must be nonnegative and sum below 1");
  if (jitter < 0 || !(gap - jitter > 1.0)) throw config_error("BadFixture", "gap minus jitter must exceed 1 year");
  if (!(migrant_share >= 0.0 && migrant_share < 1.0)) throw config_error("BadFixture", "migrant_share must be in [0, 1)");
  if (states < 1 || districts_per_state < 1) throw config_error("BadFixture", "need at least one state and district");
  for (const auto& o : occupations) {
    if (o.code.empty() || o.code.size() > 3) throw config_error("BadFixture", "occupation codes have 1-3 digits");
    if (o.modal_edu - gap - jitter < 0.0 || o.modal_edu + gap + jitter > 25.0)
      throw config_error("BadFixture", "education of occupation " + o.code + " leaves [0, 25]");
    if (!(o.share > 0.0)) throw config_error("BadFixture", "occupation shares must be positive");
  }
}

FixtureConfig fixture_from_json(const nlohmann::json& j) {
  FixtureConfig c = FixtureConfig::standard();
  try {
    c.n = j.value("n", c.n);
    c.seed = j.value("seed", c.seed);
    c.under_share = j.value("under_share", c.under_share);
    c.over_share = j.value("over_share", c.over_share);
    c.gap = j.value("gap", c.gap);
    c.jitter = j.value("jitter", c.jitter);
    c.migrant_share = j.value("migrant_share", c.migrant_share);
    c.states = j.value("states", c.states);
    c.districts_per_state = j.value("districts_per_state", c.districts_per_state);
    if (j.contains("occupations")) {
      c.occupations.clear();
      for (const auto& o : j["occupations"])
        c.occupations.push_back({o.at("code").get<std::string>(), o.at("modal_edu").get<double>(), o.value("share", 1.0)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw config_error("ConfigParse", std::string("fixture config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

struct District {
  std::string id;
  std::string state;
  double colleges = 0.0;
  double nightlight = 0.0;
  double nightlight_sd = 0.0;
  double migrant_rate = 0.0;
};

template <class T, std::size_t N>
const T& pick(std::mt19937_64& rng, const T (&items)[N], std::initializer_list<double> probs) {
  boost::random::discrete_distribution<std::size_t> d(probs);
  return items[std::min<std::size_t>(d(rng), N - 1)];
}

}  // namespace

Dataset synth_fixture(const FixtureConfig& cfg) {
  cfg.validate();
  auto rng = make_engine(cfg.seed);
  Normal std_normal(0.0, 1.0);
  Uniform unit(0.0, 1.0);
  auto coin = [&](double p) { return unit(rng) < p; };
  auto int_in = [&](int lo, int hi) { return boost::random::uniform_int_distribution<int>(lo, hi)(rng); };

  std::vector<District> districts;
  for (int s = 0; s < cfg.states; ++s)
    for (int d = 0; d < cfg.districts_per_state; ++d) {
      District x;
      char buf[32];
      std::snprintf(buf, sizeof buf, "D%02d%02d", s + 1, d + 1);
      x.id = buf;
      x.state = "S" + std::to_string(s + 1);
      x.colleges = int_in(2, 60);
      x.nightlight = 3.0 + std_normal(rng);
      x.nightlight_sd = 0.5 + unit(rng);
      x.migrant_rate = std::min(0.95, cfg.migrant_share * (0.4 + 1.2 * unit(rng)));
      districts.push_back(x);
    }

  std::vector<double> occ_shares;
  for (const auto& o : cfg.occupations) occ_shares.push_back(o.share);
  boost::random::discrete_distribution<std::size_t> occ_dist(occ_shares);
  const double adequate = 1.0 - cfg.under_share - cfg.over_share;

  static const char* social[] = {"ST", "SC", "OBC", "others"};
  static const char* religions[] = {"hindu", "muslim", "christian", "others"};
  static const char* hh_types[] = {"self_employed_agri", "self_employed_nonagri", "regular_wage", "casual_labour", "others"};
  static const char* lands[] = {"landless", "marginal", "small", "large"};
  static const char* priors[] = {"employed", "unemployed", "not_in_labour_force"};
  static const char* industries[] = {"agriculture", "manufacturing", "construction", "trade", "services"};
  static const MigrationReason reasons[] = {MigrationReason::job_search, MigrationReason::confirm_job,
                                            MigrationReason::other_work, MigrationReason::education,
                                            MigrationReason::forced,     MigrationReason::marriage,
                                            MigrationReason::tied,       MigrationReason::other};
  static const Stream streams[] = {Stream::RR, Stream::RU, Stream::UR, Stream::UU};
  static const Distance distances[] = {Distance::intra_district, Distance::inter_district, Distance::inter_state};

  std::vector<WorkerRecord> rows(static_cast<std::size_t>(cfg.n));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& r = rows[i];
    char id[32];
    std::snprintf(id, sizeof id, "P%06zu", i + 1);
    r.person_id = id;
    const District& dist = districts[static_cast<std::size_t>(int_in(0, static_cast<int>(districts.size()) - 1))];
    r.district_id = dist.id;
    r.state_id = dist.state;
    r.numeric_extra["colleges"] = dist.colleges;
    r.numeric_extra["nightlight"] = dist.nightlight;
    r.numeric_extra["nightlight_sd"] = dist.nightlight_sd;

    const double age = int_in(15, 64);
    r.age = age;
    const bool male = coin(0.5);
    r.gender = male ? Gender::male : Gender::female;
    r.marital = age < 22 ? (coin(0.8) ? Marital::unmarried : Marital::married)
                         : (coin(0.85) ? Marital::married : (coin(0.5) ? Marital::unmarried : Marital::other));
    r.social_group = pick(rng, social, {0.1, 0.2, 0.4, 0.3});
    r.religion = pick(rng, religions, {0.78, 0.14, 0.03, 0.05});
    r.sector = coin(0.65) ? Sector::rural : Sector::urban;
    r.weight = std::round(100.0 * 80.0 * std::exp(0.4 * std_normal(rng))) / 100.0;

    const int dependents = int_in(0, 4);
    r.household.dependents_count = dependents;
    r.household.household_size = dependents + int_in(1, 4);
    r.household.household_type = pick(rng, hh_types, {0.25, 0.15, 0.25, 0.25, 0.1});
    const std::size_t land = static_cast<std::size_t>(int_in(0, 3));
    r.household.land_category = lands[land];
    r.household.mpce = std::round(100.0 * 1500.0 * std::exp(0.5 * std_normal(rng))) / 100.0;

    r.migrant = coin(dist.migrant_rate);
    if (r.migrant) {
      r.migration_reason = pick(rng, reasons, {0.25, 0.15, 0.1, 0.05, 0.05, 0.3, 0.05, 0.05});
      r.stream = pick(rng, streams, {0.45, 0.25, 0.1, 0.2});
      r.distance = pick(rng, distances, {0.4, 0.35, 0.25});
      r.years_since_migration = int_in(0, 25);
      r.prior_employment = pick(rng, priors, {0.5, 0.3, 0.2});
    }

    // Employment depends on dependents, the wage/self-employment split on land.
    const double emp_index = 0.6 + 0.5 * (male ? 1.0 : -1.0) - 0.25 * dependents + 0.02 * (40.0 - std::abs(age - 38.0));
    const bool employed = emp_index + std_normal(rng) > 0.0;
    const bool wage_job = 0.6 - 0.45 * static_cast<double>(land) + std_normal(rng) > 0.0;
    r.employment_status = !employed ? EmploymentStatus::other
                                    : (wage_job ? EmploymentStatus::wage_salary : EmploymentStatus::self_employed);

    const OccupationPlan& occ = cfg.occupations[occ_dist(rng)];
    const double u = unit(rng);
    double edu;
    const double off = static_cast<double>(int_in(-cfg.jitter, cfg.jitter));
    if (u < cfg.under_share) edu = occ.modal_edu - cfg.gap - off;
    else if (u < cfg.under_share + adequate) edu = occ.modal_edu + static_cast<double>(int_in(-1, 1));
    else edu = occ.modal_edu + cfg.gap + off;
    r.years_edu = edu;
    if (employed) {
      r.occ_code = occ.code;
      r.industry = industries[static_cast<std::size_t>(int_in(0, 4))];
    }
    if (r.employment_status == EmploymentStatus::wage_salary) {
      const double surplus = std::max(edu - occ.modal_edu, 0.0);
      const double deficit = std::max(occ.modal_edu - edu, 0.0);
      const double lw = 4.0 + 0.06 * occ.modal_edu + 0.04 * surplus - 0.03 * deficit + 0.012 * (age - 15.0) +
                        (male ? 0.15 : 0.0) + (r.sector == Sector::urban ? 0.1 : 0.0) + (r.migrant ? 0.05 : 0.0) +
                        0.4 * std_normal(rng);
      r.daily_wage = std::round(100.0 * std::exp(lw)) / 100.0;
    }
  }
  return Dataset(std::move(rows), "synthetic fixture seed " + std::to_string(cfg.seed),
                 {"colleges", "nightlight", "nightlight_sd"});
}

// ---------------------------------------------------------------------------
// Monte Carlo

nlohmann::json MonteCarloSummary::to_json() const {
  nlohmann::json j;
  j["estimator"] = estimator;
  j["replications"] = replications;
  j["failures"] = failures;
  j["failure_messages"] = failure_messages;
  nlohmann::json coefs = nlohmann::json::object();
  for (const auto& [name, c] : coefficients)
    coefs[name] = {{"truth", c.truth},           {"mean_estimate", c.mean_estimate}, {"mean_bias", c.mean_bias},
                   {"mc_se_bias", c.mc_se_bias}, {"sd_estimate", c.sd_estimate},     {"mean_se", c.mean_se},
                   {"median_abs_error", c.median_abs_error}, {"coverage_95", c.coverage_95}};
  j["coefficients"] = coefs;
  j["rejection_rate"] = rejection_rate;
  return j;
}

MonteCarloSummary monte_carlo(const Estimator& estimator, const DGPConfig& cfg, int reps, unsigned threads) {
  if (reps < 1) throw config_error("BadReplications", "reps must be at least 1");
  if (!estimator.run) throw config_error("BadEstimator", "estimator has no run function");
  const auto count = static_cast<std::size_t>(reps);
  std::vector<std::optional<Replication>> results(count);
  std::vector<std::string> errors(count);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      DGPConfig c = cfg;
      c.seed = cfg.seed + i;
      try {
        results[i] = estimator.run(c);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  MonteCarloSummary s;
  s.estimator = estimator.name;
  s.replications = reps;
  std::map<std::string, std::vector<Estimate>> by_coef;
  std::map<std::string, std::pair<int, int>> tests;
  for (std::size_t i = 0; i < count; ++i) {
    if (!results[i]) {
      ++s.failures;
      s.failure_messages.push_back("replication " + std::to_string(i) + ": " + errors[i]);
      continue;
    }
    for (const auto& e : results[i]->estimates) by_coef[e.name].push_back(e);
    for (const auto& [name, rejected] : results[i]->rejections) {
      auto& t = tests[name];
      t.first += rejected ? 1 : 0;
      t.second += 1;
    }
  }
  if (s.failures == reps) throw numerical_error("AllReplicationsFailed", s.failure_messages.front());

  for (const auto& [name, list] : by_coef) {
    CoefficientSummary c;
    const auto m = static_cast<double>(list.size());
    c.truth = list.front().truth;
    std::vector<double> abs_err;
    int covered = 0;
    for (const auto& e : list) {
      c.mean_estimate += e.value / m;
      c.mean_se += e.se / m;
      abs_err.push_back(std::abs(e.value - e.truth));
      if (std::abs(e.value - e.truth) <= 1.959963984540054 * e.se) ++covered;
    }
    double ss = 0.0;
    for (const auto& e : list) ss += (e.value - c.mean_estimate) * (e.value - c.mean_estimate);
    c.sd_estimate = list.size() > 1 ? std::sqrt(ss / (m - 1.0)) : 0.0;
    c.mean_bias = c.mean_estimate - c.truth;
    c.mc_se_bias = c.sd_estimate / std::sqrt(m);
    std::sort(abs_err.begin(), abs_err.end());
    const std::size_t h = abs_err.size() / 2;
    c.median_abs_error = abs_err.size() % 2 ? abs_err[h] : 0.5 * (abs_err[h - 1] + abs_err[h]);
    c.coverage_95 = covered / m;
    s.coefficients[name] = c;
  }
  for (const auto& [name, t] : tests) s.rejection_rate[name] = static_cast<double>(t.first) / t.second;
  return s;
}

}  // namespace eom
