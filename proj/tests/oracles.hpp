#pragma once

// Independent reference computations used by the unit and acceptance tests.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "eom/survey_data.hpp"

namespace eom::oracle {

struct OccStats {
  long double mean = 0, sd = 0, median = 0, wsum = 0;
  std::size_t n = 0;
};

// Direct summation in long double.
inline OccStats occupation(std::vector<std::pair<double, double>> ew) {
  OccStats s;
  long double swe = 0;
  for (auto [e, w] : ew) {
    s.wsum += w;
    swe += static_cast<long double>(w) * e;
  }
  s.n = ew.size();
  s.mean = swe / s.wsum;
  long double ss = 0;
  for (auto [e, w] : ew) ss += w * (e - s.mean) * (e - s.mean);
  s.sd = std::sqrt(ss / s.wsum);
  std::sort(ew.begin(), ew.end());
  long double cum = 0;
  for (std::size_t i = 0; i < ew.size(); ++i) {
    cum += ew[i].second;
    if (2 * cum == s.wsum && i + 1 < ew.size()) {
      s.median = 0.5L * (ew[i].first + ew[i + 1].first);
      break;
    }
    if (2 * cum >= s.wsum) {
      s.median = ew[i].first;
      break;
    }
  }
  return s;
}

// "under", "adequate", "over", or "tie" when e sits within 1e-9 of a bound.
inline std::string classify(long double e, long double center, long double sd, long double k) {
  const long double hi = center + k * sd, lo = center - k * sd;
  if (std::fabs(e - hi) < 1e-9L || std::fabs(e - lo) < 1e-9L) return "tie";
  if (e > hi) return "over";
  if (e < lo) return "under";
  return "adequate";
}

// b = (X'WX)^{-1} X'Wy through an explicit normal-equations solve.
inline Eigen::VectorXd normal_equations(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  const Eigen::MatrixXd xtwx = x.transpose() * w.asDiagonal() * x;
  const Eigen::VectorXd xtwy = x.transpose() * w.asDiagonal() * y;
  return xtwx.ldlt().solve(xtwy);
}

// Small random survey-like dataset: a few occupations, integer education,
// real weights; some occupations fall below minimum support.
inline Dataset random_eom_dataset(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> occs(1, 5), size(1, 12), edu(0, 20);
  std::uniform_real_distribution<double> wt(0.3, 3.0);
  std::vector<WorkerRecord> rows;
  const int k = occs(rng);
  for (int o = 0; o < k; ++o) {
    const int n = size(rng);
    for (int i = 0; i < n; ++i) {
      WorkerRecord r;
      r.person_id = "p" + std::to_string(rows.size());
      r.occ_code = std::to_string(100 + o);
      r.years_edu = edu(rng);
      r.weight = wt(rng);
      r.employment_status = EmploymentStatus::wage_salary;
      r.age = 30.0;
      rows.push_back(r);
    }
  }
  return Dataset(rows, "random");
}

}  // namespace eom::oracle
