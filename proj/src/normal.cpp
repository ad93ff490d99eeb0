#include "eom/normal.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <numbers>

namespace eom::normal {

namespace {

constexpr double kTailSwitch = -8.0;
constexpr int kFractionTerms = 120;

// 1 / Mills ratio of x >= 0, i.e. phi(x) / (1 - Phi(x)), from Laplace's
// continued fraction x + 1/(x + 2/(x + 3/(x + ...))). Only used for x >= 8,
// where 120 terms are far past convergence.
double inverse_mills_ratio_tail(double x) {
  double t = x;
  for (int k = kFractionTerms; k >= 1; --k) t = x + k / t;
  return t;
}

}  // namespace

double pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double log_cdf(double z) {
  if (z > 0.0) return std::log1p(-cdf(-z));
  if (z > kTailSwitch) return std::log(cdf(z));
  return -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(inverse_mills_ratio_tail(-z));
}

double mills(double z) {
  if (z > kTailSwitch) return pdf(z) / cdf(z);
  return inverse_mills_ratio_tail(-z);
}

double quantile(double p) { return boost::math::quantile(boost::math::normal_distribution<double>(), p); }

double two_sided_p(double z) { return std::erfc(std::abs(z) / std::numbers::sqrt2); }

}  // namespace eom::normal
