#pragma once

// Standard normal helpers that stay accurate deep in the tails. The probit
// likelihood and the inverse Mills ratio both need log Phi(z) and
// phi(z)/Phi(z) for |z| up to ~40, where Phi underflows to subnormals.

namespace eom::normal {

double pdf(double z);
double cdf(double z);
/// log Phi(z), finite for all finite z.
double log_cdf(double z);
/// phi(z) / Phi(z). Strictly positive and decreasing in z.
double mills(double z);
/// Phi^{-1}(p) for p in (0, 1).
double quantile(double p);
/// Two-sided p-value of a standard normal statistic.
double two_sided_p(double z);

}  // namespace eom::normal
