#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "chgo/errors.hpp"

namespace chgo {

inline double binomial_log_pmf(long long k, long long n, double p) {
  const double lchoose = std::lgamma(double(n) + 1.0) - std::lgamma(double(k) + 1.0) - std::lgamma(double(n - k) + 1.0);
  const double a = k == 0 ? 0.0 : double(k) * std::log(p);
  const double b = k == n ? 0.0 : double(n - k) * std::log1p(-p);
  return lchoose + a + b;
}

// Exact two-sided binomial test: the total probability, under Binomial(games,
// p0), of every outcome no more likely than the observed one. The relative
// slack of 1e-7 on the comparison keeps the mirror outcome of a symmetric null
// from being dropped by rounding.
inline double binomial_test(long long wins, long long games, double p0 = 0.5) {
  if (games < 0 || wins < 0 || wins > games) {
    throw ConfigError("binomial_test needs 0 <= wins <= games, got " + std::to_string(wins) + "/" +
                      std::to_string(games));
  }
  if (!(p0 > 0.0 && p0 < 1.0)) throw ConfigError("binomial_test needs 0 < p0 < 1");
  if (games == 0) return 1.0;

  const double observed = binomial_log_pmf(wins, games, p0);
  const double cutoff = observed + std::log1p(1e-7);
  std::vector<double> terms;
  double top = -std::numeric_limits<double>::infinity();
  for (long long k = 0; k <= games; ++k) {
    const double lp = binomial_log_pmf(k, games, p0);
    if (lp <= cutoff) {
      terms.push_back(lp);
      top = std::max(top, lp);
    }
  }
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - top);
  return std::min(1.0, std::exp(top + std::log(sum)));
}

}  // namespace chgo
