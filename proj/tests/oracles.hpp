#pragma once

// Reference computations used only by tests. Everything here goes through
// Boost.Math / multiprecision or brute force, never through the library's
// own numerics.

#include <cmath>
#include <cstdint>
#include <vector>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

namespace oracle {

using Real50 = boost::multiprecision::cpp_bin_float_50;

inline double normal_cdf(double x) {
  const Real50 v = Real50(x) / boost::multiprecision::sqrt(Real50(2));
  return static_cast<double>(Real50(0.5) * boost::math::erfc(-v));
}

// Bisection on the 50-digit CDF; upper half by reflection since 1 - p is
// exact there and the CDF would round to 1.
inline double normal_quantile(double p) {
  if (p > 0.5) return -normal_quantile(1.0 - p);
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (normal_cdf(mid) < p) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

// P[Binomial(n, p) >= k] by summing every pmf term.
inline double binomial_upper_tail(std::uint64_t k, std::uint64_t n, double p) {
  if (k == 0) return 1.0;
  long double total = 0.0L;
  for (std::uint64_t i = k; i <= n; ++i) {
    total += boost::math::pdf(boost::math::binomial_distribution<long double>(
                                  static_cast<long double>(n), p),
                              static_cast<long double>(i));
  }
  return static_cast<double>(total);
}

// Clopper-Pearson lower bound as a Beta(k, n - k + 1) quantile.
inline double clopper_pearson_lower(std::uint64_t k, std::uint64_t n, double alpha) {
  if (k == 0) return 0.0;
  return boost::math::ibeta_inv(static_cast<double>(k), static_cast<double>(n - k + 1),
                                alpha);
}

// Two-sided exact binomial test at p = 1/2 by full enumeration: sum of all
// outcome probabilities no larger than the observed one.
inline double binomial_two_sided(std::uint64_t k, std::uint64_t n) {
  boost::math::binomial_distribution<long double> d(static_cast<long double>(n), 0.5L);
  const long double observed = boost::math::pdf(d, static_cast<long double>(k));
  long double total = 0.0L;
  for (std::uint64_t i = 0; i <= n; ++i) {
    const long double m = boost::math::pdf(d, static_cast<long double>(i));
    if (m <= observed * (1.0L + 1e-12L)) total += m;
  }
  return static_cast<double>(std::min<long double>(1.0L, total));
}

}  // namespace oracle
