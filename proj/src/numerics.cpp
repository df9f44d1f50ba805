#include "sween/numerics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "sween/error.hpp"

namespace sween {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidParameter: return "invalid-parameter";
    case ErrorKind::kDimensionMismatch: return "dimension-mismatch";
    case ErrorKind::kDomain: return "domain-error";
    case ErrorKind::kEmptyInput: return "empty-input";
    case ErrorKind::kGridMismatch: return "grid-mismatch";
    case ErrorKind::kIo: return "io-error";
    case ErrorKind::kFormat: return "format-error";
    case ErrorKind::kNumericFailure: return "numeric-failure";
  }
  return "unknown";
}

double std_normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

namespace {

// Acklam's rational approximation, relative error ~1.15e-9 before
// refinement.
double acklam_quantile(double p) {
  static constexpr std::array<double, 6> a = {
      -3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr std::array<double, 5> b = {
      -5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01};
  static constexpr std::array<double, 6> c = {
      -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr std::array<double, 4> d = {
      7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00};
  constexpr double kLow = 0.02425;

  if (p < kLow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
            c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - kLow) {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
             c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r +
          a[5]) *
         q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

double std_normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    fail(ErrorKind::kDomain,
         "std_normal_quantile: p must lie in (0, 1), got " + std::to_string(p));
  }
  if (p == 0.5) return 0.0;
  double x = acklam_quantile(p);
  // One Halley step against the CDF. Work on the smaller tail so the
  // residual keeps its relative precision.
  const double e = (p < 0.5) ? std_normal_cdf(x) - p
                             : -(std_normal_cdf(-x) - (1.0 - p));
  const double u =
      e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

double clamped_normal_quantile(double p) {
  return std_normal_quantile(std::clamp(p, kProbClamp, 1.0 - kProbClamp));
}

double log_gamma(double x) {
  if (!(x > 0.0)) {
    fail(ErrorKind::kDomain,
         "log_gamma: x must be positive, got " + std::to_string(x));
  }
  return std::lgamma(x);
}

namespace {

double log_binomial_pmf(std::uint64_t i, std::uint64_t n, double log_p,
                        double log_q) {
  const auto di = static_cast<double>(i);
  const auto dn = static_cast<double>(n);
  return std::lgamma(dn + 1.0) - std::lgamma(di + 1.0) -
         std::lgamma(dn - di + 1.0) + di * log_p + (dn - di) * log_q;
}

// Sums pmf(i) for i in [from, to] walking away from the mode, so terms are
// nonincreasing and the walk stops once they stop contributing.
double sum_pmf_walk(std::uint64_t start, std::uint64_t end, int step,
                    std::uint64_t n, double p) {
  const double log_p = std::log(p);
  const double log_q = std::log1p(-p);
  const double ratio_up = p / (1.0 - p);
  double log_term = log_binomial_pmf(start, n, log_p, log_q);
  if (log_term < -745.0) return 0.0;
  double term = std::exp(log_term);
  double sum = 0.0;
  std::uint64_t i = start;
  while (true) {
    sum += term;
    if (term < sum * 1e-18) break;
    if (i == end) break;
    if (step > 0) {
      term *= ratio_up * static_cast<double>(n - i) / static_cast<double>(i + 1);
      ++i;
    } else {
      term /= ratio_up * static_cast<double>(n - i + 1) / static_cast<double>(i);
      --i;
    }
    if (term == 0.0) break;
  }
  return sum;
}

}  // namespace

double binomial_upper_tail(std::uint64_t successes, std::uint64_t trials,
                           double p) {
  if (successes == 0) return 1.0;
  if (successes > trials) return 0.0;
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  const double mode = std::floor(static_cast<double>(trials + 1) * p);
  if (static_cast<double>(successes) > mode) {
    return std::min(1.0, sum_pmf_walk(successes, trials, +1, trials, p));
  }
  const double lower = sum_pmf_walk(successes - 1, 0, -1, trials, p);
  return std::clamp(1.0 - lower, 0.0, 1.0);
}

double clopper_pearson_lower(std::uint64_t successes, std::uint64_t trials,
                             double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    fail(ErrorKind::kDomain, "clopper_pearson_lower: alpha must lie in (0, 1)");
  }
  if (trials == 0 || successes > trials) {
    fail(ErrorKind::kDomain,
         "clopper_pearson_lower: need 0 <= successes <= trials, trials >= 1");
  }
  if (successes == 0) return 0.0;
  if (successes == trials) {
    return std::pow(alpha, 1.0 / static_cast<double>(trials));
  }
  // The upper tail is increasing in p.
  double lo = 0.0;
  double hi = static_cast<double>(successes) / static_cast<double>(trials);
  for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (binomial_upper_tail(successes, trials, mid) < alpha) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

double binomial_two_sided_pvalue(std::uint64_t successes,
                                 std::uint64_t trials) {
  if (successes > trials) {
    fail(ErrorKind::kDomain, "binomial_two_sided_pvalue: successes > trials");
  }
  if (trials == 0) return 1.0;
  const std::uint64_t k = std::min(successes, trials - successes);
  if (2 * k == trials) return 1.0;
  // P[X <= k] under p = 1/2.
  const double half_log = -std::numbers::ln2;
  double acc = 0.0;
  double log_term = log_binomial_pmf(k, trials, half_log, half_log);
  double term = std::exp(log_term);
  for (std::uint64_t i = k;; --i) {
    acc += term;
    if (i == 0 || term < acc * 1e-18) break;
    term *= static_cast<double>(i) / static_cast<double>(trials - i + 1);
  }
  return std::min(1.0, 2.0 * acc);
}

// ---------------------------------------------------------------------------
// Philox4x32-10 counter-based generator.

namespace {

using Block = std::array<std::uint32_t, 4>;

Block philox4x32_10(Block ctr, std::uint32_t k0, std::uint32_t k1) {
  constexpr std::uint32_t kM0 = 0xD2511F53u;
  constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
    ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ k0,
           static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ k1,
           static_cast<std::uint32_t>(p0)};
    k0 += kW0;
    k1 += kW1;
  }
  return ctr;
}

// Top 53 bits mapped into the open interval (0, 1).
double to_unit_open(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits =
      ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

// The block counter's top bit separates the Gaussian and uniform streams.
constexpr std::uint32_t kUniformStreamBit = 0x80000000u;

Block draw_block(const NoiseStreamKey& key, std::uint32_t block) {
  return philox4x32_10(
      {key.point_index, key.sample_index, key.candidate_index, block},
      static_cast<std::uint32_t>(key.global_seed),
      static_cast<std::uint32_t>(key.global_seed >> 32));
}

}  // namespace

void gaussian_sample_into(const NoiseStreamKey& key, double sigma,
                          std::span<double> out) {
  const std::size_t dim = out.size();
  for (std::size_t j = 0; 2 * j < dim; ++j) {
    const Block r = draw_block(key, static_cast<std::uint32_t>(j));
    const double u1 = to_unit_open(r[0], r[1]);
    const double u2 = to_unit_open(r[2], r[3]);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    out[2 * j] = sigma * (radius * std::cos(angle));
    if (2 * j + 1 < dim) out[2 * j + 1] = sigma * (radius * std::sin(angle));
  }
}

std::vector<double> gaussian_sample(const NoiseStreamKey& key, std::size_t dim,
                                    double sigma) {
  std::vector<double> out(dim);
  gaussian_sample_into(key, sigma, out);
  return out;
}

void uniform_sample_into(const NoiseStreamKey& key, std::span<double> out) {
  for (std::size_t j = 0; 2 * j < out.size(); ++j) {
    const Block r =
        draw_block(key, kUniformStreamBit | static_cast<std::uint32_t>(j));
    out[2 * j] = to_unit_open(r[0], r[1]);
    if (2 * j + 1 < out.size()) out[2 * j + 1] = to_unit_open(r[2], r[3]);
  }
}

}  // namespace sween
