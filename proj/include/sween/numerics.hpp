#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace sween {

// Smallest / largest probability handed to the normal quantile by callers.
inline constexpr double kProbClamp = 1e-12;

double std_normal_cdf(double x);

// Throws ErrorKind::kDomain unless 0 < p < 1.
double std_normal_quantile(double p);

// Clamps p into [kProbClamp, 1 - kProbClamp] before taking the quantile.
double clamped_normal_quantile(double p);

// Exact one-sided Clopper-Pearson lower confidence bound on a binomial
// proportion: the p with P[Binomial(trials, p) >= successes] = alpha.
double clopper_pearson_lower(std::uint64_t successes, std::uint64_t trials,
                             double alpha);

// P[Binomial(trials, p) >= successes], accumulated in log space.
double binomial_upper_tail(std::uint64_t successes, std::uint64_t trials,
                           double p);

// Exact two-sided binomial test p-value against H0: p = 1/2.
double binomial_two_sided_pvalue(std::uint64_t successes,
                                 std::uint64_t trials);

double log_gamma(double x);

// Addresses one Gaussian noise vector: delta_{point, sample, candidate}
// under a global seed. Streams are counter based, so a key always maps to
// the same vector no matter which thread asks or in what order.
struct NoiseStreamKey {
  std::uint64_t global_seed = 0;
  std::uint32_t point_index = 0;
  std::uint32_t sample_index = 0;
  std::uint32_t candidate_index = 0;

  NoiseStreamKey with_point(std::uint32_t i) const {
    auto k = *this;
    k.point_index = i;
    return k;
  }
  NoiseStreamKey with_sample(std::uint32_t j) const {
    auto k = *this;
    k.sample_index = j;
    return k;
  }
  NoiseStreamKey with_candidate(std::uint32_t c) const {
    auto k = *this;
    k.candidate_index = c;
    return k;
  }

  friend bool operator==(const NoiseStreamKey&,
                         const NoiseStreamKey&) = default;
};

// Writes sigma * N(0, I) for `key` into `out`.
void gaussian_sample_into(const NoiseStreamKey& key, double sigma,
                          std::span<double> out);

std::vector<double> gaussian_sample(const NoiseStreamKey& key, std::size_t dim,
                                    double sigma);

// Uniform doubles in (0, 1) from the same counter-based generator, on a
// stream disjoint from the Gaussian one.
void uniform_sample_into(const NoiseStreamKey& key, std::span<double> out);

}  // namespace sween
