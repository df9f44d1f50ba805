#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sween/models.hpp"
#include "sween/numerics.hpp"

namespace sween {

// A map from R^d onto the probability simplex over num_classes labels.
// `cost` is the number of candidate-network forward passes per call, so
// evaluation counts stay comparable between single models and ensembles.
struct ProbabilityFunction {
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::size_t cost = 1;
  std::function<void(std::span<const double>, std::span<double>)> eval;
};

// The returned function refers to `model`, which must outlive it.
ProbabilityFunction as_probability_function(const MlpParams& model);

struct MCEstimate {
  std::vector<double> class_means;
  std::vector<std::uint64_t> vote_counts;
  std::uint64_t samples = 0;
  double sigma = 0.0;
};

// Sample j uses key_base with sample_index = key_base.sample_index + j.
MCEstimate smoothed_probs_mc(const ProbabilityFunction& f,
                             std::span<const double> x, double sigma,
                             std::uint64_t samples, const NoiseStreamKey& key_base);

// Closed-form smoothed probability of the positive side of the linear hard
// classifier sign(w.x + b): Phi((w.x + b) / (sigma ||w||)).
double smoothed_linear_exact(std::span<const double> w, double b,
                             std::span<const double> x, double sigma);

// clip(sigma/2 [Phi^-1(p_top) - Phi^-1(p_runner)]; 0, D) with both
// probabilities clamped away from {0, 1}.
double certified_radius(double p_top, double p_runner, double sigma,
                        double diameter);

// Two-class reduction with the runner-up bounded by 1 - p_lower:
// clip(sigma Phi^-1(p_lower); 0, D), and 0 when p_lower <= 1/2.
double radius_from_lower_bound(double p_lower, double sigma, double diameter);

struct CertifyParams {
  double sigma = 0.25;
  std::uint64_t n0 = 100;
  std::uint64_t n = 100000;
  double alpha = 0.001;
  double diameter = 0.0;
};

struct CertificationResult {
  // nullopt means ABSTAIN.
  std::optional<std::size_t> prediction;
  double p_lower = 0.0;
  double radius = 0.0;
  std::uint64_t n0 = 0;
  std::uint64_t n = 0;
  double alpha = 0.0;
  std::uint64_t evals = 0;

  bool abstained() const { return !prediction.has_value(); }
};

// Selection uses samples [base, base + n0), estimation the next n indices.
CertificationResult certify(const ProbabilityFunction& f,
                            std::span<const double> x,
                            const CertifyParams& params,
                            const NoiseStreamKey& key_base);

// nullopt means ABSTAIN.
std::optional<std::size_t> predict_smoothed(const ProbabilityFunction& f,
                                            std::span<const double> x,
                                            double sigma, std::uint64_t n_pred,
                                            double alpha,
                                            const NoiseStreamKey& key_base);

}  // namespace sween
