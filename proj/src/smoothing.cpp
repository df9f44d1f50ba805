#include "sween/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sween/error.hpp"

namespace sween {

ProbabilityFunction as_probability_function(const MlpParams& model) {
  return {model.input_dim(), model.num_classes(), 1,
          [&model](std::span<const double> x, std::span<double> out) {
            forward_into(model, x, out);
          }};
}

namespace {

void require_sample_range(const NoiseStreamKey& key, std::uint64_t count) {
  if (static_cast<std::uint64_t>(key.sample_index) + count > 0xFFFFFFFFull) {
    fail(ErrorKind::kInvalidParameter, "sample count exceeds the noise index range");
  }
}

}  // namespace

MCEstimate smoothed_probs_mc(const ProbabilityFunction& f,
                             std::span<const double> x, double sigma,
                             std::uint64_t samples,
                             const NoiseStreamKey& key_base) {
  if (samples < 1) fail(ErrorKind::kInvalidParameter, "smoothed_probs_mc: s must be >= 1");
  if (!(sigma > 0.0)) {
    fail(ErrorKind::kInvalidParameter, "smoothed_probs_mc: sigma must be positive");
  }
  if (x.size() != f.input_dim) {
    fail(ErrorKind::kDimensionMismatch,
         "smoothed_probs_mc: input has " + std::to_string(x.size()) +
             " features, model expects " + std::to_string(f.input_dim));
  }
  require_sample_range(key_base, samples);

  MCEstimate est;
  est.class_means.assign(f.num_classes, 0.0);
  est.vote_counts.assign(f.num_classes, 0);
  est.samples = samples;
  est.sigma = sigma;

  std::vector<double> noisy(x.size());
  std::vector<double> probs(f.num_classes);
  for (std::uint64_t j = 0; j < samples; ++j) {
    gaussian_sample_into(
        key_base.with_sample(key_base.sample_index + static_cast<std::uint32_t>(j)),
        sigma, noisy);
    for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] += x[i];
    f.eval(noisy, probs);
    for (std::size_t c = 0; c < probs.size(); ++c) est.class_means[c] += probs[c];
    ++est.vote_counts[argmax(probs)];
  }
  for (double& m : est.class_means) m /= static_cast<double>(samples);
  return est;
}

double smoothed_linear_exact(std::span<const double> w, double b,
                             std::span<const double> x, double sigma) {
  if (w.size() != x.size()) {
    fail(ErrorKind::kDimensionMismatch, "smoothed_linear_exact: w and x differ in length");
  }
  double norm_sq = 0.0;
  double margin = b;
  for (std::size_t i = 0; i < w.size(); ++i) {
    norm_sq += w[i] * w[i];
    margin += w[i] * x[i];
  }
  if (!(norm_sq > 0.0)) {
    fail(ErrorKind::kInvalidParameter, "smoothed_linear_exact: degenerate weights (||w|| = 0)");
  }
  return std_normal_cdf(margin / (sigma * std::sqrt(norm_sq)));
}

double certified_radius(double p_top, double p_runner, double sigma,
                        double diameter) {
  const double r = 0.5 * sigma *
                   (clamped_normal_quantile(p_top) - clamped_normal_quantile(p_runner));
  return std::clamp(r, 0.0, diameter);
}

double radius_from_lower_bound(double p_lower, double sigma, double diameter) {
  if (!(p_lower > 0.5)) return 0.0;
  return std::clamp(sigma * clamped_normal_quantile(p_lower), 0.0, diameter);
}

CertificationResult certify(const ProbabilityFunction& f,
                            std::span<const double> x,
                            const CertifyParams& params,
                            const NoiseStreamKey& key_base) {
  if (params.n0 < 1 || params.n < 1) {
    fail(ErrorKind::kInvalidParameter, "certify: n0 and n must be >= 1");
  }
  if (!(params.alpha > 0.0 && params.alpha < 1.0)) {
    fail(ErrorKind::kInvalidParameter, "certify: alpha must lie in (0, 1)");
  }
  if (!(params.diameter > 0.0)) {
    fail(ErrorKind::kInvalidParameter, "certify: diameter must be positive");
  }
  require_sample_range(key_base, params.n0 + params.n);

  const MCEstimate selection =
      smoothed_probs_mc(f, x, params.sigma, params.n0, key_base);
  const std::size_t top = static_cast<std::size_t>(
      std::max_element(selection.vote_counts.begin(), selection.vote_counts.end()) -
      selection.vote_counts.begin());
  const MCEstimate estimation = smoothed_probs_mc(
      f, x, params.sigma, params.n,
      key_base.with_sample(key_base.sample_index + static_cast<std::uint32_t>(params.n0)));

  CertificationResult result;
  result.n0 = params.n0;
  result.n = params.n;
  result.alpha = params.alpha;
  result.evals = (params.n0 + params.n) * f.cost;
  result.p_lower =
      clopper_pearson_lower(estimation.vote_counts[top], params.n, params.alpha);
  if (result.p_lower > 0.5) {
    result.prediction = top;
    result.radius = radius_from_lower_bound(result.p_lower, params.sigma, params.diameter);
  }
  return result;
}

std::optional<std::size_t> predict_smoothed(const ProbabilityFunction& f,
                                            std::span<const double> x,
                                            double sigma, std::uint64_t n_pred,
                                            double alpha,
                                            const NoiseStreamKey& key_base) {
  if (n_pred < 2) fail(ErrorKind::kInvalidParameter, "predict: n_pred must be >= 2");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    fail(ErrorKind::kInvalidParameter, "predict: alpha must lie in (0, 1)");
  }
  const MCEstimate est = smoothed_probs_mc(f, x, sigma, n_pred, key_base);
  // Top two counts; the first maximum wins ties.
  std::size_t first = 0;
  for (std::size_t c = 1; c < est.vote_counts.size(); ++c) {
    if (est.vote_counts[c] > est.vote_counts[first]) first = c;
  }
  std::uint64_t second = 0;
  for (std::size_t c = 0; c < est.vote_counts.size(); ++c) {
    if (c != first) second = std::max(second, est.vote_counts[c]);
  }
  const std::uint64_t top = est.vote_counts[first];
  if (binomial_two_sided_pvalue(top, top + second) <= alpha) return first;
  return std::nullopt;
}

}  // namespace sween
