#include <cmath>
#include <memory>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "sween/error.hpp"
#include "sween/smoothing.hpp"

using namespace sween;

namespace {

ProbabilityFunction constant_model(std::size_t dim, std::vector<double> probs) {
  const std::size_t m = probs.size();
  return {dim, m, 1, [probs](std::span<const double>, std::span<double> out) {
            std::copy(probs.begin(), probs.end(), out.begin());
          }};
}

// Hard binary classifier: class 1 iff w.x + b > 0.
ProbabilityFunction linear_model(std::vector<double> w, double b) {
  const std::size_t dim = w.size();
  return {dim, 2, 1, [w, b](std::span<const double> x, std::span<double> out) {
            double s = b;
            for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x[i];
            out[0] = s > 0 ? 0.0 : 1.0;
            out[1] = s > 0 ? 1.0 : 0.0;
          }};
}

}  // namespace

TEST_CASE("monte carlo smoothing") {
  const std::vector<double> x = {0.3, -0.2};
  const NoiseStreamKey key{11, 4, 0, 0};

  SUBCASE("constant integrand") {
    const auto f = constant_model(2, {0, 0, 1, 0});
    const MCEstimate est = smoothed_probs_mc(f, x, 0.5, 500, key);
    CHECK(est.class_means == std::vector<double>{0, 0, 1, 0});
    CHECK(est.vote_counts == std::vector<std::uint64_t>{0, 0, 500, 0});
    CHECK(est.samples == 500);
  }

  SUBCASE("linear classifier against the closed form") {
    const std::vector<double> w = {1.0, 2.0};
    const double b = -0.1;
    const auto f = linear_model(w, b);
    const std::uint64_t s = 100000;
    const double sigma = 0.7;
    const MCEstimate est = smoothed_probs_mc(f, x, sigma, s, key);
    const double p = smoothed_linear_exact(w, b, x, sigma);
    CHECK(std::abs(est.class_means[1] - p) <= 3.0 * std::sqrt(p * (1 - p) / s));
    CHECK(est.vote_counts[0] + est.vote_counts[1] == s);
    CHECK(std::abs(est.class_means[0] + est.class_means[1] - 1.0) <= 1e-9);
  }

  SUBCASE("one sample is one perturbed forward pass") {
    const std::vector<double> w = {1.0, 2.0};
    MlpParams mlp = make_mlp(std::vector<std::size_t>{2, 3});
    mlp.layers[0].weights = {1, -1, 0.5, 2, 0, -1};
    mlp.layers[0].bias = {0.1, 0.2, 0.3};
    const auto f = as_probability_function(mlp);
    const MCEstimate est = smoothed_probs_mc(f, x, 0.4, 1, key);
    auto noisy = gaussian_sample(key, 2, 0.4);
    noisy[0] += x[0];
    noisy[1] += x[1];
    CHECK(est.class_means == forward(mlp, noisy));
  }

  SUBCASE("sample offsets address distinct noise") {
    const auto f = linear_model({1.0, 0.0}, 0.0);
    const auto a = smoothed_probs_mc(f, x, 1.0, 64, key);
    const auto b = smoothed_probs_mc(f, x, 1.0, 64, key.with_sample(64));
    const auto ab = smoothed_probs_mc(f, x, 1.0, 128, key);
    CHECK(a.vote_counts[1] + b.vote_counts[1] == ab.vote_counts[1]);
  }

  CHECK_THROWS_AS(smoothed_probs_mc(constant_model(3, {1, 0}), x, 0.5, 10, key), Error);
  CHECK_THROWS_AS(smoothed_probs_mc(constant_model(2, {1, 0}), x, 0.5, 0, key), Error);
}

TEST_CASE("closed-form smoothed linear classifier") {
  const std::vector<double> w = {1.0, 0.0};
  const double sigma = 0.37;
  CHECK(smoothed_linear_exact(w, 0.0, std::vector<double>{0.0, 5.0}, sigma) == 0.5);
  CHECK(std::abs(smoothed_linear_exact(w, 0.0, std::vector<double>{sigma, 0.0}, sigma) -
                 0.841345) <= 1e-6);
  CHECK(std::abs(smoothed_linear_exact(w, 0.0, std::vector<double>{sigma, 0.0}, sigma) -
                 oracle::normal_cdf(1.0)) <= 1e-14);
  const std::vector<double> w2 = {0.3, -1.2};
  const std::vector<double> w2x10 = {3.0, -12.0};
  const std::vector<double> pt = {0.5, 0.1};
  CHECK(smoothed_linear_exact(w2, 0.4, pt, 0.5) ==
        doctest::Approx(smoothed_linear_exact(w2x10, 4.0, pt, 0.5)).epsilon(1e-14));
  CHECK_THROWS_AS(smoothed_linear_exact(std::vector<double>{0.0, 0.0}, 1.0, pt, 0.5), Error);
}

TEST_CASE("certified radius") {
  CHECK(certified_radius(0.5, 0.5, 0.5, 10.0) == 0.0);
  CHECK(std::abs(certified_radius(0.9, 0.1, 0.5, 10.0) - 0.6407758) <= 1e-6);
  CHECK(certified_radius(1 - 1e-13, 0.0, 0.5, 2.0) == 2.0);
  CHECK(certified_radius(0.3, 0.6, 0.5, 2.0) == 0.0);

  SUBCASE("monotone and linear in sigma") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.01, 0.99);
    for (int t = 0; t < 500; ++t) {
      const double a = u(rng), b = u(rng), d = 0.05 * u(rng);
      CHECK(certified_radius(a + d, b, 0.5, 1e9) >= certified_radius(a, b, 0.5, 1e9));
      CHECK(certified_radius(a, b + d, 0.5, 1e9) <= certified_radius(a, b, 0.5, 1e9));
      const double r1 = certified_radius(a, b, 0.5, 1e9);
      CHECK(certified_radius(a, b, 1.5, 1e9) == doctest::Approx(3.0 * r1).epsilon(1e-12));
    }
  }

  SUBCASE("one-sided reduction") {
    for (double p : {0.51, 0.7, 0.9, 0.999}) {
      CHECK(radius_from_lower_bound(p, 0.5, 100.0) ==
            doctest::Approx(certified_radius(p, 1 - p, 0.5, 100.0)).epsilon(1e-12));
    }
    CHECK(radius_from_lower_bound(0.5, 0.5, 100.0) == 0.0);
    CHECK(radius_from_lower_bound(0.2, 0.5, 100.0) == 0.0);
  }
}

TEST_CASE("linear tightness with exact probabilities") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  int checked = 0;
  while (checked < 50) {
    const std::vector<double> w = {g(rng), g(rng)};
    const double b = g(rng);
    const std::vector<double> x = {g(rng), g(rng)};
    const double sigma = 0.25 + std::abs(g(rng));
    // Beyond ~7 sigma the probability clamp caps the radius.
    if (std::abs(w[0] * x[0] + w[1] * x[1] + b) / std::hypot(w[0], w[1]) > 6.0 * sigma) {
      continue;
    }
    ++checked;
    const double p1 = smoothed_linear_exact(w, b, x, sigma);
    const double top = std::max(p1, 1 - p1);
    const double dist = std::abs(w[0] * x[0] + w[1] * x[1] + b) / std::hypot(w[0], w[1]);
    const double diameter = 3.0;
    CHECK(std::abs(certified_radius(top, 1 - top, sigma, diameter) - std::min(dist, diameter)) <=
          1e-6);
  }
}

TEST_CASE("certify") {
  const std::vector<double> x = {0.0, 0.0};
  CertifyParams params;
  params.sigma = 0.5;
  params.n0 = 100;
  params.n = 1000;
  params.alpha = 0.001;
  params.diameter = 10.0;
  const NoiseStreamKey key{1, 0, 0, 0};

  SUBCASE("constant one-hot model") {
    const auto r = certify(constant_model(2, {0, 0, 1}), x, params, key);
    REQUIRE(r.prediction.has_value());
    CHECK(*r.prediction == 2);
    CHECK(std::abs(r.p_lower - std::pow(0.001, 1.0 / 1000)) <= 1e-15);
    CHECK(std::abs(r.p_lower - 0.99311) <= 1e-5);
    CHECK(std::abs(r.radius - 0.5 * oracle::normal_quantile(r.p_lower)) <= 1e-9);
    CHECK(r.evals == 1100);
    CHECK(r.n0 == 100);
    CHECK(r.n == 1000);
  }

  SUBCASE("uniform output ties to the lowest class") {
    const auto r = certify(constant_model(2, {0.25, 0.25, 0.25, 0.25}), x, params, key);
    REQUIRE(r.prediction.has_value());
    CHECK(*r.prediction == 0);
  }

  SUBCASE("half the votes abstains") {
    auto calls = std::make_shared<std::uint64_t>(0);
    ProbabilityFunction f{2, 2, 1, [calls](std::span<const double>, std::span<double> out) {
                            const std::uint64_t c = (*calls)++;
                            const bool zero = c < 100 || c % 2 == 0;
                            out[0] = zero ? 1.0 : 0.0;
                            out[1] = zero ? 0.0 : 1.0;
                          }};
    const auto r = certify(f, x, params, key);
    CHECK(r.abstained());
    CHECK(r.radius == 0.0);
    CHECK(r.p_lower <= 0.5);
  }

  SUBCASE("radius clipped to the diameter") {
    CertifyParams tight = params;
    tight.diameter = 0.1;
    CHECK(certify(constant_model(2, {1, 0}), x, tight, key).radius == 0.1);
  }

  SUBCASE("never a positive radius with abstention") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    CertifyParams small = params;
    small.n = 200;
    small.n0 = 20;
    for (std::uint32_t t = 0; t < 200; ++t) {
      const auto r = certify(linear_model({1.0, 0.0}, 0.0), std::vector<double>{u(rng), 0.0},
                             small, key.with_point(t));
      CHECK((r.abstained() ? r.radius == 0.0 : r.radius > 0.0));
      CHECK(r.radius <= small.diameter);
    }
  }

  CertifyParams bad = params;
  bad.n = 0;
  CHECK_THROWS_AS(certify(constant_model(2, {1, 0}), x, bad, key), Error);
  bad = params;
  bad.n0 = 0;
  CHECK_THROWS_AS(certify(constant_model(2, {1, 0}), x, bad, key), Error);
}

TEST_CASE("certificates are statistically sound") {
  // True robust radius of the smoothed linear classifier equals the
  // distance to its boundary.
  const std::vector<double> w = {0.6, 0.8};
  const double b = 0.0;
  const std::vector<double> x = {0.3, 0.4};  // margin 0.5
  const double true_radius = 0.5;
  CertifyParams params;
  params.sigma = 0.5;
  params.n0 = 50;
  params.n = 500;
  params.alpha = 0.001;
  params.diameter = 10.0;
  const int runs = 2000;
  int violations = 0;
  for (int t = 0; t < runs; ++t) {
    const auto r = certify(linear_model(w, b), x, params,
                           {static_cast<std::uint64_t>(1000 + t), 0, 0, 0});
    const bool wrong_class = r.prediction.has_value() && *r.prediction != 1;
    if ((wrong_class && r.radius > 0.0) || (!wrong_class && r.radius > true_radius)) {
      ++violations;
    }
  }
  CHECK(static_cast<double>(violations) / runs <= 0.001 + 3.0 * std::sqrt(0.001 / runs));
}

TEST_CASE("predict") {
  const std::vector<double> x = {0.1, 0.2};
  const NoiseStreamKey key{3, 0, 0, 0};
  for (std::uint64_t n = 11; n <= 40; ++n) {
    const auto c = predict_smoothed(constant_model(2, {0, 1, 0}), x, 0.5, n, 0.001, key);
    REQUIRE(c.has_value());
    CHECK(*c == 1);
  }
  // Ten unanimous votes give p = 2^-9 > 0.001.
  CHECK_FALSE(predict_smoothed(constant_model(2, {0, 1}), x, 0.5, 10, 0.001, key).has_value());

  auto calls = std::make_shared<std::uint64_t>(0);
  ProbabilityFunction alternating{2, 2, 1, [calls](std::span<const double>, std::span<double> out) {
                                    const bool zero = (*calls)++ % 2 == 0;
                                    out[0] = zero ? 1.0 : 0.0;
                                    out[1] = zero ? 0.0 : 1.0;
                                  }};
  CHECK_FALSE(predict_smoothed(alternating, x, 0.5, 100, 0.05, key).has_value());

  SUBCASE("rarely abstains at top-vote probability 0.95") {
    const double sigma = 0.5;
    // Place x so that Phi(margin / sigma) = 0.95.
    const double margin = sigma * oracle::normal_quantile(0.95);
    const std::vector<double> at = {margin, 0.0};
    int abstain = 0;
    for (std::uint64_t t = 0; t < 1000; ++t) {
      abstain += !predict_smoothed(linear_model({1.0, 0.0}, 0.0), at, sigma, 100, 0.001,
                                   {500 + t, 0, 0, 0})
                      .has_value();
    }
    CHECK(abstain <= 10);
  }

  CHECK_THROWS_AS(predict_smoothed(constant_model(2, {0, 1}), x, 0.5, 1, 0.001, key), Error);
}
