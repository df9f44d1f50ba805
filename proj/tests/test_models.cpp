#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "doctest.h"
#include "sween/error.hpp"
#include "sween/models.hpp"

using namespace sween;
namespace fs = std::filesystem;

namespace {

MlpParams random_mlp(std::vector<std::size_t> arch, std::uint64_t seed, double scale = 0.8) {
  MlpParams m = make_mlp(arch);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  for (auto& l : m.layers) {
    for (auto& w : l.weights) w = g(rng);
    for (auto& b : l.bias) b = g(rng);
  }
  return m;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_CASE("forward") {
  SUBCASE("zero parameters give the uniform vector") {
    const std::vector<std::size_t> arch = {3, 5, 4};
    const auto out = forward(make_mlp(arch), std::vector<double>{0.3, -1.0, 2.0});
    for (double p : out) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));
  }

  SUBCASE("single identity layer with equal logits") {
    const std::vector<std::size_t> arch = {2, 2};
    const MlpParams m = make_mlp(arch);
    CHECK(m.layers[0].activation == Activation::kIdentity);
    const auto out = forward(m, std::vector<double>{0.0, 0.0});
    CHECK(out[0] == 0.5);
    CHECK(out[1] == 0.5);
  }

  SUBCASE("hand-built two-layer net") {
    const std::vector<std::size_t> arch = {2, 2, 2};
    MlpParams m = make_mlp(arch);
    m.layers[0].weights = {1.0, -2.0, 0.5, 0.25};
    m.layers[0].bias = {0.1, -0.3};
    m.layers[1].weights = {2.0, -1.0, -0.5, 1.5};
    m.layers[1].bias = {0.0, 0.2};
    // x = (0.4, -0.2): hidden pre = (0.4 + 0.4 + 0.1, 0.2 - 0.05 - 0.3)
    //   = (0.9, -0.15) -> relu (0.9, 0); logits = (1.8, -0.45 + 0.2).
    const double l0 = 1.8, l1 = -0.25;
    const double p0 = std::exp(l0) / (std::exp(l0) + std::exp(l1));
    const auto out = forward(m, std::vector<double>{0.4, -0.2});
    CHECK(std::abs(out[0] - p0) <= 1e-12);
    CHECK(std::abs(out[1] - (1.0 - p0)) <= 1e-12);
  }

  SUBCASE("always on the simplex") {
    const MlpParams m = random_mlp({4, 16, 16, 6}, 3, 3.0);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(0.0, 10.0);
    for (int t = 0; t < 200; ++t) {
      std::vector<double> x(4);
      for (auto& v : x) v = g(rng);
      const auto out = forward(m, x);
      for (double p : out) CHECK(p >= 0.0);
      CHECK(std::abs(sum(out) - 1.0) <= 1e-9);
    }
  }

  SUBCASE("dimension mismatch") {
    const std::vector<std::size_t> arch = {3, 2};
    try {
      forward(make_mlp(arch), std::vector<double>{1.0, 2.0});
      FAIL("expected dimension mismatch");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kDimensionMismatch);
    }
  }

  CHECK(argmax(std::vector<double>{0.2, 0.4, 0.4}) == 1);
}

TEST_CASE("analytic gradient matches central differences") {
  const MlpParams m = random_mlp({2, 4, 3}, 17);
  const std::vector<double> x = {0.7, -1.3};
  const std::size_t label = 2;
  MlpParams grad = make_mlp(m.arch());
  loss_and_gradient(m, x, label, grad);

  auto loss_at = [&](const MlpParams& p) {
    MlpParams scratch = make_mlp(p.arch());
    return loss_and_gradient(p, x, label, scratch);
  };
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    for (int which = 0; which < 2; ++which) {
      const std::size_t count =
          which == 0 ? m.layers[l].weights.size() : m.layers[l].bias.size();
      for (std::size_t i = 0; i < count; ++i) {
        MlpParams plus = m, minus = m;
        auto& vp = which == 0 ? plus.layers[l].weights[i] : plus.layers[l].bias[i];
        auto& vm = which == 0 ? minus.layers[l].weights[i] : minus.layers[l].bias[i];
        vp += h;
        vm -= h;
        const double numeric = (loss_at(plus) - loss_at(minus)) / (2 * h);
        const double analytic =
            which == 0 ? grad.layers[l].weights[i] : grad.layers[l].bias[i];
        const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-7});
        worst = std::max(worst, std::abs(numeric - analytic) / denom);
      }
    }
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("gaussian augmentation training") {
  const Dataset data = gen_gaussian_mixture(2, 2, 1000, 4.0, 0.5, 7);
  const auto parts = split(data, {0.7, 0.1, 0.2}, 7);
  const std::vector<std::size_t> arch = {2, 16, 2};
  TrainConfig cfg;
  cfg.sigma = 0.0;
  cfg.epochs = 30;
  cfg.learning_rate = 0.05;
  cfg.seed = 3;

  const MlpParams model = train_gaussian_aug(parts.train, arch, cfg);
  CHECK(clean_accuracy(model, parts.test) >= 0.98);
  CHECK(train_gaussian_aug(parts.train, arch, cfg) == model);

  TrainConfig other = cfg;
  other.seed = 4;
  CHECK_FALSE(train_gaussian_aug(parts.train, arch, other) == model);

  TrainConfig noisy = cfg;
  noisy.sigma = 0.5;
  CHECK_FALSE(train_gaussian_aug(parts.train, arch, noisy) == model);

  TrainConfig bad = cfg;
  bad.epochs = 0;
  CHECK_THROWS_AS(train_gaussian_aug(parts.train, arch, bad), Error);
  const std::vector<std::size_t> wrong_arch = {3, 8, 2};
  CHECK_THROWS_AS(train_gaussian_aug(parts.train, wrong_arch, cfg), Error);

  SUBCASE("divergence is reported with the epoch") {
    TrainConfig wild = cfg;
    wild.learning_rate = 1e300;
    try {
      train_gaussian_aug(parts.train, arch, wild);
      FAIL("expected divergence");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kNumericFailure);
      CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
  }
}

TEST_CASE("training loss trends down") {
  auto window_means = [](const std::vector<double>& h) {
    std::vector<double> windows;
    for (std::size_t s = 0; s + 5 <= h.size(); s += 5) {
      windows.push_back(std::accumulate(h.begin() + s, h.begin() + s + 5, 0.0) / 5);
    }
    return windows;
  };
  auto nonincreasing = [](const std::vector<double>& w) {
    for (std::size_t i = 1; i < w.size(); ++i) {
      if (w[i] > w[i - 1] + 1e-12) return false;
    }
    return true;
  };

  const Dataset data = gen_gaussian_mixture(2, 4, 1000, 4.0, 0.5, 7);
  const std::vector<std::size_t> arch = {2, 16, 16, 4};
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.learning_rate = 0.05;
  cfg.seed = 9;

  SUBCASE("fixed objective: smoothed loss never rises") {
    cfg.sigma = 0.0;
    std::vector<double> history;
    train_gaussian_aug(data, arch, cfg, &history);
    CHECK(history.size() == 60);
    bool ok = nonincreasing(window_means(history));
    if (!ok) {
      cfg.learning_rate *= 0.5;
      history.clear();
      train_gaussian_aug(data, arch, cfg, &history);
      ok = nonincreasing(window_means(history));
    }
    CHECK(ok);
  }

  SUBCASE("augmented objective: fresh noise each epoch, so only the trend") {
    cfg.sigma = 0.5;
    std::vector<double> history;
    train_gaussian_aug(data, arch, cfg, &history);
    const auto w = window_means(history);
    CHECK(w.back() < 0.5 * w.front());
    CHECK(*std::min_element(w.begin() + 1, w.end()) < w.front());
  }
}

TEST_CASE("model files") {
  const auto dir = fs::temp_directory_path() / "sween_test_models";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const MlpParams m = random_mlp({3, 7, 5, 4}, 21);
  save_model(m, dir / "m.json");
  const MlpParams back = load_model(dir / "m.json");
  CHECK(back == m);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 2.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> x(3);
    for (auto& v : x) v = g(rng);
    CHECK(forward(back, x) == forward(m, x));
  }

  auto expect_format_error = [](const fs::path& p, const std::string& needle) {
    try {
      load_model(p);
      FAIL("expected a format error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kFormat);
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };

  std::ifstream in(dir / "m.json");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::ofstream(dir / "truncated.json") << text.substr(0, text.size() / 2);
  expect_format_error(dir / "truncated.json", "malformed");

  std::string v2 = text;
  v2.replace(v2.find("\"version\":1"), 11, "\"version\":2");
  std::ofstream(dir / "v2.json") << v2;
  expect_format_error(dir / "v2.json", "version 2");

  std::string short_b = text;
  const auto pos = short_b.find("\"b\":\"") + 5;
  short_b.erase(pos, 12);
  std::ofstream(dir / "short.json") << short_b;
  expect_format_error(dir / "short.json", "layers[0].b");

  try {
    load_model(dir / "nope.json");
    FAIL("expected io error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kIo);
  }
}
