#include "sween/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "json.hpp"
#include "sween/error.hpp"
#include "sween/io_util.hpp"
#include "sween/numerics.hpp"

namespace sween {

EnsembleWeights project_to_simplex(std::vector<double> raw) {
  double total = 0.0;
  for (double& v : raw) {
    if (!std::isfinite(v)) {
      fail(ErrorKind::kNumericFailure, "ensemble weights contain a non-finite value");
    }
    v = std::max(v, 0.0);
    total += v;
  }
  if (!(total > 0.0)) {
    fail(ErrorKind::kInvalidParameter, "ensemble weights have no positive mass");
  }
  for (double& v : raw) v /= total;
  return {std::move(raw)};
}

EnsembleWeights uniform_weights(std::size_t k) {
  if (k == 0) fail(ErrorKind::kInvalidParameter, "ensemble needs at least one candidate");
  return {std::vector<double>(k, 1.0 / static_cast<double>(k))};
}

namespace {

void check_candidates(std::span<const MlpParams> candidates,
                      const EnsembleWeights& weights) {
  if (candidates.empty()) {
    fail(ErrorKind::kInvalidParameter, "ensemble needs at least one candidate");
  }
  if (weights.size() != candidates.size()) {
    fail(ErrorKind::kDimensionMismatch,
         "ensemble has " + std::to_string(candidates.size()) + " candidates but " +
             std::to_string(weights.size()) + " weights");
  }
  for (const auto& c : candidates) {
    if (c.input_dim() != candidates.front().input_dim() ||
        c.num_classes() != candidates.front().num_classes()) {
      fail(ErrorKind::kDimensionMismatch,
           "ensemble candidates disagree on input dim or class count");
    }
  }
  double total = 0.0;
  for (double v : weights.w) {
    if (!(v >= 0.0)) fail(ErrorKind::kInvalidParameter, "ensemble weight is negative");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    fail(ErrorKind::kInvalidParameter, "ensemble weights do not sum to 1");
  }
}

}  // namespace

void validate(const SweenModel& model) {
  check_candidates(model.candidates, model.weights);
  if (!(model.sigma > 0.0)) fail(ErrorKind::kInvalidParameter, "sigma must be positive");
}

std::vector<double> ensemble_forward(std::span<const MlpParams> candidates,
                                     const EnsembleWeights& weights,
                                     std::span<const double> x) {
  check_candidates(candidates, weights);
  std::vector<double> out(candidates.front().num_classes(), 0.0);
  ensemble_function(candidates, weights).eval(x, out);
  return out;
}

ProbabilityFunction ensemble_function(std::span<const MlpParams> candidates,
                                      const EnsembleWeights& weights) {
  check_candidates(candidates, weights);
  std::vector<std::pair<const MlpParams*, double>> active;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    if (weights.w[k] > 0.0) active.emplace_back(&candidates[k], weights.w[k]);
  }
  const std::size_t m = candidates.front().num_classes();
  ProbabilityFunction f;
  f.input_dim = candidates.front().input_dim();
  f.num_classes = m;
  f.cost = active.size();
  f.eval = [active = std::move(active), m](std::span<const double> x,
                                           std::span<double> out) {
    thread_local std::vector<double> member;
    member.resize(m);
    std::fill(out.begin(), out.end(), 0.0);
    for (const auto& [model, w] : active) {
      forward_into(*model, x, member);
      for (std::size_t c = 0; c < m; ++c) out[c] += w * member[c];
    }
  };
  return f;
}

MCEstimate sween_smoothed_mc(const SweenModel& model, std::span<const double> x,
                             std::uint64_t samples, const NoiseStreamKey& key_base,
                             NoiseSharing sharing) {
  validate(model);
  if (samples < 1) fail(ErrorKind::kInvalidParameter, "sween_smoothed_mc: s must be >= 1");
  if (sharing == NoiseSharing::kShared) {
    return smoothed_probs_mc(ensemble_function(model.candidates, model.weights), x,
                             model.sigma, samples, key_base);
  }
  MCEstimate est;
  est.class_means.assign(model.num_classes(), 0.0);
  est.samples = samples;
  est.sigma = model.sigma;
  for (std::size_t k = 0; k < model.size(); ++k) {
    const MCEstimate local = smoothed_probs_mc(
        as_probability_function(model.candidates[k]), x, model.sigma, samples,
        key_base.with_candidate(key_base.candidate_index + static_cast<std::uint32_t>(k)));
    for (std::size_t c = 0; c < est.class_means.size(); ++c) {
      est.class_means[c] += model.weights.w[k] * local.class_means[c];
    }
  }
  return est;
}

RiskTable build_risk_table(std::span<const MlpParams> candidates,
                           const Dataset& eval_set, double sigma,
                           std::uint64_t samples, std::uint64_t seed) {
  if (samples < 1) fail(ErrorKind::kInvalidParameter, "risk: s must be >= 1");
  if (eval_set.size() == 0) fail(ErrorKind::kEmptyInput, "risk: evaluation set is empty");
  if (!(sigma > 0.0)) fail(ErrorKind::kInvalidParameter, "risk: sigma must be positive");
  check_candidates(candidates, uniform_weights(candidates.size()));

  RiskTable table;
  table.num_points = eval_set.size();
  table.num_candidates = candidates.size();
  table.true_class_mean.assign(table.num_points * table.num_candidates, 0.0);
  std::vector<double> noisy(eval_set.dim);
  std::vector<double> probs(candidates.front().num_classes());
  for (std::size_t i = 0; i < eval_set.size(); ++i) {
    const auto& point = eval_set.points[i];
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      double acc = 0.0;
      for (std::uint64_t j = 0; j < samples; ++j) {
        gaussian_sample_into({seed, static_cast<std::uint32_t>(i),
                              static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(k)},
                             sigma, noisy);
        for (std::size_t d = 0; d < noisy.size(); ++d) noisy[d] += point.features[d];
        forward_into(candidates[k], noisy, probs);
        acc += probs[point.label];
      }
      table.true_class_mean[i * table.num_candidates + k] =
          acc / static_cast<double>(samples);
    }
  }
  return table;
}

double risk_from_table(const RiskTable& table, std::span<const double> w) {
  double total = 0.0;
  for (std::size_t i = 0; i < table.num_points; ++i) {
    double q = 0.0;
    for (std::size_t k = 0; k < table.num_candidates; ++k) q += w[k] * table.at(i, k);
    total += -std::log(std::max(q, 1e-12));
  }
  return total / static_cast<double>(table.num_points);
}

double empirical_risk(std::span<const MlpParams> candidates,
                      const EnsembleWeights& weights, const Dataset& eval_set,
                      double sigma, std::uint64_t samples, std::uint64_t seed) {
  check_candidates(candidates, weights);
  const RiskTable table = build_risk_table(candidates, eval_set, sigma, samples, seed);
  return risk_from_table(table, weights.w);
}

namespace {

std::vector<double> softmax_of(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> w(logits.size());
  double total = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    w[k] = std::exp(logits[k] - m);
    total += w[k];
  }
  for (double& v : w) v /= total;
  return w;
}

// d risk / d w_k on the fixed table.
std::vector<double> risk_gradient(const RiskTable& table, std::span<const double> w) {
  std::vector<double> g(table.num_candidates, 0.0);
  for (std::size_t i = 0; i < table.num_points; ++i) {
    double q = 0.0;
    for (std::size_t k = 0; k < table.num_candidates; ++k) q += w[k] * table.at(i, k);
    if (q < 1e-12) continue;  // loss is flat under the floor
    for (std::size_t k = 0; k < table.num_candidates; ++k) g[k] -= table.at(i, k) / q;
  }
  for (double& v : g) v /= static_cast<double>(table.num_points);
  return g;
}

EnsembleWeights solve_erm(std::span<const MlpParams> candidates, const Dataset& eval_set,
                          double sigma, const SolveConfig& cfg, SolveTrace* trace) {
  const RiskTable table =
      build_risk_table(candidates, eval_set, sigma, cfg.samples, cfg.seed);
  const std::size_t k = candidates.size();
  // Exponentiated gradient in log space: iterates stay inside the simplex.
  std::vector<double> log_w(k, 0.0);
  std::vector<double> w = softmax_of(log_w);
  double objective = risk_from_table(table, w);
  double lr = cfg.learning_rate;
  int epoch = 0;
  if (trace) trace->objective.push_back(objective);
  for (; epoch < cfg.epochs; ++epoch) {
    const auto g = risk_gradient(table, w);
    std::vector<double> next_log = log_w;
    for (std::size_t j = 0; j < k; ++j) next_log[j] -= lr * g[j];
    const auto next_w = softmax_of(next_log);
    const double next_obj = risk_from_table(table, next_w);
    if (!std::isfinite(next_obj)) {
      fail(ErrorKind::kNumericFailure,
           "solve_weights: objective diverged at epoch " + std::to_string(epoch));
    }
    if (next_obj > objective) {
      lr *= 0.5;
      if (lr < 1e-12) break;
      continue;
    }
    const double change = objective - next_obj;
    log_w = next_log;
    w = next_w;
    objective = next_obj;
    if (trace) trace->objective.push_back(objective);
    if (change < 1e-10) {
      ++epoch;
      break;
    }
  }
  if (trace) trace->epochs_run = epoch;
  return project_to_simplex(w);
}

EnsembleWeights solve_streaming(std::span<const MlpParams> candidates,
                                const Dataset& eval_set, double sigma,
                                const SolveConfig& cfg, SolveTrace* trace) {
  check_candidates(candidates, uniform_weights(candidates.size()));
  if (eval_set.size() == 0) fail(ErrorKind::kEmptyInput, "solve_weights: evaluation set is empty");
  const std::size_t k = candidates.size();
  std::vector<double> logits(k, 0.0);
  std::vector<double> noisy(eval_set.dim);
  std::vector<double> member_true(k);
  std::vector<double> probs(candidates.front().num_classes());
  std::vector<double> history;
  int epoch = 0;
  for (; epoch < cfg.epochs; ++epoch) {
    const auto w = softmax_of(logits);
    std::vector<double> grad_w(k, 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < eval_set.size(); ++i) {
      const auto& point = eval_set.points[i];
      gaussian_sample_into({cfg.seed, static_cast<std::uint32_t>(i),
                            static_cast<std::uint32_t>(epoch), 0},
                           sigma, noisy);
      for (std::size_t d = 0; d < noisy.size(); ++d) noisy[d] += point.features[d];
      double q = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        forward_into(candidates[j], noisy, probs);
        member_true[j] = probs[point.label];
        q += w[j] * member_true[j];
      }
      q = std::max(q, 1e-12);
      loss += -std::log(q);
      for (std::size_t j = 0; j < k; ++j) grad_w[j] -= member_true[j] / q;
    }
    const double n = static_cast<double>(eval_set.size());
    loss /= n;
    if (!std::isfinite(loss)) {
      fail(ErrorKind::kNumericFailure,
           "solve_weights: objective diverged at epoch " + std::to_string(epoch));
    }
    history.push_back(loss);
    if (trace) trace->objective.push_back(loss);
    // Chain rule through softmax: d/da_j = w_j (g_j - <w, g>).
    double mean_g = 0.0;
    for (std::size_t j = 0; j < k; ++j) mean_g += w[j] * grad_w[j] / n;
    for (std::size_t j = 0; j < k; ++j) {
      logits[j] -= cfg.learning_rate * w[j] * (grad_w[j] / n - mean_g);
    }
    constexpr std::size_t kWindow = 10;
    if (history.size() >= 2 * kWindow) {
      const auto end = history.end();
      const double recent = std::accumulate(end - kWindow, end, 0.0) / kWindow;
      const double before =
          std::accumulate(end - 2 * kWindow, end - kWindow, 0.0) / kWindow;
      if (std::abs(recent - before) < 1e-6) {
        ++epoch;
        break;
      }
    }
  }
  if (trace) trace->epochs_run = epoch;
  return project_to_simplex(softmax_of(logits));
}

}  // namespace

EnsembleWeights solve_weights(std::span<const MlpParams> candidates,
                              const Dataset& eval_set, double sigma,
                              const SolveConfig& cfg, SolveTrace* trace) {
  if (candidates.empty()) {
    fail(ErrorKind::kInvalidParameter, "solve_weights: need at least one candidate");
  }
  if (eval_set.size() == 0) {
    fail(ErrorKind::kEmptyInput, "solve_weights: evaluation set is empty");
  }
  if (cfg.epochs < 0) fail(ErrorKind::kInvalidParameter, "solve_weights: epochs must be >= 0");
  if (!(cfg.learning_rate > 0.0)) {
    fail(ErrorKind::kInvalidParameter, "solve_weights: learning_rate must be positive");
  }
  if (!(sigma > 0.0)) fail(ErrorKind::kInvalidParameter, "solve_weights: sigma must be positive");
  if (cfg.mode == SolveMode::kErm && cfg.samples < 1) {
    fail(ErrorKind::kInvalidParameter, "solve_weights: s must be >= 1 in erm mode");
  }
  if (candidates.size() == 1) {
    if (trace) trace->epochs_run = 0;
    return {{1.0}};
  }
  return cfg.mode == SolveMode::kErm
             ? solve_erm(candidates, eval_set, sigma, cfg, trace)
             : solve_streaming(candidates, eval_set, sigma, cfg, trace);
}

std::vector<std::size_t> adaptive_order(const EnsembleWeights& weights) {
  std::vector<std::size_t> order;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights.w[k] > 0.0) order.push_back(k);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return weights.w[a] > weights.w[b];
  });
  return order;
}

AdaptivePrediction adaptive_predict(const SweenModel& model,
                                    std::span<const double> x,
                                    const AdaptiveConfig& cfg,
                                    const NoiseStreamKey& key_base) {
  validate(model);
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) {
    fail(ErrorKind::kInvalidParameter, "adaptive: alpha must lie in (0, 1)");
  }
  if (!(cfg.threshold > 0.0 && cfg.threshold < 1.0)) {
    fail(ErrorKind::kInvalidParameter, "adaptive: threshold must lie in (0, 1)");
  }
  if (cfg.s_local < 1) fail(ErrorKind::kInvalidParameter, "adaptive: s_local must be >= 1");

  const double z = std_normal_quantile(1.0 - cfg.alpha / 2.0);
  AdaptivePrediction out;
  out.order = adaptive_order(model.weights);
  const std::size_t m = model.num_classes();
  const std::size_t k_eff = out.order.size();

  std::vector<std::vector<double>> local;  // p_{pi_j}
  std::vector<double> weighted_sum(m, 0.0);
  double sum_w = 0.0;
  double sum_w2 = 0.0;
  for (std::size_t i = 1; i <= k_eff; ++i) {
    const std::size_t cand = out.order[i - 1];
    const double w = model.weights.w[cand];
    const MCEstimate est = smoothed_probs_mc(
        as_probability_function(model.candidates[cand]), x, model.sigma, cfg.s_local,
        key_base.with_candidate(key_base.candidate_index +
                                static_cast<std::uint32_t>(i)));
    out.evals += cfg.s_local;
    local.push_back(est.class_means);
    sum_w += w;
    sum_w2 += w * w;
    for (std::size_t c = 0; c < m; ++c) weighted_sum[c] += w * est.class_means[c];

    out.class_means.resize(m);
    for (std::size_t c = 0; c < m; ++c) out.class_means[c] = weighted_sum[c] / sum_w;
    const std::size_t top = argmax(out.class_means);
    out.prediction = top;
    out.prefix_len = i;
    const double p_top = out.class_means[top];

    if (i == k_eff) break;
    if (i == 1) {
      if (p_top > cfg.threshold) break;
      continue;
    }
    double spread = 0.0;
    for (std::size_t j = 0; j < i; ++j) {
      const double d = local[j][top] - p_top;
      spread += model.weights.w[out.order[j]] * d * d;
    }
    const double bound =
        0.5 + z * (std::sqrt(sum_w2) / sum_w) * std::sqrt(spread / sum_w);
    if (p_top > bound) break;
  }
  return out;
}

AdaptiveCertification adaptive_certify(const SweenModel& model,
                                       std::span<const double> x,
                                       const AdaptiveConfig& cfg,
                                       const CertifyParams& params,
                                       const NoiseStreamKey& key_base) {
  const AdaptivePrediction pred = adaptive_predict(model, x, cfg, key_base);

  AdaptiveCertification out;
  out.prefix_len = pred.prefix_len;
  if (pred.prefix_len == pred.order.size()) {
    // Every weighted candidate was consulted: certify the full ensemble as is.
    out.result = certify(ensemble_function(model.candidates, model.weights), x,
                         params, key_base);
  } else {
    std::vector<MlpParams> sub;
    std::vector<double> sub_w;
    for (std::size_t j = 0; j < pred.prefix_len; ++j) {
      sub.push_back(model.candidates[pred.order[j]]);
      sub_w.push_back(model.weights.w[pred.order[j]]);
    }
    const EnsembleWeights renormalised = project_to_simplex(std::move(sub_w));
    out.result = certify(ensemble_function(sub, renormalised), x, params, key_base);
  }
  out.result.evals += pred.evals;
  return out;
}

SweenModel sween_pipeline(const Dataset& train, const Dataset& weight_eval,
                          std::span<const std::vector<std::size_t>> archs,
                          TrainConfig train_cfg, const SolveConfig& solve_cfg,
                          double sigma) {
  if (archs.empty()) fail(ErrorKind::kInvalidParameter, "pipeline: archs must be nonempty");
  SweenModel model;
  model.sigma = sigma;
  const std::uint64_t base_seed = train_cfg.seed;
  train_cfg.sigma = sigma;
  for (std::size_t k = 0; k < archs.size(); ++k) {
    train_cfg.seed = base_seed + k;
    model.candidates.push_back(train_gaussian_aug(train, archs[k], train_cfg));
  }
  model.weights = solve_weights(model.candidates, weight_eval, sigma, solve_cfg);
  return model;
}

void save_weights_file(const WeightsFile& file, const std::filesystem::path& path) {
  nlohmann::json j;
  j["version"] = 1;
  j["sigma"] = file.sigma;
  j["candidates"] = file.candidates;
  j["weights"] = file.weights;
  io::write_file(path, j.dump(2) + "\n");
}

WeightsFile load_weights_file(const std::filesystem::path& path) {
  WeightsFile file;
  try {
    const auto j = nlohmann::json::parse(io::read_file(path));
    if (j.at("version").get<int>() != 1) {
      fail(ErrorKind::kFormat, "weights file: version " + j.at("version").dump() +
                                   " not supported (expected 1)");
    }
    file.sigma = j.at("sigma").get<double>();
    file.candidates = j.at("candidates").get<std::vector<std::string>>();
    file.weights = j.at("weights").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, "weights file '" + path.string() + "': " + e.what());
  }
  if (file.candidates.size() != file.weights.size() || file.candidates.empty()) {
    fail(ErrorKind::kFormat, "weights file: candidates and weights differ in length");
  }
  return file;
}

SweenModel load_sween_model(const std::filesystem::path& weights_path) {
  const WeightsFile file = load_weights_file(weights_path);
  SweenModel model;
  model.sigma = file.sigma;
  for (const auto& c : file.candidates) {
    std::filesystem::path p(c);
    if (p.is_relative()) p = weights_path.parent_path() / p;
    model.candidates.push_back(load_model(p));
  }
  double total = 0.0;
  bool nonnegative = true;
  for (double v : file.weights) {
    total += v;
    nonnegative = nonnegative && v >= 0.0;
  }
  model.weights = (nonnegative && std::abs(total - 1.0) <= 1e-9)
                      ? EnsembleWeights{file.weights}
                      : project_to_simplex(file.weights);
  validate(model);
  return model;
}

}  // namespace sween
