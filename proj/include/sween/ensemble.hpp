#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sween/datasets.hpp"
#include "sween/models.hpp"
#include "sween/smoothing.hpp"

namespace sween {

// A point of the probability simplex over K candidates.
struct EnsembleWeights {
  std::vector<double> w;

  std::size_t size() const { return w.size(); }
};

// Clamps negatives to zero and rescales to unit sum. Throws if nothing
// positive remains.
EnsembleWeights project_to_simplex(std::vector<double> raw);

EnsembleWeights uniform_weights(std::size_t k);

// The smoothed weighted ensemble: candidates theta_1..theta_K, weights on
// the simplex and the smoothing noise level.
struct SweenModel {
  std::vector<MlpParams> candidates;
  EnsembleWeights weights;
  double sigma = 0.0;

  std::size_t size() const { return candidates.size(); }
  std::size_t input_dim() const { return candidates.front().input_dim(); }
  std::size_t num_classes() const { return candidates.front().num_classes(); }
};

void validate(const SweenModel& model);

std::vector<double> ensemble_forward(std::span<const MlpParams> candidates,
                                     const EnsembleWeights& weights,
                                     std::span<const double> x);

// sum_k w_k f(x; theta_k) as a ProbabilityFunction. Zero-weight candidates
// are skipped and do not count toward `cost`. References `candidates`.
ProbabilityFunction ensemble_function(std::span<const MlpParams> candidates,
                                      const EnsembleWeights& weights);

enum class NoiseSharing {
  // One noise stream feeds the whole ensemble (smooth the ensemble).
  kShared,
  // Candidate k reads candidate_index = base + k (ensemble the smoothings).
  // vote_counts is left empty in this mode.
  kPerCandidate,
};

MCEstimate sween_smoothed_mc(const SweenModel& model, std::span<const double> x,
                             std::uint64_t samples, const NoiseStreamKey& key_base,
                             NoiseSharing sharing);

// Per point i and candidate k, the s-sample MC mean of candidate k's
// probability for the true label y_i, with delta_ijk keyed (seed, i, j, k).
// This fixes the noise so the empirical risk becomes a deterministic convex
// function of the weights.
struct RiskTable {
  std::size_t num_points = 0;
  std::size_t num_candidates = 0;
  std::vector<double> true_class_mean;  // num_points x num_candidates

  double at(std::size_t i, std::size_t k) const {
    return true_class_mean[i * num_candidates + k];
  }
};

RiskTable build_risk_table(std::span<const MlpParams> candidates,
                           const Dataset& eval_set, double sigma,
                           std::uint64_t samples, std::uint64_t seed);

// Mean of -ln(max(sum_k w_k table(i,k), 1e-12)).
double risk_from_table(const RiskTable& table, std::span<const double> w);

double empirical_risk(std::span<const MlpParams> candidates,
                      const EnsembleWeights& weights, const Dataset& eval_set,
                      double sigma, std::uint64_t samples, std::uint64_t seed);

enum class SolveMode { kErm, kStreaming };

struct SolveConfig {
  SolveMode mode = SolveMode::kErm;
  std::uint64_t samples = 16;
  int epochs = 2000;
  // Erm mode starts exponentiated gradient here and halves on any increase.
  double learning_rate = 0.5;
  std::uint64_t seed = 0;
};

struct SolveTrace {
  std::vector<double> objective;
  int epochs_run = 0;
};

EnsembleWeights solve_weights(std::span<const MlpParams> candidates,
                              const Dataset& eval_set, double sigma,
                              const SolveConfig& cfg, SolveTrace* trace = nullptr);

struct AdaptiveConfig {
  double alpha = 0.05;
  double threshold = 0.95;
  std::uint64_t s_local = 100;
};

struct AdaptivePrediction {
  std::size_t prediction = 0;
  std::vector<double> class_means;
  // Number of candidates evaluated, in weight-descending order.
  std::size_t prefix_len = 0;
  std::uint64_t evals = 0;
  std::vector<std::size_t> order;
};

// Candidate visiting order: weight descending, index ascending on ties,
// zero weights excluded.
std::vector<std::size_t> adaptive_order(const EnsembleWeights& weights);

// Early-exit evaluation of the weighted ensemble. The i-th visited
// candidate (1-based) gets an s_local-sample smoothed estimate on noise
// candidate_index = key_base.candidate_index + i, which keeps the local
// estimates off the stream certification reads at offset 0.
AdaptivePrediction adaptive_predict(const SweenModel& model,
                                    std::span<const double> x,
                                    const AdaptiveConfig& cfg,
                                    const NoiseStreamKey& key_base);

struct AdaptiveCertification {
  CertificationResult result;
  std::size_t prefix_len = 0;
};

// Certifies the sub-ensemble chosen by adaptive_predict (weights
// renormalised). `evals` includes the adaptive phase.
AdaptiveCertification adaptive_certify(const SweenModel& model,
                                       std::span<const double> x,
                                       const AdaptiveConfig& cfg,
                                       const CertifyParams& params,
                                       const NoiseStreamKey& key_base);

// Trains candidate k on `train` with seed train_cfg.seed + k and noise
// `sigma`, then solves the weights on `weight_eval`.
SweenModel sween_pipeline(const Dataset& train, const Dataset& weight_eval,
                          std::span<const std::vector<std::size_t>> archs,
                          TrainConfig train_cfg, const SolveConfig& solve_cfg,
                          double sigma);

struct WeightsFile {
  double sigma = 0.0;
  std::vector<std::string> candidates;
  std::vector<double> weights;
};

void save_weights_file(const WeightsFile& file, const std::filesystem::path& path);
WeightsFile load_weights_file(const std::filesystem::path& path);

// Loads the weights file and every candidate it names; relative candidate
// paths resolve against the weights file's directory.
SweenModel load_sween_model(const std::filesystem::path& weights_path);

}  // namespace sween
