#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sween/datasets.hpp"

namespace sween {

enum class Activation { kRelu, kIdentity };

// Dense layer y = act(W x + b); W is out_dim x in_dim, row-major.
struct DenseLayer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<double> weights;
  std::vector<double> bias;
  Activation activation = Activation::kRelu;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Multilayer perceptron whose final layer is followed by softmax, so the
// output is a point on the probability simplex.
struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.front().in_dim; }
  std::size_t num_classes() const { return layers.back().out_dim; }
  std::vector<std::size_t> arch() const;
  std::size_t num_parameters() const;

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

// Zero-initialised network for `arch` = {input, hidden..., classes}; hidden
// layers use relu, the last layer identity.
MlpParams make_mlp(std::span<const std::size_t> arch);

// Throws kInvalidParameter if layer dims do not chain.
void validate(const MlpParams& model);

std::vector<double> forward(const MlpParams& model, std::span<const double> x);

// Allocation-free variant for hot loops; `out` must have num_classes slots.
void forward_into(const MlpParams& model, std::span<const double> x,
                  std::span<double> out);

// Lowest index wins ties.
std::size_t argmax(std::span<const double> v);

// Cross-entropy -ln p_label at x; accumulates d loss / d params into `grad`
// (same shape as `model`).
double loss_and_gradient(const MlpParams& model, std::span<const double> x,
                         std::size_t label, MlpParams& grad);

struct TrainConfig {
  double sigma = 0.0;
  int epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  std::vector<int> lr_decay_epochs;
  double lr_decay_factor = 0.1;
  std::uint64_t seed = 0;
};

// Minibatch SGD on cross-entropy with Gaussian data augmentation: each
// example gets one fresh noise draw per epoch, keyed (seed, example, epoch).
// `loss_history`, when given, receives the mean loss of every epoch.
MlpParams train_gaussian_aug(const Dataset& train,
                             std::span<const std::size_t> arch,
                             const TrainConfig& cfg,
                             std::vector<double>* loss_history = nullptr);

double clean_accuracy(const MlpParams& model, const Dataset& data);

void save_model(const MlpParams& model, const std::filesystem::path& path);
MlpParams load_model(const std::filesystem::path& path);

}  // namespace sween
